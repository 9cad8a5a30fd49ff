"""Visual search over graphical elements extracted from digitised books.

The pipeline: parse ALTO layout XML into element records, fetch the image
regions through a IIIF endpoint into a local cache, embed them, index the
vectors in a navigable small-world graph next to a TF-IDF index over the
surrounding text, and serve nearest-neighbour search over HTTP. A small
logistic-regression head filters segmentation noise from the results.
"""

from .alto import (
    AltoParseError,
    BoundingBox,
    GraphicalElementRecord,
    IngestStats,
    build_context,
    extract_elements,
    format_element_id,
    parse_alto_page,
    parse_element_id,
    read_elements_jsonl,
    scan_alto_dir,
    write_elements_jsonl,
)
from .classifier import (
    CvReport,
    FilterReport,
    Label,
    TrainedModel,
    complexity_grid,
    estimate_distribution,
    filter_anomalies,
    fit_logistic,
    micro_f1,
    nested_cv,
)
from .embeddings import (
    EmbeddingStore,
    EmbeddingVector,
    PreprocessProfile,
    cosine_similarity,
    import_embeddings,
    mock_embed,
    normalize,
    preprocess,
    write_embeddings_jsonl,
)
from .evaluation import (
    EVAL_TARGET_LABELS,
    RetrievalReport,
    TransformParams,
    TransformRanges,
    apply_transform,
    run_retrieval_eval,
    sample_transform,
    select_eval_targets,
    top_n_accuracy,
)
from .hnsw import HnswIndex, HnswParams, ScoredId, brute_force_knn, recall_at_k
from .iiif import (
    FetchConfig,
    IiifRequest,
    ImageCache,
    RateLimiter,
    SizePolicy,
    aspect_ratio_ok,
    build_iiif_url,
    fetch_elements,
    parse_iiif_url,
    plan_download,
)
from .raster import RasterImage, decode_image, encode_jpeg, encode_png
from .service import ServiceConfig, build_state, create_app, load_service_config
from .textindex import TextIndex, tokenize

__version__ = "0.1.0"

__all__ = [
    "AltoParseError",
    "BoundingBox",
    "CvReport",
    "EmbeddingStore",
    "EmbeddingVector",
    "FetchConfig",
    "FilterReport",
    "GraphicalElementRecord",
    "HnswIndex",
    "HnswParams",
    "IiifRequest",
    "ImageCache",
    "IngestStats",
    "Label",
    "PreprocessProfile",
    "RasterImage",
    "RateLimiter",
    "EVAL_TARGET_LABELS",
    "RetrievalReport",
    "ScoredId",
    "ServiceConfig",
    "SizePolicy",
    "TextIndex",
    "TrainedModel",
    "TransformParams",
    "TransformRanges",
    "apply_transform",
    "aspect_ratio_ok",
    "brute_force_knn",
    "build_context",
    "build_iiif_url",
    "build_state",
    "complexity_grid",
    "cosine_similarity",
    "create_app",
    "estimate_distribution",
    "extract_elements",
    "filter_anomalies",
    "fit_logistic",
    "format_element_id",
    "import_embeddings",
    "load_service_config",
    "micro_f1",
    "mock_embed",
    "nested_cv",
    "normalize",
    "parse_alto_page",
    "parse_element_id",
    "parse_iiif_url",
    "plan_download",
    "preprocess",
    "read_elements_jsonl",
    "recall_at_k",
    "run_retrieval_eval",
    "sample_transform",
    "select_eval_targets",
    "scan_alto_dir",
    "top_n_accuracy",
    "tokenize",
    "write_elements_jsonl",
    "write_embeddings_jsonl",
]
