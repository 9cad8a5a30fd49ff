"""HTTP search service over immutable snapshots.

Four query modes: image upload (embedded live with the built-in extractor),
raw embedding vector, similar-by-id, and context text. Plus element
metadata lookups and a health endpoint that declares index sizes,
parameters, and the analysis assumptions baked into the snapshots.

All request handling is read-only against a :class:`ServiceState` held in
a single-slot container; replacing the slot swaps every index atomically,
so no request ever observes a half-built snapshot. Errors share one JSON
shape: ``{"code": int, "message": str, "detail": ...}``.
"""

from __future__ import annotations

import json
import logging
import os
import sys
import threading
import time
from collections import deque
from dataclasses import dataclass, field, fields as dataclass_fields
from http import HTTPStatus
from pathlib import Path

import numpy as np
from fastapi import FastAPI, File, Query, Request, UploadFile
from fastapi.exceptions import HTTPException, RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel
from starlette.exceptions import HTTPException as StarletteHTTPException

from .alto import GraphicalElementRecord, read_elements_jsonl
from .classifier import Label, TrainedModel
from .embeddings import MOCK_MODEL_TAG, PreprocessProfile, mock_embed, normalize
from .hnsw import HnswIndex
from .iiif import SizePolicy, build_iiif_url, plan_download, split_endpoint
from .raster import DecodeError, decode_image
from .textindex import TextIndex

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

MAX_K = 100
MAX_UPLOAD_BYTES = 10 * 1024 * 1024

# Analysis choices that affect results but are not discoverable from the
# API itself; surfaced so clients can reproduce server-side scoring.
ANALYSIS_ASSUMPTIONS = {
    "tokenizer": "unicode alphanumeric runs, lowercased, no stemming, no stopwords",
    "tf_weighting": "raw term frequency for query and document",
    "idf_weighting": "ln((N+1)/(df+1)) + 1",
    "embedding_normalization": "all vectors L2-normalized at import",
    "tie_break": "equal scores ordered by ascending element_id",
}


@dataclass
class ServiceState:
    """Everything a request needs, loaded once and treated as immutable."""

    elements: dict[str, GraphicalElementRecord] = field(default_factory=dict)
    indexes: dict[str, HnswIndex] = field(default_factory=dict)
    text_index: TextIndex = field(default_factory=TextIndex)
    default_model: str = MOCK_MODEL_TAG
    mock_profile: PreprocessProfile = PreprocessProfile.SQUASH_256
    classifier_tag: str | None = None
    predicted_labels: dict[str, str] = field(default_factory=dict)
    iiif_scheme: str = "https://"
    iiif_prefix: str = "www.nb.no/services/image/resolver/"
    size_policy: SizePolicy = field(default_factory=SizePolicy)


class StateContainer:
    """Single mutable slot; assignment is atomic, readers grab a reference
    once per request and never see a mix of old and new state."""

    def __init__(self, state: ServiceState):
        self.state = state

    def swap(self, state: ServiceState) -> None:
        self.state = state


class VectorQuery(BaseModel):
    vector: list[float]
    model: str | None = None
    k: int = 50


class _Throttle:
    """Sliding one-second window over request timestamps."""

    def __init__(self, rate_per_s: float):
        self.limit = max(1, int(rate_per_s))
        self._lock = threading.Lock()
        self._stamps: deque[float] = deque()

    def allow(self) -> bool:
        now = time.monotonic()
        with self._lock:
            while self._stamps and now - self._stamps[0] > 1.0:
                self._stamps.popleft()
            if len(self._stamps) >= self.limit:
                return False
            self._stamps.append(now)
            return True


def _error(status: int, detail=None) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"code": status, "message": HTTPStatus(status).phrase, "detail": detail},
    )


def _clamp_k(k: int) -> int:
    return min(k, MAX_K)


def _result_item(state: ServiceState, element_id: str, score: float) -> dict:
    record = state.elements.get(element_id)
    item: dict = {
        "element_id": element_id,
        "score": score,
        "page_urn": None,
        "box": None,
        "iiif_url": None,
        "predicted_label": state.predicted_labels.get(element_id),
    }
    if record is not None:
        item["page_urn"] = record.page_urn
        item["box"] = {
            "left": record.box.left,
            "top": record.box.top,
            "width": record.box.width,
            "height": record.box.height,
        }
        request = plan_download(
            record, state.size_policy, scheme=state.iiif_scheme, prefix=state.iiif_prefix
        )
        if request is not None:
            item["iiif_url"] = build_iiif_url(request)
    return item


def _search_response(state: ServiceState, results, model: str, started: float) -> dict:
    return {
        "results": [_result_item(state, r.element_id, r.score) for r in results],
        "model": model,
        "took_ms": int((time.perf_counter() - started) * 1000),
    }


def _index_for(state: ServiceState, model: str | None) -> tuple[str, HnswIndex]:
    tag = model if model else state.default_model
    index = state.indexes.get(tag)
    if index is None:
        raise HTTPException(status_code=404, detail=f"no index for model tag {tag!r}")
    return tag, index


def create_app(
    state: ServiceState,
    *,
    cors_origin: str = "*",
    rate_limit_rps: float | None = None,
) -> FastAPI:
    app = FastAPI(title="platesearch", docs_url=None, redoc_url=None)
    container = StateContainer(state)
    app.state.container = container

    app.add_middleware(
        CORSMiddleware,
        allow_origins=[cors_origin],
        allow_methods=["GET", "POST"],
        allow_headers=["*"],
    )

    if rate_limit_rps is not None:
        throttle = _Throttle(rate_limit_rps)

        @app.middleware("http")
        async def limit_requests(request: Request, call_next):
            if not throttle.allow():
                return _error(429, "rate limit exceeded")
            return await call_next(request)

    @app.exception_handler(StarletteHTTPException)
    async def on_http_error(request: Request, exc: StarletteHTTPException):
        return _error(exc.status_code, exc.detail)

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return _error(422, json.loads(json.dumps(exc.errors(), default=str)))

    @app.get("/health")
    def health():
        s = container.state
        indexes = {}
        for tag in sorted(s.indexes):
            index = s.indexes[tag]
            p = index.params
            indexes[tag] = {
                "size": len(index),
                "dim": index.dim,
                "params": {
                    "M": p.M,
                    "M0": p.m0,
                    "ef_construction": p.ef_construction,
                    "ef_search": p.ef_search,
                    "level_lambda": p.mult,
                    "rng_seed": p.rng_seed,
                },
            }
        return {
            "status": "ok",
            "counts": {
                "elements": len(s.elements),
                "text_documents": len(s.text_index),
            },
            "models": sorted(s.indexes),
            "default_model": s.default_model,
            "indexes": indexes,
            "classifier": {
                "loaded": s.classifier_tag is not None,
                "feature_tag": s.classifier_tag,
            },
            "assumptions": dict(ANALYSIS_ASSUMPTIONS),
        }

    @app.get("/elements/{element_id}")
    def element_metadata(element_id: str):
        s = container.state
        record = s.elements.get(element_id)
        if record is None:
            raise HTTPException(status_code=404, detail=f"unknown element {element_id!r}")
        item = _result_item(s, element_id, 0.0)
        del item["score"]
        item["context_text"] = record.context_text
        return item

    @app.get("/similar/{element_id}")
    def similar(element_id: str, model: str | None = None, k: int = Query(50, ge=1)):
        started = time.perf_counter()
        s = container.state
        tag, index = _index_for(s, model)
        vector = index.vector_of(element_id)
        if vector is None:
            raise HTTPException(
                status_code=404,
                detail=f"element {element_id!r} not indexed under {tag!r}",
            )
        results = index.search(vector, _clamp_k(k))
        return _search_response(s, results, tag, started)

    @app.post("/search/vector")
    def search_vector(query: VectorQuery):
        started = time.perf_counter()
        s = container.state
        tag, index = _index_for(s, query.model)
        values = np.asarray(query.vector, dtype=np.float64)
        if values.ndim != 1 or values.size != index.dim:
            raise HTTPException(
                status_code=422,
                detail=f"vector has {values.size} dims, index {tag!r} expects {index.dim}",
            )
        if not np.all(np.isfinite(values)):
            raise HTTPException(status_code=422, detail="vector contains non-finite values")
        try:
            unit = normalize(values)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        results = index.search(unit, _clamp_k(max(1, query.k)))
        return _search_response(s, results, tag, started)

    @app.post("/search/image")
    def search_image(
        image: UploadFile = File(...),
        model: str | None = None,
        k: int = Query(50, ge=1),
    ):
        started = time.perf_counter()
        s = container.state
        tag = model if model else s.default_model
        if tag != MOCK_MODEL_TAG:
            raise HTTPException(
                status_code=422,
                detail=f"model {tag!r} cannot embed server-side; "
                "POST /search/vector with a precomputed vector instead",
            )
        payload = image.file.read(MAX_UPLOAD_BYTES + 1)
        if len(payload) > MAX_UPLOAD_BYTES:
            raise HTTPException(status_code=400, detail="image exceeds 10 MiB")
        try:
            raster = decode_image(payload)
        except DecodeError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        _, index = _index_for(s, tag)
        query = mock_embed(raster, s.mock_profile)
        results = index.search(query.values, _clamp_k(k))
        return _search_response(s, results, tag, started)

    @app.get("/search/text")
    def search_text(q: str = Query(...), k: int = Query(50, ge=1)):
        started = time.perf_counter()
        s = container.state
        if not q.strip():
            raise HTTPException(status_code=400, detail="empty query")
        results = s.text_index.search(q, _clamp_k(k))
        return _search_response(s, results, "text", started)

    return app


# Configuration: TOML or JSON file, every key overridable through
# PLATESEARCH_<NAME> environment variables.


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8100
    elements: str = "elements.jsonl"
    snapshot_dir: str = "snapshots"
    default_model: str = MOCK_MODEL_TAG
    classifier: str = ""
    mock_profile: str = "squash_256"
    iiif_endpoint: str = "https://www.nb.no/services/image/resolver/"
    max_side: int = 512
    cors_origin: str = "*"
    rate_limit_rps: float = 0.0


def load_service_config(path: Path | None) -> ServiceConfig:
    """Read TOML (default) or JSON config; missing file means defaults.
    Environment variables PLATESEARCH_<FIELD> override file values."""
    raw: dict = {}
    if path is not None:
        path = Path(path)
        text = path.read_bytes()
        if path.suffix == ".json":
            raw = json.loads(text.decode("utf-8"))
        else:
            raw = tomllib.loads(text.decode("utf-8"))
    config = ServiceConfig()
    for f in dataclass_fields(ServiceConfig):
        value = raw.get(f.name)
        env = os.environ.get(f"PLATESEARCH_{f.name.upper()}")
        if env is not None:
            value = env
        if value is None:
            continue
        setattr(config, f.name, _coerce(value, getattr(config, f.name)))
    return config


def _coerce(value, default):
    if isinstance(default, bool):
        return str(value).lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return str(value)


def build_state(config: ServiceConfig) -> ServiceState:
    """Load every snapshot named by the config into one ServiceState."""
    elements: dict[str, GraphicalElementRecord] = {}
    elements_path = Path(config.elements)
    if elements_path.exists():
        for record in read_elements_jsonl(elements_path):
            elements[record.element_id] = record

    indexes: dict[str, HnswIndex] = {}
    snapshot_dir = Path(config.snapshot_dir)
    if snapshot_dir.is_dir():
        for manifest in sorted(snapshot_dir.glob("vectors-*.manifest.json")):
            prefix = manifest.parent / manifest.name[: -len(".manifest.json")]
            index = HnswIndex.load(prefix)
            tag = index.model or prefix.name[len("vectors-") :]
            indexes[tag] = index
            logger.info("loaded index %s: %d vectors, dim %d", tag, len(index), index.dim)

    text_prefix = snapshot_dir / "text"
    if (snapshot_dir / "text.manifest.json").exists():
        text_index = TextIndex.load(text_prefix)
    else:
        text_index = TextIndex()

    classifier_tag: str | None = None
    predicted: dict[str, str] = {}
    if config.classifier:
        payload = json.loads(Path(config.classifier).read_text(encoding="utf-8"))
        model = TrainedModel.from_dict(payload["model"])
        classifier_tag = payload.get("feature_tag", config.default_model)
        index = indexes.get(classifier_tag)
        if index is not None and len(index):
            codes = model.predict(index.matrix.astype(np.float64))
            for element_id, code in zip(index.ids, codes.tolist()):
                try:
                    predicted[element_id] = Label(code).display_name
                except ValueError:
                    predicted[element_id] = str(code)
        else:
            logger.warning(
                "classifier trained on %r but no such index is loaded", classifier_tag
            )

    scheme, prefix = split_endpoint(config.iiif_endpoint)
    return ServiceState(
        elements=elements,
        indexes=indexes,
        text_index=text_index,
        default_model=config.default_model,
        mock_profile=PreprocessProfile.from_name(config.mock_profile),
        classifier_tag=classifier_tag,
        predicted_labels=predicted,
        iiif_scheme=scheme,
        iiif_prefix=prefix,
        size_policy=SizePolicy(max_side=config.max_side),
    )
