"""Operator command line: the pipeline from ALTO files to a running service.

Subcommands mirror the pipeline stages::

    ingest -> fetch -> embed -> index -> train / eval / serve

Logs go to stderr, data to files or stdout. Exit codes: 0 success,
1 usage error, 2 data error (malformed inputs), 3 I/O or network failure.
Every command is deterministic given identical inputs and flags; anything
randomized takes a ``--seed``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import signal
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .alto import IngestStats, read_elements_jsonl, scan_alto_dir, write_elements_jsonl
from .classifier import Label, complexity_grid, fit_logistic, nested_cv
from .embeddings import (
    MOCK_MODEL_TAG,
    EmbeddingImportError,
    EmbeddingStore,
    PreprocessProfile,
    import_embeddings,
    mock_embed,
    write_embeddings_jsonl,
)
from .evaluation import TransformRanges, run_retrieval_eval
from .hnsw import HnswIndex, HnswParams
from .iiif import (
    FetchConfig,
    ImageCache,
    RateLimiter,
    SizePolicy,
    TransportError,
    fetch_elements,
    split_endpoint,
)
from .raster import DecodeError, decode_image
from .service import build_state, create_app, load_service_config
from .textindex import TextIndex

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_IO = 3

DEFAULT_ENDPOINT = "https://www.nb.no/services/image/resolver/"


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for data errors
    # here, so remap.
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _cores() -> int:
    return os.cpu_count() or 1


def cmd_ingest(args: argparse.Namespace) -> int:
    root = Path(args.alto_dir)
    if not root.is_dir():
        print(f"not a directory: {root}", file=sys.stderr)
        return EXIT_IO
    stats = IngestStats()
    count = write_elements_jsonl(scan_alto_dir(root, stats), Path(args.out))
    errors = stats.parse_errors + stats.block_errors
    print(
        f"pages {stats.pages}  elements {count}  "
        f"parse_errors {stats.parse_errors}  block_errors {stats.block_errors}  "
        f"skipped_unknown {stats.skipped_unknown}"
    )
    if args.strict and errors:
        print(f"strict mode: {errors} errors", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_fetch(args: argparse.Namespace) -> int:
    records = read_elements_jsonl(Path(args.elements))
    scheme, prefix = split_endpoint(args.endpoint)
    config = FetchConfig(
        timeout_s=args.timeout,
        rate_limiter=RateLimiter(args.rate) if args.rate > 0 else None,
    )
    report = fetch_elements(
        records,
        ImageCache(Path(args.cache)),
        policy=SizePolicy(max_side=args.max_side),
        config=config,
        scheme=scheme,
        prefix=prefix,
        jobs=args.jobs,
    )
    print(
        f"total {report.total}  fetched {report.fetched}  cached {report.cached}  "
        f"discarded {report.discarded}  errors {report.errors}"
    )
    if report.errors:
        for element_id in report.error_ids:
            print(f"failed: {element_id}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def cmd_embed(args: argparse.Namespace) -> int:
    if args.model != MOCK_MODEL_TAG:
        print(
            f"only {MOCK_MODEL_TAG!r} embeds locally; other model tags are "
            "imported from externally computed JSONL",
            file=sys.stderr,
        )
        return EXIT_USAGE
    profile = PreprocessProfile.from_name(args.profile)
    records = read_elements_jsonl(Path(args.elements))
    cache = ImageCache(Path(args.cache))

    def embed_one(record):
        payload = cache.get(record.element_id)
        if payload is None:
            return record.element_id, None
        vector = mock_embed(decode_image(payload), profile)
        return record.element_id, dataclasses.replace(vector, element_id=record.element_id)

    vectors = []
    missing = 0
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        for element_id, vector in pool.map(embed_one, records):
            if vector is None:
                logger.warning("no cached image for %s", element_id)
                missing += 1
            else:
                vectors.append(vector)
    count = write_embeddings_jsonl(vectors, Path(args.out))
    print(f"embedded {count}  missing {missing}")
    return EXIT_OK


def cmd_index(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    result = import_embeddings(Path(args.embeddings))
    if result.errors:
        for err in result.errors:
            logger.warning("embedding line %d: %s", err.line, err.message)
    stores = EmbeddingStore.from_vectors(result.vectors)
    for tag in sorted(stores):
        store = stores[tag]
        params = HnswParams(
            M=args.m, ef_construction=args.ef_construction,
            ef_search=args.ef_search, rng_seed=args.seed,
        )
        index = HnswIndex(dim=store.dim, params=params, model=tag)
        matrix = store.matrix
        for row, element_id in enumerate(store.ids):
            index.insert(element_id, matrix[row])
        index.save(out_dir / f"vectors-{tag}")
        print(f"index {tag}: {len(index)} vectors, dim {store.dim}")

    if args.text:
        text_index = TextIndex()
        for record in read_elements_jsonl(Path(args.text)):
            text_index.add_document(record.element_id, record.context_text)
        text_index.save(out_dir / "text")
        print(f"text index: {len(text_index)} documents, {text_index.term_count} terms")
    return EXIT_OK


def _read_labels(path: Path) -> list[tuple[str, int]]:
    rows: list[tuple[str, int]] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                rows.append((str(row["element_id"]), int(Label.from_display_name(row["label"]))))
            except (KeyError, ValueError, json.JSONDecodeError) as exc:
                raise ValueError(f"{path}:{line_no}: bad label row: {exc}") from exc
    return rows


def cmd_train(args: argparse.Namespace) -> int:
    labeled = _read_labels(Path(args.labels))
    if not labeled:
        print("no labelled examples", file=sys.stderr)
        return EXIT_DATA
    result = import_embeddings(Path(args.embeddings))
    stores = EmbeddingStore.from_vectors(result.vectors)
    if not stores:
        print("no embeddings to train on", file=sys.stderr)
        return EXIT_DATA

    ids = [eid for eid, _ in labeled]
    labels = np.array([code for _, code in labeled], dtype=np.int64)
    features = {}
    for tag, store in stores.items():
        rows = []
        for eid in ids:
            values = store.get(eid)
            if values is None:
                print(f"label {eid!r} has no {tag!r} embedding", file=sys.stderr)
                return EXIT_DATA
            rows.append(values.astype(np.float64))
        features[tag] = np.stack(rows)

    report = nested_cv(
        features, labels, outer_folds=args.outer, inner_folds=args.inner, seed=args.seed
    )
    Path(args.report).write_text(
        json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    print(f"mean F1 {report.mean_f1:.4f}  sigma {report.std_f1:.4f}")
    for tag in report.tags:
        print(f"  {tag}: selected in {report.selections[tag]}/{report.outer_folds} folds")

    if args.model_out:
        # Final model: the most-selected tag, with that tag's most-selected
        # C (ties to the smaller value), refit on the full dataset.
        tag = max(report.tags, key=lambda t: (report.selections[t], t))
        chosen = [f.selected_complexity for f in report.folds if f.selected_tag == tag]
        c = max(set(chosen), key=lambda v: (chosen.count(v), -v))
        model = fit_logistic(features[tag], labels, c)
        payload = {"feature_tag": tag, "complexity": c, "model": model.to_dict()}
        Path(args.model_out).write_text(
            json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        print(f"final model: {tag} C={c:g} -> {args.model_out}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    raw = {}
    if args.config:
        path = Path(args.config)
        if path.suffix == ".json":
            raw = json.loads(path.read_text(encoding="utf-8"))
        else:
            raw = tomllib.loads(path.read_text(encoding="utf-8"))

    snapshot = args.snapshot or raw.get("snapshot")
    cache_dir = args.cache or raw.get("cache")
    if not snapshot or not cache_dir:
        print("need a snapshot prefix and cache dir (flags or config)", file=sys.stderr)
        return EXIT_USAGE
    seed = args.seed if args.seed is not None else int(raw.get("seed", 0))
    profile = PreprocessProfile.from_name(
        args.profile or raw.get("profile", PreprocessProfile.SQUASH_256.profile_name)
    )
    transform = raw.get("transform", {})
    ranges = TransformRanges(
        max_crop=float(transform.get("max_crop", 0.15)),
        max_rotation_deg=float(transform.get("max_rotation_deg", 10.0)),
        scale_low=float(transform.get("scale_low", 0.8)),
        scale_high=float(transform.get("scale_high", 1.2)),
    )
    ks = [int(k) for k in raw.get("ks", [1, 5, 10, 50])]

    index = HnswIndex.load(Path(snapshot))
    cache = ImageCache(Path(cache_dir))
    images = {}
    for element_id in index.ids:
        payload = cache.get(element_id)
        if payload is not None:
            images[element_id] = decode_image(payload)
    if not images:
        print("no cached images for any indexed element", file=sys.stderr)
        return EXIT_DATA

    p = index.params
    report = run_retrieval_eval(
        images,
        index.search,
        targets=sorted(index.ids),
        embedder=lambda img: mock_embed(img, profile).values,
        ranges=ranges,
        seed=seed,
        ks=ks,
        index_meta={
            "model": index.model,
            "count": len(index),
            "dim": index.dim,
            "params": {
                "M": p.M,
                "M0": p.m0,
                "ef_construction": p.ef_construction,
                "ef_search": p.ef_search,
                "rng_seed": p.rng_seed,
            },
        },
    )
    if args.report:
        Path(args.report).write_text(report.to_json(), encoding="utf-8")
    print(report.to_text(), end="")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    config = load_service_config(Path(args.config) if args.config else None)
    state = build_state(config)
    app = create_app(
        state,
        cors_origin=config.cors_origin,
        rate_limit_rps=config.rate_limit_rps if config.rate_limit_rps > 0 else None,
    )

    def reload_snapshots(signum, frame):
        logger.info("reloading snapshots")
        app.state.container.swap(build_state(config))

    try:
        signal.signal(signal.SIGHUP, reload_snapshots)
    except (AttributeError, ValueError):
        pass  # non-posix or non-main thread

    host = args.host or config.host
    port = args.port if args.port is not None else config.port
    logger.info("serving on %s:%d", host, port)
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="platesearch", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse ALTO XML into element records")
    p.add_argument("--alto-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--strict", action="store_true", help="exit 2 on any parse error")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fetch", help="download element regions into the cache")
    p.add_argument("--elements", required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--endpoint", default=DEFAULT_ENDPOINT)
    p.add_argument("--max-side", type=int, default=512)
    p.add_argument("--rate", type=float, default=10.0, help="requests/second, 0 = unlimited")
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--jobs", type=int, default=_cores())
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("embed", help="compute built-in embeddings for cached images")
    p.add_argument("--elements", required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--model", default=MOCK_MODEL_TAG)
    p.add_argument("--profile", default=PreprocessProfile.SQUASH_256.profile_name)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=_cores())
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("index", help="build vector and text index snapshots")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--text", help="elements JSONL for the context text index")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--m", type=int, default=16)
    p.add_argument("--ef-construction", type=int, default=100)
    p.add_argument("--ef-search", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("train", help="nested cross-validation over embedding tags")
    p.add_argument("--labels", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--model-out", help="write the refit final model JSON here")
    p.add_argument("--outer", type=int, default=20)
    p.add_argument("--inner", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="retrieval accuracy under perturbations")
    p.add_argument("--config", help="TOML/JSON eval config")
    p.add_argument("--snapshot", help="index snapshot prefix (overrides config)")
    p.add_argument("--cache", help="image cache dir (overrides config)")
    p.add_argument("--profile")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--report", help="write the JSON report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP search service")
    p.add_argument("--config", help="TOML/JSON service config")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (EmbeddingImportError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TransportError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
