"""Shared fixtures: synthetic image corpora, a local IIIF server, ALTO trees.

The desk corpus is 200 colour-tile images (random 8x8 grids upscaled with
nearest-neighbour). Tiles rather than iid noise: the built-in extractor
averages 4x4 cells, and pure noise collapses to near-identical grey vectors,
which would make every retrieval test vacuous.
"""

from __future__ import annotations

import hashlib
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np
import pytest

from platesearch.embeddings import EmbeddingStore, mock_embed
from platesearch.hnsw import HnswIndex, HnswParams, brute_force_knn
from platesearch.raster import RasterImage, encode_jpeg

_ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_tile_image(rng: np.random.Generator, size: int = 96, grid: int = 8) -> RasterImage:
    """Random colour-tile image, visually distinctive and crop-stable."""
    tiles = rng.integers(0, 256, size=(grid, grid, 3), dtype=np.uint8)
    factor = max(1, size // grid)
    pixels = np.repeat(np.repeat(tiles, factor, axis=0), factor, axis=1)[:size, :size]
    return RasterImage.from_array(pixels)


@pytest.fixture(scope="session")
def desk_corpus() -> dict[str, RasterImage]:
    rng = np.random.default_rng(42)
    return {f"plate-{i:04d}": make_tile_image(rng) for i in range(200)}


@pytest.fixture(scope="session")
def desk_index(desk_corpus) -> tuple[HnswIndex, EmbeddingStore]:
    """Exact-mode index over the desk corpus (ef_search = corpus size)."""
    store = EmbeddingStore("mock64", 64)
    for element_id in sorted(desk_corpus):
        vec = mock_embed(desk_corpus[element_id])
        store.add(element_id, vec.values)
    index = HnswIndex(
        dim=64,
        params=HnswParams(ef_search=len(desk_corpus), rng_seed=11),
        model="mock64",
    )
    matrix = store.matrix
    for row, element_id in enumerate(store.ids):
        index.insert(element_id, matrix[row])
    return index, store


@dataclass
class HnswBench:
    index: HnswIndex
    store: EmbeddingStore
    queries: np.ndarray
    exact10: list[frozenset[str]]
    build_seconds: float
    exact_seconds: float


@pytest.fixture(scope="session")
def hnsw_benchmark() -> HnswBench:
    """10k random unit vectors, dim 64, plus exact top-10 sets for 1000
    queries. Built once; the build is timed for the runtime budget check."""
    n, dim, n_queries = 10_000, 64, 1000
    rng = np.random.default_rng(2024)
    vectors = rng.standard_normal((n, dim)).astype(np.float32)
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    queries = rng.standard_normal((n_queries, dim)).astype(np.float32)
    queries /= np.linalg.norm(queries, axis=1, keepdims=True)

    store = EmbeddingStore("bench", dim)
    ids = [f"v{i:05d}" for i in range(n)]
    for i, element_id in enumerate(ids):
        store.add(element_id, vectors[i])

    index = HnswIndex(dim=dim, params=HnswParams(rng_seed=5), model="bench")
    start = time.perf_counter()
    for i, element_id in enumerate(ids):
        index.insert(element_id, vectors[i])
    build_seconds = time.perf_counter() - start

    start = time.perf_counter()
    exact10 = [
        frozenset(r.element_id for r in brute_force_knn(store, query, 10))
        for query in queries
    ]
    exact_seconds = time.perf_counter() - start
    return HnswBench(index, store, queries, exact10, build_seconds, exact_seconds)


# ---------------------------------------------------------------------------
# Local IIIF fixture server


def _server_image(identifier: str, region: str, width: int, height: int) -> RasterImage:
    # Content keyed by (identifier, region) so re-fetches are byte-stable
    # and distinct elements look different.
    digest = hashlib.sha256(f"{identifier}/{region}".encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
    tiles = rng.integers(0, 256, size=(4, 4, 3), dtype=np.uint8)
    pixels = np.repeat(
        np.repeat(tiles, (height + 3) // 4, axis=0), (width + 3) // 4, axis=1
    )[:height, :width]
    return RasterImage.from_array(pixels)


class _IiifHandler(BaseHTTPRequestHandler):
    def do_GET(self):  # noqa: N802 (http.server API)
        parts = self.path.lstrip("/").split("/")
        if len(parts) != 6 or parts[0] != "iiif":
            self.send_error(404)
            return
        identifier, region, size, _rotation, _filename = parts[1:]
        if "missing" in identifier:
            self.send_error(404)
            return
        try:
            width, height = (int(v) for v in size.split(","))
        except ValueError:
            self.send_error(400)
            return
        payload = encode_jpeg(_server_image(identifier, region, width, height))
        self.send_response(200)
        self.send_header("Content-Type", "image/jpeg")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, format, *args):  # noqa: A002
        pass


@pytest.fixture(scope="session")
def iiif_server():
    """Endpoint URL of a deterministic local IIIF responder."""
    server = ThreadingHTTPServer(("127.0.0.1", 0), _IiifHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/iiif/"
    server.shutdown()
    thread.join(timeout=5)


# ---------------------------------------------------------------------------
# ALTO fixture trees

_ALTO_TEMPLATE = """<?xml version="1.0" encoding="UTF-8"?>
<alto xmlns="http://www.loc.gov/standards/alto/ns-v2#">
  <Description>
    <sourceImageInformation>
      <fileName>{urn}.jp2</fileName>
    </sourceImageInformation>
  </Description>
  <Layout>
    <Page WIDTH="{page_w}" HEIGHT="{page_h}">
      <PrintSpace HPOS="0" VPOS="0" WIDTH="{page_w}" HEIGHT="{page_h}">
{blocks}
      </PrintSpace>
    </Page>
  </Layout>
</alto>
"""

_WORDS = (
    "en kat på taket gammel bok side tegning av fjell hav skip kart "
    "note musikk blomst fugl hest hund by gate hus kirke skog vinter"
).split()


def text_block_xml(text: str, left: int = 100, top: int = 100) -> str:
    strings = "".join(
        f'<String CONTENT="{w}" HPOS="{left + i * 40}" VPOS="{top}" WIDTH="36" HEIGHT="20"/>'
        for i, w in enumerate(text.split())
    )
    return (
        f'        <TextBlock HPOS="{left}" VPOS="{top}" WIDTH="600" HEIGHT="30">'
        f"<TextLine HPOS=\"{left}\" VPOS=\"{top}\" WIDTH=\"600\" HEIGHT=\"24\">{strings}</TextLine>"
        "</TextBlock>"
    )


def graphic_block_xml(left: int, top: int, width: int, height: int, kind: str = "GraphicalElement") -> str:
    return f'        <{kind} HPOS="{left}" VPOS="{top}" WIDTH="{width}" HEIGHT="{height}"/>'


def write_alto_tree(root: Path, n_pages: int, seed: int = 3) -> int:
    """Write a small ALTO corpus; returns the number of graphical elements."""
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    elements = 0
    for page_ix in range(n_pages):
        urn = f"URN:NBN:no-nb_digibok_77{page_ix:07d}_0001"
        blocks = []
        words = rng.choice(_WORDS, size=8)
        blocks.append(text_block_xml(" ".join(words)))
        for g in range(int(rng.integers(1, 3))):
            left = int(rng.integers(50, 900))
            top = int(rng.integers(200, 2000))
            width = int(rng.integers(150, 500))
            height = int(rng.integers(150, 500))
            kind = "Illustration" if (page_ix + g) % 3 == 0 else "GraphicalElement"
            blocks.append(graphic_block_xml(left, top, width, height, kind))
            elements += 1
        xml = _ALTO_TEMPLATE.format(
            urn=urn, page_w=1600, page_h=2600, blocks="\n".join(blocks)
        )
        (root / f"{urn}.xml").write_text(xml, encoding="utf-8")
    return elements


@pytest.fixture(scope="session")
def alto_corpus(tmp_path_factory) -> tuple[Path, int]:
    root = tmp_path_factory.mktemp("alto")
    count = write_alto_tree(root, n_pages=40, seed=3)
    return root, count
