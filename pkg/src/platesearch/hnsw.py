"""Hierarchical navigable small-world index over unit vectors, plus the
exact brute-force oracle.

The index is a multi-layer proximity graph: every node lives on layer 0,
and a geometrically thinning subset extends to higher layers. Queries
greedily descend from the top-layer entry point, then run a beam search on
layer 0. Similarity is cosine; vectors are expected pre-normalized, so the
internal distance is simply the negated dot product.

Determinism contract: the only randomness is the level draw (one uniform
per insert from a seeded PCG64), so a fixed seed and insertion order
reproduce the graph bit for bit, and snapshots round-trip byte-identically.
Ties everywhere break on ascending element id.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass
from heapq import heapify, heappop, heappush, heapreplace
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

logger = logging.getLogger(__name__)


class ScoredId(NamedTuple):
    element_id: str
    score: float


@dataclass(frozen=True)
class HnswParams:
    M: int = 16
    M0: int | None = None
    ef_construction: int = 100
    ef_search: int = 128
    level_lambda: float | None = None
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.M < 2:
            raise ValueError("M must be at least 2")
        if self.ef_construction < self.M:
            raise ValueError("ef_construction must be at least M")
        if self.ef_search < 1:
            raise ValueError("ef_search must be at least 1")

    @property
    def m0(self) -> int:
        return self.M0 if self.M0 is not None else 2 * self.M

    @property
    def mult(self) -> float:
        return self.level_lambda if self.level_lambda is not None else 1.0 / math.log(self.M)


def _batch_scores(matrix: np.ndarray, rows: np.ndarray, query: np.ndarray) -> np.ndarray:
    # Single scoring routine shared by index search and the brute-force
    # oracle so equal candidates get bitwise-equal scores. np.sum's pairwise
    # reduction depends only on the row length, making a row's score
    # independent of which other rows are gathered with it; BLAS matvec
    # kernels do not give that guarantee.
    return np.sum(matrix[rows].astype(np.float64) * query.astype(np.float64), axis=1)


def _fast_scores(matrix: np.ndarray, rows: np.ndarray, query: np.ndarray) -> np.ndarray:
    # Traversal-only scoring. Last-ulp differences from _batch_scores are
    # fine here: they can only steer which candidates the beam explores,
    # never a returned score.
    return matrix[rows] @ query


class HnswIndex:
    """Cosine-similarity graph index; build single-writer, search read-only."""

    def __init__(self, dim: int, params: HnswParams = HnswParams(), model: str = ""):
        self.dim = dim
        self.params = params
        self.model = model
        self._ids: list[str] = []
        self._id_to_ix: dict[str, int] = {}
        self._levels: list[int] = []
        # _links[node][layer] = neighbor node indices, layer 0..level(node)
        self._links: list[list[list[int]]] = []
        self._entry: int = -1
        self._max_level: int = -1
        self._capacity = 256
        self._vectors = np.zeros((self._capacity, dim), dtype=np.float32)
        self._rng = np.random.Generator(np.random.PCG64(params.rng_seed))

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def ids(self) -> list[str]:
        return list(self._ids)

    @property
    def matrix(self) -> np.ndarray:
        return self._vectors[: len(self._ids)]

    @property
    def entry_point(self) -> str | None:
        return self._ids[self._entry] if self._entry >= 0 else None

    @property
    def max_level(self) -> int:
        return self._max_level

    def level_of(self, element_id: str) -> int:
        return self._levels[self._id_to_ix[element_id]]

    def neighbors_of(self, element_id: str, layer: int) -> list[str]:
        ix = self._id_to_ix[element_id]
        if layer >= len(self._links[ix]):
            return []
        return [self._ids[n] for n in self._links[ix][layer]]

    def vector_of(self, element_id: str) -> np.ndarray | None:
        ix = self._id_to_ix.get(element_id)
        if ix is None:
            return None
        return self._vectors[ix]

    def __contains__(self, element_id: str) -> bool:
        return element_id in self._id_to_ix

    def _draw_level(self) -> int:
        # level = floor(-ln(u) * lambda), u uniform on (0, 1]; exactly one
        # draw per insert so the stream can be replayed for verification.
        u = 1.0 - self._rng.random()
        return int(-math.log(u) * self.params.mult)

    def _grow(self, needed: int) -> None:
        if needed <= self._capacity:
            return
        while self._capacity < needed:
            self._capacity *= 2
        grown = np.zeros((self._capacity, self.dim), dtype=np.float32)
        grown[: len(self._ids)] = self._vectors[: len(self._ids)]
        self._vectors = grown

    def _search_layer(
        self, query: np.ndarray, entry_points: list[int], layer: int, ef: int
    ) -> list[tuple[float, int]]:
        """Beam search on one layer; returns (distance, node) ascending,
        distance being the negated dot product."""
        vectors = self._vectors
        links = self._links
        visited = np.zeros(len(self._ids), dtype=bool)
        eps = np.unique(np.asarray(entry_points, dtype=np.int64))
        visited[eps] = True
        dists = -(_fast_scores(vectors, eps, query))

        candidates: list[tuple[float, int]] = [
            (float(d), int(ix)) for d, ix in zip(dists, eps)
        ]
        heapify(candidates)
        # Max-heap over the current best ef nodes (negated distance on top).
        best: list[tuple[float, int]] = [(-d, ix) for d, ix in candidates]
        heapify(best)
        while len(best) > ef:
            heappop(best)

        while candidates:
            dist, current = heappop(candidates)
            if dist > -best[0][0] and len(best) >= ef:
                break
            neigh = links[current][layer] if layer < len(links[current]) else []
            if not neigh:
                continue
            arr = np.asarray(neigh, dtype=np.int64)
            fresh = arr[~visited[arr]]
            if fresh.size == 0:
                continue
            visited[fresh] = True
            dots = _fast_scores(vectors, fresh, query)
            for ix, dot in zip(fresh.tolist(), dots.tolist()):
                d = -dot
                if len(best) < ef:
                    heappush(candidates, (d, ix))
                    heappush(best, (-d, ix))
                elif d < -best[0][0]:
                    heappush(candidates, (d, ix))
                    heapreplace(best, (-d, ix))

        return sorted((-nd, ix) for nd, ix in best)

    def _select_heuristic(
        self, candidates: list[tuple[float, int]], m: int
    ) -> list[int]:
        """Distance-heuristic neighbor selection: walk candidates by
        increasing distance, keeping one only if it is closer to the base
        than to every neighbor already kept; pruned candidates fill any
        remaining slots in distance order."""
        if len(candidates) <= m:
            return [ix for _, ix in candidates]
        vectors = self._vectors
        selected: list[int] = []
        discarded: list[int] = []
        for dist, ix in candidates:
            if len(selected) >= m:
                break
            if not selected:
                selected.append(ix)
                continue
            d_to_selected = -(_fast_scores(vectors, np.asarray(selected), self._vectors[ix]))
            if dist < float(d_to_selected.min()):
                selected.append(ix)
            else:
                discarded.append(ix)
        for ix in discarded:
            if len(selected) >= m:
                break
            selected.append(ix)
        return selected

    def _shrink(self, node: int, layer: int) -> None:
        m_max = self.params.m0 if layer == 0 else self.params.M
        neigh = self._links[node][layer]
        if len(neigh) <= m_max:
            return
        base = self._vectors[node]
        arr = np.asarray(neigh, dtype=np.int64)
        dists = -(_fast_scores(self._vectors, arr, base))
        ranked = sorted(zip(dists.tolist(), neigh))
        keep = self._select_heuristic(ranked, m_max)
        removed = set(neigh) - set(keep)
        self._links[node][layer] = keep
        # Symmetry repair: a dropped edge disappears from both endpoints.
        for other in removed:
            other_links = self._links[other][layer]
            if node in other_links:
                other_links.remove(node)

    def insert(self, element_id: str, vector: np.ndarray) -> None:
        if element_id in self._id_to_ix:
            raise ValueError(f"duplicate element id {element_id!r}")
        vec = np.asarray(vector, dtype=np.float32)
        if vec.shape != (self.dim,):
            raise ValueError(f"vector shape {vec.shape} does not match dim {self.dim}")

        level = self._draw_level()
        ix = len(self._ids)
        self._grow(ix + 1)
        self._vectors[ix] = vec
        self._ids.append(element_id)
        self._id_to_ix[element_id] = ix
        self._levels.append(level)
        self._links.append([[] for _ in range(level + 1)])

        if self._entry < 0:
            self._entry = ix
            self._max_level = level
            return

        query = self._vectors[ix]
        eps = [self._entry]
        for layer in range(self._max_level, level, -1):
            nearest = self._search_layer(query, eps, layer, 1)
            eps = [nearest[0][1]]

        for layer in range(min(level, self._max_level), -1, -1):
            candidates = self._search_layer(query, eps, layer, self.params.ef_construction)
            m = self.params.m0 if layer == 0 else self.params.M
            selected = self._select_heuristic(candidates, m)
            self._links[ix][layer] = list(selected)
            for nbr in selected:
                self._links[nbr][layer].append(ix)
                self._shrink(nbr, layer)
            eps = [c for _, c in candidates]

        if level > self._max_level:
            self._entry = ix
            self._max_level = level

    def search(self, query: np.ndarray, k: int, ef: int | None = None) -> list[ScoredId]:
        """Approximate top-k by cosine, descending score, ties on id.

        The query is expected unit-normalized. An empty index yields an
        empty result (with a warning) rather than an error.
        """
        if len(self._ids) == 0:
            logger.warning("search against an empty index")
            return []
        q = np.asarray(query, dtype=np.float32)
        if q.shape != (self.dim,):
            raise ValueError(f"query shape {q.shape} does not match dim {self.dim}")
        beam = max(ef if ef is not None else self.params.ef_search, k)

        eps = [self._entry]
        for layer in range(self._max_level, 0, -1):
            nearest = self._search_layer(q, eps, layer, 1)
            eps = [nearest[0][1]]
        found = self._search_layer(q, eps, 0, beam)

        rows = np.asarray([ix for _, ix in found], dtype=np.int64)
        scores = _batch_scores(self._vectors, rows, q)
        ranked = sorted(
            (ScoredId(self._ids[ix], float(s)) for ix, s in zip(rows.tolist(), scores.tolist())),
            key=lambda r: (-r.score, r.element_id),
        )
        return ranked[:k]

    # Snapshot layout: one .bin with the graph and a JSON manifest with the
    # id table. Little-endian throughout.
    #   header:  magic "HNSW" | u32 version | u32 dim | u64 count
    #            | u32 M | u32 M0 | u32 ef_construction | u32 ef_search
    #            | f64 level_lambda | q i64 rng_seed | i64 entry | i32 max_level
    #   body:    count*dim float32 vectors | count u32 levels
    #            | per layer 0..max_level: (count+1) u64 offsets, u32 targets

    _MAGIC = b"HNSW"
    _VERSION = 1

    def save(self, prefix: Path) -> tuple[Path, Path]:
        prefix = Path(prefix)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        # Appended, not with_suffix: prefixes may contain dots.
        bin_path = prefix.parent / (prefix.name + ".bin")
        manifest_path = prefix.parent / (prefix.name + ".manifest.json")
        n = len(self._ids)
        p = self.params
        parts = [
            self._MAGIC,
            struct.pack(
                "<IIQIIIIdqqi",
                self._VERSION,
                self.dim,
                n,
                p.M,
                p.m0,
                p.ef_construction,
                p.ef_search,
                p.mult,
                p.rng_seed,
                self._entry,
                self._max_level,
            ),
            self.matrix.astype("<f4").tobytes(),
            np.asarray(self._levels, dtype="<u4").tobytes(),
        ]
        for layer in range(self._max_level + 1):
            offsets = np.zeros(n + 1, dtype="<u8")
            targets: list[int] = []
            for node in range(n):
                if layer < len(self._links[node]):
                    targets.extend(self._links[node][layer])
                offsets[node + 1] = len(targets)
            parts.append(offsets.tobytes())
            parts.append(np.asarray(targets, dtype="<u4").tobytes())
        bin_path.write_bytes(b"".join(parts))

        manifest = {
            "format": "hnsw-snapshot",
            "version": self._VERSION,
            "model": self.model,
            "dim": self.dim,
            "count": n,
            "params": {
                "M": p.M,
                "M0": p.m0,
                "ef_construction": p.ef_construction,
                "ef_search": p.ef_search,
                "level_lambda": p.mult,
                "rng_seed": p.rng_seed,
            },
            "ids": self._ids,
        }
        manifest_path.write_text(
            json.dumps(manifest, sort_keys=True, separators=(",", ":")) + "\n",
            encoding="utf-8",
        )
        return bin_path, manifest_path

    @classmethod
    def load(cls, prefix: Path) -> "HnswIndex":
        prefix = Path(prefix)
        bin_path = prefix.parent / (prefix.name + ".bin")
        manifest_path = prefix.parent / (prefix.name + ".manifest.json")
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        raw = bin_path.read_bytes()
        if raw[:4] != cls._MAGIC:
            raise ValueError(f"{bin_path} is not an index snapshot")
        header = struct.Struct("<IIQIIIIdqqi")
        (
            version,
            dim,
            n,
            m,
            m0,
            ef_c,
            ef_s,
            mult,
            seed,
            entry,
            max_level,
        ) = header.unpack_from(raw, 4)
        if version != cls._VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        params = HnswParams(
            M=m, M0=m0, ef_construction=ef_c, ef_search=ef_s, level_lambda=mult, rng_seed=seed
        )
        index = cls(dim=dim, params=params, model=manifest.get("model", ""))
        pos = 4 + header.size
        vectors = np.frombuffer(raw, dtype="<f4", count=n * dim, offset=pos).reshape(n, dim)
        pos += n * dim * 4
        levels = np.frombuffer(raw, dtype="<u4", count=n, offset=pos)
        pos += n * 4

        index._grow(n)
        index._vectors[:n] = vectors
        index._ids = list(manifest["ids"])
        index._id_to_ix = {eid: ix for ix, eid in enumerate(index._ids)}
        index._levels = [int(v) for v in levels]
        index._links = [[[] for _ in range(lvl + 1)] for lvl in index._levels]
        index._entry = int(entry)
        index._max_level = int(max_level)
        for layer in range(max_level + 1):
            offsets = np.frombuffer(raw, dtype="<u8", count=n + 1, offset=pos)
            pos += (n + 1) * 8
            total = int(offsets[-1])
            targets = np.frombuffer(raw, dtype="<u4", count=total, offset=pos)
            pos += total * 4
            for node in range(n):
                lo, hi = int(offsets[node]), int(offsets[node + 1])
                if hi > lo:
                    index._links[node][layer] = [int(t) for t in targets[lo:hi]]
        # Replay the level stream so post-load inserts continue the same
        # deterministic sequence the original index would have produced.
        for _ in range(n):
            index._rng.random()
        return index


def brute_force_knn(store, query: np.ndarray, k: int) -> list[ScoredId]:
    """Exact top-k by cosine over anything exposing ``ids`` and ``matrix``
    (an :class:`EmbeddingStore` or an :class:`HnswIndex`). Same descending
    score ordering and ascending-id tie-break as the index search."""
    ids = store.ids
    matrix = store.matrix
    n = len(ids)
    if n == 0:
        return []
    q = np.asarray(query, dtype=np.float32)
    scores = _batch_scores(matrix, np.arange(n), q)
    k = min(k, n)
    if k < n:
        part = np.argpartition(-scores, k - 1)
        kth = scores[part[k - 1]]
        candidate_rows = np.flatnonzero(scores >= kth)
    else:
        candidate_rows = np.arange(n)
    ranked = sorted(
        (ScoredId(ids[ix], float(scores[ix])) for ix in candidate_rows.tolist()),
        key=lambda r: (-r.score, r.element_id),
    )
    return ranked[:k]


def recall_at_k(approx: Sequence[ScoredId], exact: Sequence[ScoredId], k: int) -> float:
    """Fraction of the exact top-k ids present in the approximate top-k."""
    if k <= 0:
        raise ValueError("k must be positive")
    approx_ids = {r.element_id for r in approx[:k]}
    exact_ids = {r.element_id for r in exact[:k]}
    return len(approx_ids & exact_ids) / k
