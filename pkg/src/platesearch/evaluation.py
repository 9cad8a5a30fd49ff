"""Retrieval benchmark against perturbed copies of indexed images.

Each indexed image becomes one query: a transform (crop, rotate, scale) is
sampled from per-query seeded generators, applied to the image, and the
perturbed copy is embedded and searched. The report counts how often the
original lands in the top 1, 5, 10 and 50.

Reproducibility is strict. Query q uses ``default_rng([seed, q])`` and
draws exactly seven uniforms in a fixed order (crop left, right, top,
bottom, rotation, width scale, height scale), queries run in sorted id
order, and zero-strength transforms skip the resampling code paths
entirely, so an identity transform returns the image bit for bit and a
rerun reproduces the report byte for byte.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .classifier import Label
from .embeddings import mock_embed
from .hnsw import ScoredId
from .raster import RasterImage, resize_bilinear, rotate_bilinear, round_half_up

logger = logging.getLogger(__name__)

DEFAULT_KS = (1, 5, 10, 50)

# Only genuinely pictorial classes make sense as retrieval targets; blanks,
# segmentation noise, musical notation and plain graphical marks are not
# images anyone would query for.
EVAL_TARGET_LABELS = frozenset(
    {Label.ILLUSTRATION_OR_PHOTOGRAPH, Label.MAP, Label.MATHEMATICAL_CHART}
)


def select_eval_targets(labels: Mapping[str, int]) -> list[str]:
    """Element ids whose label marks pictorial content, sorted."""
    wanted = {int(label) for label in EVAL_TARGET_LABELS}
    return sorted(eid for eid, code in labels.items() if int(code) in wanted)


@dataclass(frozen=True)
class TransformRanges:
    """Sampling bounds for the perturbation. Defaults are the full
    benchmark ranges: up to 15% cropped per side, rotation within
    +/- 10 degrees, each axis scaled by 0.8 to 1.2."""

    max_crop: float = 0.15
    max_rotation_deg: float = 10.0
    scale_low: float = 0.8
    scale_high: float = 1.2

    def __post_init__(self) -> None:
        if not 0.0 <= self.max_crop < 0.5:
            raise ValueError("max_crop must be in [0, 0.5)")
        if self.max_rotation_deg < 0.0:
            raise ValueError("max_rotation_deg must be non-negative")
        if not 0.0 < self.scale_low <= self.scale_high:
            raise ValueError("scale bounds must satisfy 0 < low <= high")

    @classmethod
    def identity(cls) -> "TransformRanges":
        return cls(max_crop=0.0, max_rotation_deg=0.0, scale_low=1.0, scale_high=1.0)

    @classmethod
    def mild(cls) -> "TransformRanges":
        """Crops only, at most 5% per side."""
        return cls(max_crop=0.05, max_rotation_deg=0.0, scale_low=1.0, scale_high=1.0)


@dataclass(frozen=True)
class TransformParams:
    crop_left: float
    crop_right: float
    crop_top: float
    crop_bottom: float
    rotation_deg: float
    scale_w: float
    scale_h: float

    @classmethod
    def identity(cls) -> "TransformParams":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0)

    @property
    def is_identity(self) -> bool:
        return (
            self.crop_left == self.crop_right == self.crop_top == self.crop_bottom == 0.0
            and self.rotation_deg == 0.0
            and self.scale_w == self.scale_h == 1.0
        )


def sample_transform(rng: np.random.Generator, ranges: TransformRanges) -> TransformParams:
    """Draw one transform; consumes exactly seven uniforms in a fixed order."""
    return TransformParams(
        crop_left=rng.uniform(0.0, ranges.max_crop),
        crop_right=rng.uniform(0.0, ranges.max_crop),
        crop_top=rng.uniform(0.0, ranges.max_crop),
        crop_bottom=rng.uniform(0.0, ranges.max_crop),
        rotation_deg=rng.uniform(-ranges.max_rotation_deg, ranges.max_rotation_deg),
        scale_w=rng.uniform(ranges.scale_low, ranges.scale_high),
        scale_h=rng.uniform(ranges.scale_low, ranges.scale_high),
    )


def apply_transform(img: RasterImage, params: TransformParams) -> RasterImage:
    """Crop, then rotate, then scale. Crop margins are floored pixel counts;
    scaled dimensions round half up and never drop below one pixel."""
    left = int(params.crop_left * img.width)
    right = int(params.crop_right * img.width)
    top = int(params.crop_top * img.height)
    bottom = int(params.crop_bottom * img.height)
    if left + right >= img.width or top + bottom >= img.height:
        raise ValueError("crop leaves no pixels")
    if left or right or top or bottom:
        img = RasterImage.from_array(
            img.pixels[top : img.height - bottom, left : img.width - right]
        )

    img = rotate_bilinear(img, params.rotation_deg)

    new_w = max(1, round_half_up(img.width * params.scale_w))
    new_h = max(1, round_half_up(img.height * params.scale_h))
    return resize_bilinear(img, new_w, new_h)


def top_n_accuracy(
    ranked_ids: Sequence[Sequence[str]],
    targets: Sequence[str],
    ns: Sequence[int] = DEFAULT_KS,
) -> dict[int, int]:
    """Per cutoff N, how many queries have their target within the first N
    ranked ids. Counts are necessarily non-decreasing in N."""
    if len(ranked_ids) != len(targets):
        raise ValueError("one ranked list per target required")
    ns_sorted = sorted(set(int(n) for n in ns))
    if ns_sorted and ns_sorted[0] < 1:
        raise ValueError("cutoffs must be positive")
    counts = {n: 0 for n in ns_sorted}
    for ranked, target in zip(ranked_ids, targets):
        rank = next((pos for pos, rid in enumerate(ranked) if rid == target), None)
        if rank is None:
            continue
        for n in ns_sorted:
            if rank < n:
                counts[n] += 1
    return counts


@dataclass(frozen=True)
class RetrievalReport:
    """Top-N table plus everything needed to reproduce it: the seed, the
    transform bounds, and caller-declared index metadata."""

    n_queries: int
    skipped: int
    seed: int
    ks: tuple[int, ...]
    hits: dict[int, int]
    not_found: int
    ranges: TransformRanges
    index_meta: dict

    def hit_rate(self, k: int) -> float:
        return self.hits[k] / self.n_queries if self.n_queries else 0.0

    def to_dict(self) -> dict:
        return {
            "n_queries": self.n_queries,
            "skipped": self.skipped,
            "seed": self.seed,
            "ks": list(self.ks),
            "hits": {str(k): self.hits[k] for k in self.ks},
            "hit_rate": {str(k): self.hit_rate(k) for k in self.ks},
            "not_found": self.not_found,
            "transform": {
                "max_crop": self.ranges.max_crop,
                "max_rotation_deg": self.ranges.max_rotation_deg,
                "scale_low": self.ranges.scale_low,
                "scale_high": self.ranges.scale_high,
            },
            "index_meta": self.index_meta,
        }

    def to_json(self) -> str:
        """Canonical JSON: sorted keys, compact separators, trailing newline."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"

    def to_text(self) -> str:
        lines = [f"queries: {self.n_queries}  skipped: {self.skipped}  seed: {self.seed}"]
        for k in self.ks:
            lines.append(f"  top {k:>3}: {self.hits[k]:>6}  {self.hit_rate(k) * 100:6.2f}%")
        lines.append(f"  not in top {self.ks[-1]}: {self.not_found}")
        return "\n".join(lines) + "\n"


def run_retrieval_eval(
    images: Mapping[str, RasterImage],
    searcher: Callable[[np.ndarray, int], list[ScoredId]],
    *,
    targets: Sequence[str] | None = None,
    embedder: Callable[[RasterImage], np.ndarray] | None = None,
    ranges: TransformRanges = TransformRanges(),
    seed: int = 0,
    ks: Sequence[int] = DEFAULT_KS,
    index_meta: Mapping | None = None,
) -> RetrievalReport:
    """Run the benchmark, one query per target.

    ``searcher`` maps (query vector, k) to ranked results; pass the bound
    ``search`` of a built index. ``embedder`` maps an image to a unit
    vector and defaults to the deterministic mock embedding. ``targets``
    defaults to every image id, sorted; targets without an image are
    skipped and counted. Query i derives its generator from (seed, i) by
    position in the target list, so results do not depend on evaluation
    order or on which other targets are present.
    """
    if not images:
        raise ValueError("need at least one image")
    ks_sorted = tuple(sorted(set(int(k) for k in ks)))
    if ks_sorted[0] < 1:
        raise ValueError("k values must be positive")
    if embedder is None:
        embedder = lambda img: mock_embed(img).values
    if targets is None:
        targets = sorted(images)

    max_k = ks_sorted[-1]
    hits = {k: 0 for k in ks_sorted}
    not_found = 0
    skipped = 0
    for query_ix, element_id in enumerate(targets):
        img = images.get(element_id)
        if img is None:
            logger.warning("no image for target %s, skipping", element_id)
            skipped += 1
            continue
        rng = np.random.default_rng([seed, query_ix])
        params = sample_transform(rng, ranges)
        perturbed = apply_transform(img, params)
        query = embedder(perturbed)
        results = searcher(query, max_k)
        rank = next(
            (pos for pos, r in enumerate(results) if r.element_id == element_id), None
        )
        if rank is None:
            not_found += 1
        else:
            for k in ks_sorted:
                if rank < k:
                    hits[k] += 1

    report = RetrievalReport(
        n_queries=len(targets) - skipped,
        skipped=skipped,
        seed=seed,
        ks=ks_sorted,
        hits=hits,
        not_found=not_found,
        ranges=ranges,
        index_meta=dict(index_meta) if index_meta else {},
    )
    logger.info("retrieval eval done:\n%s", report.to_text())
    return report
