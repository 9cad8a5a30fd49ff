"""Embedding vectors: preprocessing geometry, the built-in extractor,
the JSONL import format, and vector math.

Real transformer embeddings (768-d or 512-d) are computed elsewhere and
imported via JSONL; the built-in ``mock64`` extractor gives a deterministic
64-dimensional colour/luminance signature so the whole pipeline runs at
desk scale without model weights. All vectors are L2-normalized on ingest,
making cosine similarity a plain dot product.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .raster import RasterImage, resize_bilinear

logger = logging.getLogger(__name__)

MOCK_MODEL_TAG = "mock64"
MOCK_DIM = 64

# Expected dimensionality per embedding family; import validation enforces
# internal consistency per tag and checks these when the tag is known.
KNOWN_MODEL_DIMS = {"vit": 768, "siglip": 768, "clip": 512, MOCK_MODEL_TAG: MOCK_DIM}


class PreprocessProfile(Enum):
    """Input geometry of the embedding models: squash profiles resize
    ignoring aspect ratio, crop_224 resizes the short side then centre-crops."""

    SQUASH_224 = ("squash_224", (224, 224))
    SQUASH_256 = ("squash_256", (256, 256))
    CROP_224 = ("crop_224", (224, 224))

    def __init__(self, profile_name: str, output: tuple[int, int]):
        self.profile_name = profile_name
        self.output = output

    @classmethod
    def from_name(cls, name: str) -> "PreprocessProfile":
        for profile in cls:
            if profile.profile_name == name:
                return profile
        raise ValueError(f"unknown preprocessing profile {name!r}")


def preprocess(img: RasterImage, profile: PreprocessProfile) -> RasterImage:
    """Resize an image to a model's input geometry.

    Squash profiles stretch to the target shape. crop_224 resizes so the
    shorter side is 224 (preserving aspect ratio, other side rounded half
    up), then centre-crops; an odd overhang drops the extra pixel on the
    right/bottom side.
    """
    target_w, target_h = profile.output
    if profile in (PreprocessProfile.SQUASH_224, PreprocessProfile.SQUASH_256):
        return resize_bilinear(img, target_w, target_h)

    short = min(img.width, img.height)
    if short != target_w:
        factor = target_w / short
        if img.width <= img.height:
            new_w = target_w
            new_h = max(target_h, int(img.height * factor + 0.5))
        else:
            new_h = target_h
            new_w = max(target_w, int(img.width * factor + 0.5))
        img = resize_bilinear(img, new_w, new_h)
    dx = img.width - target_w
    dy = img.height - target_h
    left = dx // 2
    top = dy // 2
    cropped = img.pixels[top : top + target_h, left : left + target_w]
    return RasterImage.from_array(cropped)


def normalize(values: np.ndarray) -> np.ndarray:
    """L2-normalize to unit length (idempotent); zero vectors are an error."""
    arr = np.asarray(values, dtype=np.float64)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0 or not np.isfinite(norm):
        raise ValueError("cannot normalize a zero or non-finite vector")
    return (arr / norm).astype(np.float32)


@dataclass(frozen=True)
class EmbeddingVector:
    element_id: str
    model: str
    dim: int
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != (self.dim,):
            raise ValueError(f"vector length {self.values.shape} does not match dim {self.dim}")


def mock_embed(
    img: RasterImage, profile: PreprocessProfile = PreprocessProfile.SQUASH_256
) -> "EmbeddingVector":
    """Deterministic 64-d signature standing in for transformer inference.

    After preprocessing: mean R, G, B over a 4x4 grid of cells (48 dims,
    cells row-major) followed by a 16-bin luminance histogram with
    luma = 0.299R + 0.587G + 0.114B, counts divided by the pixel count
    (16 dims); the concatenation is L2-normalized.
    """
    prepped = preprocess(img, profile)
    pixels = prepped.pixels.astype(np.float64)
    h, w = prepped.height, prepped.width

    feats = np.empty(MOCK_DIM, dtype=np.float64)
    k = 0
    for i in range(4):
        r0, r1 = (i * h) // 4, ((i + 1) * h) // 4
        for j in range(4):
            c0, c1 = (j * w) // 4, ((j + 1) * w) // 4
            cell = pixels[r0:r1, c0:c1]
            feats[k : k + 3] = cell.reshape(-1, 3).mean(axis=0)
            k += 3

    luma = pixels[:, :, 0] * 0.299 + pixels[:, :, 1] * 0.587 + pixels[:, :, 2] * 0.114
    bins = np.minimum((luma / 16.0).astype(np.int64), 15)
    hist = np.bincount(bins.ravel(), minlength=16).astype(np.float64)
    feats[48:] = hist / (h * w)

    return EmbeddingVector(
        element_id="", model=MOCK_MODEL_TAG, dim=MOCK_DIM, values=normalize(feats)
    )


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    va = a.values.astype(np.float64)
    vb = b.values.astype(np.float64)
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for zero vectors")
    return float(np.clip(np.dot(va, vb) / (na * nb), -1.0, 1.0))


@dataclass
class RecordError:
    line: int
    element_id: str
    message: str


@dataclass
class ImportResult:
    vectors: list[EmbeddingVector]
    errors: list[RecordError] = field(default_factory=list)


class EmbeddingImportError(Exception):
    """Raised when more than the tolerated fraction of records is bad."""

    def __init__(self, message: str, errors: list[RecordError]):
        super().__init__(message)
        self.errors = errors


def import_embeddings(path: Path, max_bad_fraction: float = 0.01) -> ImportResult:
    """Read embeddings JSONL ({element_id, model, dim, vector} per line).

    Vectors are validated (declared dim matches the array, one dim per
    model tag, finite values, no duplicate ids within a tag) and normalized
    on ingest. Bad records are collected; the whole file is rejected when
    more than ``max_bad_fraction`` of its lines fail.
    """
    vectors: list[EmbeddingVector] = []
    errors: list[RecordError] = []
    dims_by_model: dict[str, int] = {}
    seen: set[tuple[str, str]] = set()
    total = 0

    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            total += 1
            try:
                row = json.loads(line)
                element_id = str(row["element_id"])
                model = str(row["model"])
                dim = int(row["dim"])
                raw = np.asarray(row["vector"], dtype=np.float64)
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                errors.append(RecordError(line_no, "", f"unparseable record: {exc}"))
                continue

            if raw.shape != (dim,):
                errors.append(
                    RecordError(line_no, element_id, f"dim {dim} does not match vector length {raw.shape[0] if raw.ndim == 1 else raw.shape}")
                )
                continue
            if not np.all(np.isfinite(raw)):
                errors.append(RecordError(line_no, element_id, "non-finite value in vector"))
                continue
            expected = dims_by_model.setdefault(model, dim)
            if dim != expected:
                errors.append(
                    RecordError(line_no, element_id, f"model {model} has dim {expected}, record says {dim}")
                )
                continue
            if model in KNOWN_MODEL_DIMS and dim != KNOWN_MODEL_DIMS[model]:
                errors.append(
                    RecordError(line_no, element_id, f"model {model} must have dim {KNOWN_MODEL_DIMS[model]}")
                )
                continue
            key = (model, element_id)
            if key in seen:
                errors.append(RecordError(line_no, element_id, f"duplicate id under model {model}"))
                continue
            try:
                values = normalize(raw)
            except ValueError as exc:
                errors.append(RecordError(line_no, element_id, str(exc)))
                continue
            seen.add(key)
            vectors.append(EmbeddingVector(element_id=element_id, model=model, dim=dim, values=values))

    if total > 0 and len(errors) / total > max_bad_fraction:
        raise EmbeddingImportError(
            f"{len(errors)}/{total} records bad (over the {max_bad_fraction:.0%} limit)", errors
        )
    for err in errors:
        logger.warning("embedding record %d (%s): %s", err.line, err.element_id, err.message)
    return ImportResult(vectors=vectors, errors=errors)


def write_embeddings_jsonl(vectors: Iterable[EmbeddingVector], path: Path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for vec in vectors:
            row = {
                "element_id": vec.element_id,
                "model": vec.model,
                "dim": vec.dim,
                "vector": [float(x) for x in vec.values],
            }
            fh.write(json.dumps(row) + "\n")
            count += 1
    return count


class EmbeddingStore:
    """Per-model contiguous float32 vector storage with an id -> row map.

    Single writer during ingest; safe for concurrent readers afterwards.
    """

    def __init__(self, model: str, dim: int):
        self.model = model
        self.dim = dim
        self._ids: list[str] = []
        self._index: dict[str, int] = {}
        self._capacity = 64
        self._matrix = np.zeros((self._capacity, dim), dtype=np.float32)

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def ids(self) -> list[str]:
        return list(self._ids)

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix[: len(self._ids)]

    def add(self, element_id: str, values: np.ndarray) -> int:
        if element_id in self._index:
            raise ValueError(f"duplicate element id {element_id!r}")
        if values.shape != (self.dim,):
            raise ValueError(f"vector shape {values.shape} does not match dim {self.dim}")
        row = len(self._ids)
        if row == self._capacity:
            self._capacity *= 2
            grown = np.zeros((self._capacity, self.dim), dtype=np.float32)
            grown[:row] = self._matrix[:row]
            self._matrix = grown
        self._matrix[row] = values
        self._ids.append(element_id)
        self._index[element_id] = row
        return row

    def row_of(self, element_id: str) -> int | None:
        return self._index.get(element_id)

    def get(self, element_id: str) -> np.ndarray | None:
        row = self._index.get(element_id)
        if row is None:
            return None
        return self._matrix[row]

    @classmethod
    def from_vectors(cls, vectors: Sequence[EmbeddingVector]) -> dict[str, "EmbeddingStore"]:
        """Group imported vectors into one store per model tag."""
        stores: dict[str, EmbeddingStore] = {}
        for vec in vectors:
            store = stores.get(vec.model)
            if store is None:
                store = stores[vec.model] = cls(vec.model, vec.dim)
            store.add(vec.element_id, vec.values)
        return stores

    # Packed binary cache: faster reload than re-parsing JSONL. One .bin of
    # float32 rows plus a JSON sidecar with the id table.

    _MAGIC = b"EMBD"

    def save_packed(self, directory: Path) -> tuple[Path, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        bin_path = directory / f"emb-{self.model}.bin"
        ids_path = directory / f"emb-{self.model}.ids.json"
        import struct

        with open(bin_path, "wb") as fh:
            fh.write(self._MAGIC)
            fh.write(struct.pack("<III", 1, self.dim, len(self._ids)))
            fh.write(self.matrix.astype("<f4").tobytes())
        ids_path.write_text(
            json.dumps({"model": self.model, "dim": self.dim, "ids": self._ids}),
            encoding="utf-8",
        )
        return bin_path, ids_path

    @classmethod
    def load_packed(cls, directory: Path, model: str) -> "EmbeddingStore":
        import struct

        directory = Path(directory)
        bin_path = directory / f"emb-{model}.bin"
        ids_path = directory / f"emb-{model}.ids.json"
        meta = json.loads(ids_path.read_text(encoding="utf-8"))
        with open(bin_path, "rb") as fh:
            magic = fh.read(4)
            if magic != cls._MAGIC:
                raise ValueError(f"{bin_path} is not a packed embedding file")
            _version, dim, count = struct.unpack("<III", fh.read(12))
            data = np.frombuffer(fh.read(count * dim * 4), dtype="<f4").reshape(count, dim)
        store = cls(meta["model"], dim)
        for element_id, row in zip(meta["ids"], data):
            store.add(element_id, row.astype(np.float32))
        return store
