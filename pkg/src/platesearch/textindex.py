"""Inverted index with tf-idf weighting for the page text surrounding an
extracted element.

Scoring is a plain dot product between query and document weight vectors,
where both sides weight a term as ``tf * (ln((N + 1) / (df + 1)) + 1)``.
The smoothed idf stays strictly positive, so any document sharing a term
with the query scores above zero and empty intersections never appear in
results.

Scalar float math runs term-major in sorted term order, which makes scores
reproducible to the last bit: a reference implementation summing the same
contributions per document in sorted term order gets the identical float.
"""

from __future__ import annotations

import json
import logging
import math
import re
import struct
from collections import Counter
from pathlib import Path
from typing import Iterable

from .hnsw import ScoredId

logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercased unicode word characters; underscores and punctuation split."""
    return _TOKEN_RE.findall(text.lower())


def _write_varint(out: bytearray, value: int) -> None:
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return


def _read_varint(raw: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        byte = raw[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7


class TextIndex:
    """Document store plus postings; documents are added once, never removed."""

    _MAGIC = b"TIDX"
    _VERSION = 1

    def __init__(self) -> None:
        self._ids: list[str] = []
        self._id_to_ix: dict[str, int] = {}
        # term -> [(doc ordinal, term frequency)], ordinals ascending
        self._postings: dict[str, list[tuple[int, int]]] = {}

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def ids(self) -> list[str]:
        return list(self._ids)

    @property
    def term_count(self) -> int:
        return len(self._postings)

    def document_frequency(self, term: str) -> int:
        return len(self._postings.get(term, ()))

    def add_document(self, element_id: str, text: str) -> None:
        """Index one document. A document with no tokens still counts toward
        the collection size used by idf."""
        if element_id in self._id_to_ix:
            raise ValueError(f"duplicate element id {element_id!r}")
        ordinal = len(self._ids)
        self._ids.append(element_id)
        self._id_to_ix[element_id] = ordinal
        for term, tf in Counter(tokenize(text)).items():
            self._postings.setdefault(term, []).append((ordinal, tf))

    def add_documents(self, docs: Iterable[tuple[str, str]]) -> None:
        for element_id, text in docs:
            self.add_document(element_id, text)

    def search(self, query: str, k: int) -> list[ScoredId]:
        """Top-k documents by dot-product score, descending, ties broken by
        ascending element id. Query terms absent from the corpus contribute
        nothing; a query with no tokens matches nothing."""
        if k <= 0:
            raise ValueError("k must be positive")
        n = len(self._ids)
        query_tf = Counter(tokenize(query))
        scores: dict[int, float] = {}
        for term in sorted(query_tf):
            postings = self._postings.get(term)
            if not postings:
                continue
            idf = math.log((n + 1) / (len(postings) + 1)) + 1.0
            query_weight = query_tf[term] * idf
            for doc, tf in postings:
                scores[doc] = scores.get(doc, 0.0) + query_weight * (tf * idf)
        ranked = sorted(
            (ScoredId(self._ids[doc], score) for doc, score in scores.items()),
            key=lambda r: (-r.score, r.element_id),
        )
        return ranked[:k]

    # Snapshot: JSON manifest carrying the document table, binary postings
    # file with terms in sorted order. Postings layout per term:
    #   varint term byte length, UTF-8 term bytes, varint df,
    #   then df pairs of (varint ordinal delta, varint tf).

    def save(self, prefix: Path) -> tuple[Path, Path]:
        prefix = Path(prefix)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        bin_path = prefix.parent / (prefix.name + ".bin")
        manifest_path = prefix.parent / (prefix.name + ".manifest.json")

        out = bytearray(self._MAGIC)
        out += struct.pack("<IQ", self._VERSION, len(self._postings))
        for term in sorted(self._postings):
            encoded = term.encode("utf-8")
            _write_varint(out, len(encoded))
            out += encoded
            postings = self._postings[term]
            _write_varint(out, len(postings))
            previous = 0
            for ordinal, tf in postings:
                _write_varint(out, ordinal - previous)
                _write_varint(out, tf)
                previous = ordinal
        bin_path.write_bytes(bytes(out))

        manifest = {
            "format": "text-snapshot",
            "version": self._VERSION,
            "count": len(self._ids),
            "terms": len(self._postings),
            "ids": self._ids,
        }
        manifest_path.write_text(
            json.dumps(manifest, sort_keys=True, separators=(",", ":")) + "\n",
            encoding="utf-8",
        )
        return bin_path, manifest_path

    @classmethod
    def load(cls, prefix: Path) -> "TextIndex":
        prefix = Path(prefix)
        manifest = json.loads(
            (prefix.parent / (prefix.name + ".manifest.json")).read_text(encoding="utf-8")
        )
        raw = (prefix.parent / (prefix.name + ".bin")).read_bytes()
        if raw[:4] != cls._MAGIC:
            raise ValueError(f"{prefix}.bin is not a text index snapshot")
        version, term_count = struct.unpack_from("<IQ", raw, 4)
        if version != cls._VERSION:
            raise ValueError(f"unsupported snapshot version {version}")

        index = cls()
        index._ids = list(manifest["ids"])
        index._id_to_ix = {eid: ix for ix, eid in enumerate(index._ids)}
        pos = 4 + struct.calcsize("<IQ")
        for _ in range(term_count):
            length, pos = _read_varint(raw, pos)
            term = raw[pos : pos + length].decode("utf-8")
            pos += length
            df, pos = _read_varint(raw, pos)
            postings: list[tuple[int, int]] = []
            ordinal = 0
            for _ in range(df):
                delta, pos = _read_varint(raw, pos)
                tf, pos = _read_varint(raw, pos)
                ordinal += delta
                postings.append((ordinal, tf))
            index._postings[term] = postings
        return index
