"""
Scoring context text with tf-idf
================================

"""

import math

from platesearch import TextIndex, tokenize

# Pictures have no words of their own, so text search runs over the OCR
# text of the page each element came from. Weighting is tf-idf on both
# sides with idf = ln((N + 1) / (df + 1)) + 1, the add-one keeping terms
# that appear everywhere from zeroing out.

docs = [
    ("plate-001", "En kat på taket. Katten ser mot havet."),
    ("plate-002", "Fregatten under fulde seil ved Kristiansand."),
    ("plate-003", "Kart over kysten fra Bergen til Trondhjem."),
    ("plate-004", "En gammel tegning av en kat."),
    ("plate-005", "Noter til en vise om havet."),
]

index = TextIndex()
index.add_documents(docs)
print(f"{len(index)} documents, {index.term_count} distinct terms")

# Tokenization is intentionally plain: lowercase, split on non-letters,
# keep everything. "Katten" and "kat" stay separate terms; stemming
# Norwegian OCR output creates more problems than it solves.
print("tokens:", tokenize(docs[0][1]))

for query in ("kat", "kat havet", "kart kyst"):
    print(f"\nquery {query!r}")
    for hit in index.search(query, k=3):
        print(f"  {hit.score:8.4f}  {hit.element_id}")

# One score by hand. Document plate-001 contains "kat" once and "havet"
# once; with N = 5 documents the weights are small but exact.
n = len(index)


def idf(term):
    return math.log((n + 1) / (index.document_frequency(term) + 1)) + 1.0


expected = 1 * idf("kat") * 1 * idf("kat") + 1 * idf("havet") * 1 * idf("havet")
got = next(h for h in index.search("kat havet", k=5) if h.element_id == "plate-001")
print(f"\nhand-computed score for plate-001: {expected:.6f}")
print(f"index score:                       {got.score:.6f}")
assert math.isclose(expected, got.score, rel_tol=1e-12)

# Snapshots round-trip the whole index, postings included.
import tempfile
from pathlib import Path

with tempfile.TemporaryDirectory() as tmp:
    prefix = Path(tmp) / "context"
    bin_path, _ = index.save(prefix)
    reloaded = TextIndex.load(prefix)
    assert reloaded.search("kat havet", k=5) == index.search("kat havet", k=5)
    print(f"\nsnapshot round trip ok ({bin_path.stat().st_size} bytes of postings)")
