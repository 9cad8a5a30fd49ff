"""Tokenization, tf-idf ranking against a brute-force oracle, snapshots."""

import math
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from platesearch.textindex import TextIndex, tokenize


def test_tokenize_basic():
    assert tokenize("en Kat, to") == ["en", "kat", "to"]
    assert tokenize("") == []
    assert tokenize("Blåbær-syltetøy") == ["blåbær", "syltetøy"]
    assert tokenize("under_score") == ["under", "score"]
    assert tokenize("  \n\t ") == []
    assert tokenize("tall123 og 45") == ["tall123", "og", "45"]


def test_tokens_lowercase_nonempty():
    for token in tokenize("Den Gamle KATTEN på Taket 1899"):
        assert token == token.lower()
        assert token


def build(docs: dict[str, str]) -> TextIndex:
    index = TextIndex()
    for element_id in docs:
        index.add_document(element_id, docs[element_id])
    return index


def test_postings_counts():
    index = build({"d1": "a a b"})
    assert len(index) == 1
    assert index.document_frequency("a") == 1
    assert index.document_frequency("b") == 1
    assert index.document_frequency("zz") == 0

    index = build({"d1": "felles ord", "d2": "felles annet"})
    assert index.document_frequency("felles") == 2


def test_empty_document_counts_toward_n():
    index = build({"d1": "katt", "d2": ""})
    assert len(index) == 2
    # idf uses N=2 even though d2 has no postings
    expected_idf = math.log((2 + 1) / (1 + 1)) + 1.0
    results = index.search("katt", 10)
    assert results[0].score == pytest.approx(expected_idf * expected_idf)


def test_duplicate_document_rejected():
    index = build({"d1": "noe"})
    with pytest.raises(ValueError):
        index.add_document("d1", "annet")


def test_single_document_match_and_miss():
    index = build({"d1": "en kat på taket", "d2": "bare hus og gate"})
    hits = index.search("kat", 10)
    assert [r.element_id for r in hits] == ["d1"]
    assert index.search("elefant", 10) == []
    assert index.search("", 10) == []


def test_zero_score_documents_excluded():
    index = build({"d1": "kat", "d2": "hund", "d3": "kat hund"})
    results = index.search("kat", 10)
    assert {r.element_id for r in results} == {"d1", "d3"}


def test_tie_break_ascending_id():
    index = build({"zz": "ord", "aa": "ord", "mm": "ord"})
    results = index.search("ord", 3)
    assert [r.element_id for r in results] == ["aa", "mm", "zz"]
    assert results[0].score == results[1].score == results[2].score


def test_k_limits_results():
    index = build({f"d{i}": "ord" for i in range(10)})
    assert len(index.search("ord", 3)) == 3
    with pytest.raises(ValueError):
        index.search("ord", 0)


def oracle_scores(docs: dict[str, str], query: str) -> dict[str, float]:
    """Brute-force tf-idf computed independently, per document, summing
    contributions in sorted term order (the documented float contract)."""
    n = len(docs)
    tokenized = {eid: Counter(tokenize(text)) for eid, text in docs.items()}
    df = Counter()
    for counts in tokenized.values():
        df.update(counts.keys())
    query_tf = Counter(tokenize(query))
    out: dict[str, float] = {}
    for eid, counts in tokenized.items():
        score = 0.0
        for term in sorted(query_tf):
            if term not in counts:
                continue
            idf = math.log((n + 1) / (df[term] + 1)) + 1.0
            score += (query_tf[term] * idf) * (counts[term] * idf)
        if score != 0.0:
            out[eid] = score
    return out


def test_five_document_fixture_matches_oracle_exactly():
    docs = {
        "d1": "en kat på taket",
        "d2": "kat og hund i huset",
        "d3": "gamle kart over byen",
        "d4": "kat kat kat",
        "d5": "noter til en sang",
    }
    index = build(docs)
    for query in ("kat", "kat hund", "en kat på", "kart byen", "sang sang kat"):
        expected = oracle_scores(docs, query)
        got = index.search(query, 10)
        assert {r.element_id: r.score for r in got} == expected
        scores = [r.score for r in got]
        assert scores == sorted(scores, reverse=True)


_word = st.sampled_from(
    "en kat på taket hund hus by kart note sang bok fjell hav skip og i til".split()
)
_doc = st.lists(_word, min_size=0, max_size=12).map(" ".join)


@settings(max_examples=60, deadline=None)
@given(
    docs=st.lists(_doc, min_size=1, max_size=30),
    query=st.lists(_word, min_size=1, max_size=4).map(" ".join),
)
def test_oracle_equivalence_random_corpora(docs, query):
    table = {f"d{i:03d}": text for i, text in enumerate(docs)}
    index = build(table)
    expected = oracle_scores(table, query)
    got = index.search(query, len(table))
    assert {r.element_id: r.score for r in got} == expected  # floats included


def test_unrelated_document_preserves_ranking():
    # A new document without the query term leaves the matched set and the
    # ranking untouched. Absolute scores do shift, because idf depends on
    # the collection size N; the shift is exactly the idf-ratio squared.
    docs = {"d1": "kat på taket", "d2": "kat hund i byen", "d3": "bare hus"}
    index = build(docs)
    before = index.search("kat", 10)
    index.add_document("d4", "fjell og hav")  # shares no query term
    after = index.search("kat", 10)
    assert [r.element_id for r in after] == [r.element_id for r in before]

    idf_before = math.log((3 + 1) / (2 + 1)) + 1.0
    idf_after = math.log((4 + 1) / (2 + 1)) + 1.0
    factor = (idf_after / idf_before) ** 2
    for old, new in zip(before, after):
        assert new.score == pytest.approx(old.score * factor, rel=1e-12)


def test_score_additive_over_disjoint_query_terms():
    docs = {
        "d1": "kat hund fugl",
        "d2": "kat kat hest",
        "d3": "hund hund hund",
    }
    index = build(docs)
    k = len(docs)
    combined = {r.element_id: r.score for r in index.search("kat hund", k)}
    part_a = {r.element_id: r.score for r in index.search("kat", k)}
    part_b = {r.element_id: r.score for r in index.search("hund", k)}
    for eid, score in combined.items():
        assert score == pytest.approx(part_a.get(eid, 0.0) + part_b.get(eid, 0.0), abs=1e-12)


def test_snapshot_round_trip(tmp_path):
    docs = {
        "u:1,0,1,1": "en kat på taket",
        "u:2,0,1,1": "",
        "u:3,0,1,1": "blåbær og kart kart",
    }
    index = build(docs)
    bin_1, man_1 = index.save(tmp_path / "text")
    loaded = TextIndex.load(tmp_path / "text")
    assert loaded.ids == index.ids
    assert len(loaded) == len(index)
    assert loaded.term_count == index.term_count
    for query in ("kat", "kart", "blåbær taket"):
        assert loaded.search(query, 10) == index.search(query, 10)

    bin_2, man_2 = loaded.save(tmp_path / "text2")
    assert bin_2.read_bytes() == bin_1.read_bytes()


def test_snapshot_rejects_bad_magic(tmp_path):
    index = build({"d1": "noe"})
    bin_path, _ = index.save(tmp_path / "text")
    bin_path.write_bytes(b"XXXX" + bin_path.read_bytes()[4:])
    with pytest.raises(ValueError):
        TextIndex.load(tmp_path / "text")


def test_snapshot_handles_large_ordinal_gaps(tmp_path):
    # Varint deltas: force multi-byte encodings with a sparse term.
    index = TextIndex()
    for i in range(300):
        text = "sjelden" if i in (0, 299) else "vanlig"
        index.add_document(f"d{i:04d}", text)
    index.save(tmp_path / "text")
    loaded = TextIndex.load(tmp_path / "text")
    assert loaded.search("sjelden", 5) == index.search("sjelden", 5)
    assert loaded.document_frequency("vanlig") == 298
