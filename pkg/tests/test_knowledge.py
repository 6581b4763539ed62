import math
from collections import Counter
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from textnmn.knowledge import (
    B, K1, AbstractDoc, IndexFormatError, KbIndex, bm25_term, doc_vector, extract_query_nouns,
    filter_abstracts, hashed_vector, ingest_abstracts, kb_vector_for_question, search, tokenize,
)

DATA = Path(__file__).parent / "data"
VOCAB = [f"t{i}" for i in range(25)]


def brute_force_ranking(texts, terms, k):
    """Score every document directly from its tokens."""
    toks = [tokenize(t) for t in texts]
    n = len(toks)
    avgdl = sum(len(t) for t in toks) / n
    counts = [Counter(t) for t in toks]
    scores = {}
    for term in dict.fromkeys(terms):
        df = sum(1 for c in counts if term in c)
        if df == 0:
            continue
        idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
        for d, c in enumerate(counts):
            tf = c.get(term, 0)
            if tf:
                s = idf * (tf * (K1 + 1.0)) / (tf + K1 * (1.0 - B + B * len(toks[d]) / avgdl))
                scores[d] = scores.get(d, 0.0) + s
    return sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:k]


def random_corpus(r, n_docs):
    texts = [" ".join(r.choice(VOCAB, size=r.integers(0, 30))) for _ in range(n_docs)]
    docs = [AbstractDoc(i, f"Doc{i}", t, len(tokenize(t))) for i, t in enumerate(texts)]
    return texts, docs


def random_query(r):
    return list(r.choice(VOCAB + ["absent"], size=r.integers(1, 5)))


def test_search_matches_brute_force_on_random_corpora():
    r = np.random.default_rng(11)
    for _ in range(20):
        texts, docs = random_corpus(r, int(r.integers(1, 201)))
        index = KbIndex.build(docs, dim=8)
        for _ in range(50):
            terms, k = random_query(r), int(r.integers(1, 12))
            assert search(index, terms, k) == brute_force_ranking(texts, terms, k)


@settings(max_examples=25)
@given(st.integers(0, 2**31), st.integers(1, 60))
def test_search_property(seed, n_docs):
    r = np.random.default_rng(seed)
    texts, docs = random_corpus(r, n_docs)
    index = KbIndex.build(docs, dim=4)
    terms = random_query(r)
    assert search(index, terms, 10) == brute_force_ranking(texts, terms, 10)


def test_search_small_cases():
    docs = [AbstractDoc(0, "A", "pizza pie", 2)]
    index = KbIndex.build(docs, dim=4)
    hits = search(index, ["pizza"], 3)
    assert [d for d, _ in hits] == [0] and hits[0][1] > 0
    assert search(index, ["sushi"], 3) == []
    assert search(index, [], 3) == []
    with pytest.raises(ValueError):
        search(index, ["pizza"], 0)


def test_five_doc_toy_ranking():
    texts = ["pizza with meat and cheese", "meat meat meat", "a pizza", "salad", "pizza pizza meat"]
    docs = [AbstractDoc(i, f"D{i}", t, len(tokenize(t))) for i, t in enumerate(texts)]
    index = KbIndex.build(docs, dim=4)
    assert search(index, ["pizza", "meat"], 5) == brute_force_ranking(texts, ["pizza", "meat"], 5)


def test_bm25_strictly_increasing_in_term_frequency():
    values = [bm25_term(tf, 20, 15.0, 1.3) for tf in range(1, 40)]
    assert all(b > a for a, b in zip(values, values[1:]))


def test_noun_title_filter():
    docs, dropped, malformed = filter_abstracts([
        "Pizza\tA dish.\n", "let it be\tA song.\n", "New York City\tA city.\n"])
    assert [d.title for d in docs] == ["Pizza", "New York City"]
    assert [d.doc_id for d in docs] == [0, 1]
    assert dropped == 1 and malformed == 0


def test_malformed_lines_skipped_and_empty_corpus_rejected(tmp_path):
    docs, dropped, malformed = filter_abstracts(["no tab here\n", "Pizza\tok\n", "a\tb\tc\n"])
    assert len(docs) == 1 and malformed == 2
    path = tmp_path / "abs.tsv"
    path.write_text("let it be\tsong\n", encoding="utf-8")
    with pytest.raises(ValueError, match="no abstracts"):
        ingest_abstracts(path)


def test_fixture_ingest_counts_tokens():
    docs = ingest_abstracts(DATA / "abstracts.tsv")
    titles = [d.title for d in docs]
    assert "Pizza" in titles and "let it be" not in titles
    for d in docs:
        assert d.token_count == len(tokenize(d.text))
    assert [d.doc_id for d in docs] == list(range(len(docs)))


@pytest.mark.parametrize("question,nouns", [
    ("what toppings are on the pizza", ["toppings", "pizza"]),
    ("is it", []),
    ("why are the people wearing helmets", ["people", "helmets"]),
    ("What color is the the Pizza?", ["color", "pizza"]),
])
def test_query_nouns(question, nouns):
    assert extract_query_nouns(question.split()) == nouns


def test_pizza_fixture_ranks_pizza_first():
    index = KbIndex.build(ingest_abstracts(DATA / "abstracts.tsv"))
    hits = search(index, extract_query_nouns("what toppings are on the pizza".split()), 3)
    assert index.titles[hits[0][0]] == "Pizza"


def test_doc_vector_cases():
    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    table = {"a": e1 * 3.0, "b": e2}
    assert np.allclose(doc_vector(["a"], table.get, lambda t: 2.0, 2), e1, atol=1e-15)
    assert np.array_equal(doc_vector(["zz"], table.get, lambda t: 1.0, 2), np.zeros(2))
    idf = {"a": 1.0, "b": 3.0}
    # (1 * [3, 0] + 3 * [0, 1]) / 4, normalized
    want = np.array([3.0, 3.0]) / np.linalg.norm([3.0, 3.0])
    assert np.allclose(doc_vector(["a", "b"], table.get, idf.get, 2), want, atol=1e-15)


def test_index_vectors_are_unit_or_zero():
    r = np.random.default_rng(2)
    _, docs = random_corpus(r, 60)
    index = KbIndex.build(docs, dim=16)
    norms = np.linalg.norm(index.vectors, axis=1)
    for n, d in zip(norms, docs):
        if d.token_count == 0:
            assert n == 0.0
        else:
            assert abs(n - 1.0) <= 1e-12


def test_build_uses_embedding_dimension_and_is_deterministic():
    docs = ingest_abstracts(DATA / "abstracts.tsv")
    emb = {w: hashed_vector(w, 5) for w in ("pizza", "meat", "tennis")}
    index = KbIndex.build(docs, emb)
    assert index.dim == 5
    again = KbIndex.build(docs, emb)
    assert index.postings == again.postings
    assert index.vectors.tobytes() == again.vectors.tobytes()


def test_kb_vector_for_question_cases():
    docs = ingest_abstracts(DATA / "abstracts.tsv")
    index = KbIndex.build(docs, dim=12)
    assert np.array_equal(kb_vector_for_question("is it".split(), index), np.zeros(12))
    giraffe = [d.doc_id for d in docs if d.title == "Giraffe"][0]
    assert np.array_equal(kb_vector_for_question(["giraffe"], index, 1), index.vectors[giraffe])
    hits = search(index, ["pizza"], 2)
    want = (index.vectors[hits[0][0]] + index.vectors[hits[1][0]]) / 2
    assert np.allclose(kb_vector_for_question(["pizza"], index, 2), want, atol=1e-15)


def test_index_save_load_round_trip(tmp_path):
    index = KbIndex.build(ingest_abstracts(DATA / "abstracts.tsv"), dim=7)
    index.save(tmp_path / "i.idx")
    back = KbIndex.load(tmp_path / "i.idx")
    assert back.postings == index.postings
    assert back.titles == index.titles and back.doc_lengths == index.doc_lengths
    assert back.vectors.tobytes() == index.vectors.tobytes()
    q = ["toppings", "pizza", "meat"]
    assert search(back, q, 5) == search(index, q, 5)
    back.save(tmp_path / "j.idx")
    assert (tmp_path / "j.idx").read_bytes() == (tmp_path / "i.idx").read_bytes()


def test_index_load_rejects_corruption(tmp_path):
    index = KbIndex.build(ingest_abstracts(DATA / "abstracts.tsv"), dim=3)
    index.save(tmp_path / "i.idx")
    raw = (tmp_path / "i.idx").read_bytes()
    cases = {"magic": b"XXXXXXXX" + raw[8:], "truncated": raw[:-5], "short": raw[:10],
             "header": raw[:12] + b"[" + raw[13:],
             "version": raw.replace(b"\"version\":1", b"\"version\":9")}
    for name, blob in cases.items():
        (tmp_path / name).write_bytes(blob)
        with pytest.raises(IndexFormatError):
            KbIndex.load(tmp_path / name)
