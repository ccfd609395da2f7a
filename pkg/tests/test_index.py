import io
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convrewrite.conversation import DataError, read_key_value_tsv
from convrewrite.index import (InvertedIndex, LexicalRetriever, Passage, build_index,
                               read_collection, score_bm25, score_dph, search)
from convrewrite.trec import read_run, write_run
import oracles
from conftest import FIXTURES, GOLDEN, toy_path


# -- weighting functions -----------------------------------------------------------

def test_dph_oracle_value():
    # tf=1, dl=3, ctf=2, N=3, avgdl=3: f=1/3, norm=(4/9)/2, inner=log2(1.5)+0.5*log2(4*pi/3)
    expected = (2 / 9) * (math.log2(1.5) + 0.5 * math.log2(4 * math.pi / 3))
    assert score_dph(1, 3, 2, 3, 3, 1) == pytest.approx(expected, rel=1e-14)
    assert score_dph(1, 3, 2, 3, 3, 1) == pytest.approx(0.3596065144659417, rel=1e-14)


def test_dph_linear_in_qtf_and_zero_tf():
    assert score_dph(2, 7, 5, 10, 6.5, 2) == pytest.approx(2 * score_dph(2, 7, 5, 10, 6.5, 1))
    assert score_dph(0, 7, 5, 10, 6.5) == 0.0


@pytest.mark.parametrize("tf", [1, 2, 5])
def test_dph_guard_when_document_is_the_term(tf):
    value = score_dph(tf, tf, tf, 10, 4.0)
    assert math.isfinite(value)
    assert value == pytest.approx(oracles.dph(tf, tf, tf, 10, 4.0))


def test_bm25_oracle_value():
    idf = math.log((4 - 1 + 0.5) / (1 + 0.5) + 1)
    expected = idf * 2 * 2.2 / (2 + 1.2)
    assert score_bm25(2, 10, 1, 4, 10) == pytest.approx(expected, rel=1e-14)
    assert score_bm25(2, 10, 1, 4, 10) == pytest.approx(1.655462605948162, rel=1e-14)


def test_bm25_edge_cases():
    assert score_bm25(0, 10, 1, 4, 10) == 0.0
    assert score_bm25(3, 5, 2, 9, 20, b=0.0) == score_bm25(3, 50, 2, 9, 20, b=0.0)
    assert score_bm25(1, 5, 9, 9, 5) > 0  # Robertson idf stays positive


@settings(max_examples=300)
@given(tf=st.integers(1, 50), extra=st.integers(0, 200), ctf_extra=st.integers(0, 500),
       n=st.integers(1, 10**6), avgdl=st.floats(0.5, 500), qtf=st.integers(1, 5))
def test_dph_matches_oracle_and_finite(tf, extra, ctf_extra, n, avgdl, qtf):
    dl, ctf = tf + extra, tf + ctf_extra
    value = score_dph(tf, dl, ctf, n, avgdl, qtf)
    assert math.isfinite(value)
    assert value == pytest.approx(oracles.dph(tf, dl, ctf, n, avgdl, qtf), rel=1e-12, abs=1e-12)


# -- index structure ----------------------------------------------------------------

def test_small_index_stats():
    idx = build_index([("a", "throat cancer risk"), ("b", "lung cancer risk"),
                       ("c", "throat lung cancer")])
    assert idx.num_docs == 3 and idx.avgdl == 3
    assert idx.df("cancer") == 3 and idx.collection_tf["throat"] == 2
    idx.check()


def test_stopword_only_passage():
    idx = build_index([("a", "the of and"), ("b", "cancer")])
    assert list(idx.doc_lengths) == [0, 1]
    assert all(0 not in docs for docs, _ in idx.postings.values())


def test_duplicate_docno():
    with pytest.raises(DataError, match="duplicate"):
        build_index([("a", "x"), ("a", "y")])
    with pytest.raises(DataError):
        Passage("has space", "x")


corpora = st.lists(st.lists(st.sampled_from(
    "throat cancer lung risk smoke the of treat symptom cough egypt bronze age collapse".split()),
    min_size=0, max_size=12).map(" ".join), min_size=1, max_size=30)


@settings(max_examples=80, deadline=None)
@given(texts=corpora)
def test_index_invariants_and_round_trip(texts):
    docs = [(f"d{i:03d}", t) for i, t in enumerate(texts)]
    idx = build_index(docs)
    idx.check()
    assert sum(idx.collection_tf.values()) == idx.total_length
    data = idx.to_bytes()
    assert build_index(docs).to_bytes() == data
    back = InvertedIndex.from_bytes(data)
    assert back.to_bytes() == data
    assert back.docnos == idx.docnos and list(back.doc_lengths) == list(idx.doc_lengths)
    assert {t: (list(d), list(f)) for t, (d, f) in back.postings.items()} == \
        {t: (list(d), list(f)) for t, (d, f) in idx.postings.items()}


def test_index_file_errors(tmp_path):
    idx = build_index([("a", "throat cancer")])
    path = tmp_path / "x.idx"
    idx.save(path)
    assert InvertedIndex.load(path).docnos == ["a"]
    data = path.read_bytes()
    with pytest.raises(DataError, match="magic"):
        InvertedIndex.from_bytes(b"XXXXXXXX" + data[8:])
    with pytest.raises(DataError, match="truncated"):
        InvertedIndex.from_bytes(data[:-3])
    with pytest.raises(DataError, match="trailing"):
        InvertedIndex.from_bytes(data + b"\0")
    with pytest.raises(DataError, match="not found"):
        InvertedIndex.load(tmp_path / "missing")


def test_dump_text():
    buf = io.StringIO()
    build_index([("a", "throat cancer"), ("b", "cancer")]).dump_text(buf)
    assert "term\tcancer\t2\t0:1 1:1" in buf.getvalue()


def test_read_collection_file_and_dir(tmp_path):
    (tmp_path / "c").mkdir()
    (tmp_path / "c" / "1.tsv").write_text("a\tone\n\n")
    (tmp_path / "c" / "2.tsv").write_text("b\ttwo\n")
    assert [p.docno for p in read_collection(tmp_path / "c")] == ["a", "b"]
    bad = tmp_path / "bad.tsv"
    bad.write_text("no tab here\n")
    with pytest.raises(DataError, match="bad.tsv:1"):
        list(read_collection(bad))


# -- search ------------------------------------------------------------------------

def test_search_match_set():
    idx = build_index([("a", "throat cancer"), ("b", "lung disease"), ("c", "cancer risk")])
    assert sorted(d.docno for d in search(idx, "cancer")) == ["a", "c"]
    assert search(idx, "the of") == []


def test_absent_term_contributes_nothing():
    idx = build_index([("a", "throat cancer"), ("b", "lung cancer")])
    assert [(d.docno, d.score) for d in search(idx, "cancer zebra")] == \
        [(d.docno, d.score) for d in search(idx, "cancer")]


def check_ranking(results, k):
    assert [r.rank for r in results] == list(range(1, len(results) + 1))
    assert len(results) <= k
    for a, b in zip(results, results[1:]):
        assert (-a.score, a.docno) < (-b.score, b.docno)
    assert all(math.isfinite(r.score) for r in results)


@settings(max_examples=60, deadline=None)
@given(texts=corpora, query=st.lists(st.sampled_from(
    "throat cancer lung risk the treat cough age zebra".split()), min_size=1, max_size=4).map(" ".join),
    model=st.sampled_from(["dph", "bm25"]), k=st.integers(1, 40))
def test_search_equals_brute_force(texts, query, model, k):
    docs = [(f"d{i:03d}", t) for i, t in enumerate(texts)]
    got = search(build_index(docs), query, k=k, model=model)
    check_ranking(got, k)
    want = oracles.brute_force_search(docs, query, model, k=k)
    assert [d.docno for d in got] == [d for d, _ in want]
    for d, (_, s) in zip(got, want):
        assert d.score == pytest.approx(s, rel=1e-12, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(texts=corpora, k=st.integers(1, 10))
def test_truncation_is_a_prefix(texts, k):
    idx = build_index([(f"d{i:03d}", t) for i, t in enumerate(texts)])
    full = search(idx, "cancer risk lung", k=1000)
    assert search(idx, "cancer risk lung", k=k) == full[:k]


@pytest.mark.parametrize("model", ["dph", "bm25"])
def test_toy_golden_run(tmp_path, model):
    retriever = LexicalRetriever(model=model, k=10).fit(read_collection(toy_path("collection.tsv")))
    run = retriever.predict(read_key_value_tsv(FIXTURES / "toy_queries.tsv"))
    out = tmp_path / "x.run"
    write_run(run, out)
    golden = GOLDEN / f"toy_search_{model}.run"
    assert out.read_text() == golden.read_text()
    assert len(golden.read_text().splitlines()) <= 40
    assert read_run(out).entries.keys() == run.entries.keys()


def test_retriever_validation():
    with pytest.raises(ValueError, match="ranking model"):
        LexicalRetriever(model="tfidf").fit([("a", "x")])
    with pytest.raises(ValueError):
        LexicalRetriever(k=0).fit([("a", "x")])
