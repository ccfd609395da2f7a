import json
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convrewrite.metrics import (EvalConfig, MetricReport, dcg, evaluate, mrr, ndcg, ndcg_at,
                                 precision, precision_at, recall, recall_at, reciprocal_rank)
from convrewrite.trec import Qrels, Run, RunEntry, read_qrels, read_run
import oracles
from conftest import FIXTURES, GOLDEN


def make_run(rankings, tag="t"):
    return Run({q: [RunEntry(d, i, -float(i)) for i, d in enumerate(r, 1)]
                for q, r in rankings.items()}, tag)


def random_instance(rng, n_topics=4, pool=30):
    rankings, judgments = {}, {}
    for t in range(n_topics):
        docs = [f"d{i}" for i in range(pool)]
        rankings[f"q{t}"] = rng.sample(docs, rng.randint(1, pool))
        judged = rng.sample(docs, rng.randint(1, pool))
        judgments[f"q{t}"] = {d: rng.choice([0, 0, 1, 2]) for d in judged}
        if not any(judgments[f"q{t}"].values()):
            judgments[f"q{t}"][judged[0]] = 1
    return rankings, judgments


def test_per_ranking_examples():
    judged = {"a": 0, "b": 0, "c": 1}
    assert reciprocal_rank(["a", "b", "c"], judged) == pytest.approx(1 / 3)
    assert reciprocal_rank(["c"], judged) == 1.0
    assert precision(["x"], {"x": 2}, 1) == 1.0
    assert precision(["x"], {"x": 0}, 1) == 0.0
    assert precision(["x"], {"x": 1}, 5) == pytest.approx(0.2)
    assert recall(["a", "b"], {"a": 1, "b": 1, "c": 1, "d": 1}, 500) == 0.5
    assert recall(["a", "b"], {"a": 1, "b": 2}, 500) == 1.0


def test_ndcg_worked_example():
    judged = {"r1": 2, "r2": 0, "r3": 1, "x": 0}
    assert dcg([2, 0, 1], 3) == pytest.approx(2.5, abs=1e-12)
    assert dcg([2, 1, 0], 3) == pytest.approx(2 + 1 / math.log2(3), abs=1e-12)
    assert dcg([2, 1, 0], 3) == pytest.approx(2.6309, abs=1e-4)
    assert ndcg(["r1", "r2", "r3"], judged, 3) == pytest.approx(0.9502, abs=1e-4)
    assert ndcg(["r1", "r3", "r2", "x"], judged, 3) == 1.0
    assert ndcg(["r2", "x"], judged, 3) == 0.0


def test_exponential_gain():
    assert dcg([2, 1], 2, "exponential") == pytest.approx(3 + 1 / math.log2(3))


@pytest.mark.parametrize("seed", range(200))
def test_random_instances_match_oracle(seed):
    rng = random.Random(seed)
    rankings, judgments = random_instance(rng)
    run, qrels = make_run(rankings), Qrels(judgments)
    k = rng.choice([1, 3, 5, 10])
    got = {"mrr": mrr(run, qrels), "p": precision_at(run, qrels, k),
           "ndcg": ndcg_at(run, qrels, k), "r": recall_at(run, qrels, k)}
    for q, ranking in rankings.items():
        j = judgments[q]
        assert got["mrr"][q] == pytest.approx(oracles.rr(ranking, j), abs=1e-10)
        assert got["p"][q] == pytest.approx(oracles.p_at(ranking, j, k), abs=1e-10)
        assert got["ndcg"][q] == pytest.approx(oracles.ndcg_at(ranking, j, k), abs=1e-10)
        assert got["r"][q] == pytest.approx(oracles.r_at(ranking, j, k), abs=1e-10)


def test_single_perfect_topic():
    report = evaluate(make_run({"q": ["a", "b"]}), Qrels({"q": {"a": 1, "b": 0}}))
    assert report.means == {"mrr": 1.0, "p@1": 1.0, "ndcg@3": 1.0, "r@500": 1.0}


def test_topic_order_does_not_change_means():
    rankings, judgments = random_instance(random.Random(5), n_topics=6)
    a = evaluate(make_run(rankings), Qrels(judgments))
    b = evaluate(make_run(dict(reversed(list(rankings.items())))), Qrels(judgments))
    for m in a.metrics:
        assert a.means[m] == pytest.approx(b.means[m], abs=1e-15)


@settings(max_examples=100)
@given(st.integers(0, 10**6))
def test_values_in_unit_interval_and_means_are_means(seed):
    rankings, judgments = random_instance(random.Random(seed))
    report = evaluate(make_run(rankings), Qrels(judgments), EvalConfig((1, 5), (3, 10), (20,)))
    for m in report.metrics:
        vec = report.vector(m)
        assert all(0.0 <= v <= 1.0 for v in vec.values())
        assert report.means[m] == pytest.approx(sum(vec.values()) / len(vec), abs=1e-12)


def test_topic_handling(caplog):
    run = make_run({"a": ["x"], "unjudged": ["x"]})
    qrels = Qrels({"a": {"x": 1}, "missing": {"y": 1}, "no_positive": {"x": 0}})
    strict = evaluate(run, qrels)
    assert set(strict.per_topic) == {"a", "missing"}
    assert strict.per_topic["missing"]["mrr"] == 0.0
    lenient = evaluate(run, qrels, EvalConfig(strict=False))
    assert set(lenient.per_topic) == {"a"}
    assert "unjudged" in caplog.text and "no_positive" in caplog.text


def test_rel_threshold():
    run, qrels = make_run({"q": ["a", "b"]}), Qrels({"q": {"a": 1, "b": 2}})
    assert mrr(run, qrels, rel_threshold=2)["q"] == 0.5
    with pytest.raises(ValueError):
        mrr(run, qrels, rel_threshold=0)


def test_golden_three_topic_report(tmp_path):
    golden = json.loads((GOLDEN / "eval3_report.json").read_text())
    report = evaluate(read_run(FIXTURES / "eval3.run"), read_qrels(FIXTURES / "eval3.qrels"))
    assert report.metrics == golden["metrics"]
    assert set(report.per_topic) == set(golden["per_topic"])
    for q, vals in golden["per_topic"].items():
        for m, v in vals.items():
            assert report.per_topic[q][m] == pytest.approx(v, abs=1e-12)
    for m, v in golden["means"].items():
        assert report.means[m] == pytest.approx(v, abs=1e-12)
    report.save_json(tmp_path / "r.json")
    back = MetricReport.load_json(tmp_path / "r.json")
    assert back.per_topic == report.per_topic and back.means == report.means
    text = report.to_text(per_topic=True)
    assert text.splitlines()[-2].startswith("all") and "# topics = 3" in text
