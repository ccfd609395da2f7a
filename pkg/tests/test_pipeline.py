import json

import pytest

from convrewrite.cli import main
from convrewrite.config import resolve_config
from convrewrite.conversation import DataError
from convrewrite.llm import API_KEY_ENV, BackendError
from convrewrite.pipeline import run_pipeline
from conftest import ECHO_SCORER, toy_path


def toy_config(tmp_path, **overrides):
    return resolve_config(toy_path("pipeline.conf"), {"out_dir": str(tmp_path), **overrides})


def read_means(out, stage, system):
    return json.loads((out / "reports" / stage / f"{system}.json").read_text())["means"]


def test_artifact_layout(tmp_path):
    cfg = toy_config(tmp_path, transcript="true", template="P1")
    out = run_pipeline(cfg)
    assert out == tmp_path / f"cfg-{cfg.hash}"
    for rel in ["config.txt", "rewrites.tsv", "answers.tsv", "transcript.jsonl",
                "runs/first-stage/raw.run", "runs/second-stage/rewritten.run",
                "reports/first-stage/manual.json", "reports/second-stage/raw.txt",
                "comparison/first-stage.txt", "comparison/second-stage.json"]:
        assert (out / rel).is_file(), rel
    assert (out / "rewrites.tsv").read_text().startswith(f"# config {cfg.hash}")
    tags = {line.split()[-1] for line in (out / "runs/first-stage/raw.run").read_text().splitlines()}
    assert tags == {f"raw-dph-{cfg.hash[:8]}"}
    comparison = json.loads((out / "comparison/first-stage.json").read_text())
    assert [(c["system_a"], c["system_b"], c["m"]) for c in comparison["comparisons"]] == \
        [("manual", "raw", 2), ("rewritten", "raw", 2)]


def test_rewritten_beats_raw_on_toy_fixture(tmp_path):
    out = run_pipeline(toy_config(tmp_path))
    for stage in ("first-stage", "second-stage"):
        raw, rew = read_means(out, stage, "raw"), read_means(out, stage, "rewritten")
        assert rew["mrr"] >= raw["mrr"] and rew["ndcg@3"] >= raw["ndcg@3"]


def test_no_rerank_and_external_reranker(tmp_path):
    out = run_pipeline(toy_config(tmp_path / "a", rerank="false"))
    assert not (out / "runs" / "second-stage").exists()
    out = run_pipeline(toy_config(tmp_path / "b", reranker="external",
                                  reranker_command=" ".join(ECHO_SCORER)))
    first = (out / "runs/first-stage/raw.run").read_text().split("\n")
    second = (out / "runs/second-stage/raw.run").read_text().split("\n")
    assert [l.split()[:4] for l in first if l] == [l.split()[:4] for l in second if l]


def test_prebuilt_index(tmp_path):
    idx = tmp_path / "toy.idx"
    assert main(["index", "--collection", str(toy_path("collection.tsv")), "--out", str(idx)]) == 0
    a = run_pipeline(toy_config(tmp_path / "a", rerank="false"))
    b = run_pipeline(toy_config(tmp_path / "b", rerank="false", index=str(idx)))
    assert (a / "runs/first-stage/raw.run").read_text().split()[:5] == \
        (b / "runs/first-stage/raw.run").read_text().split()[:5]


def test_http_without_key_fails_before_work(tmp_path, monkeypatch):
    monkeypatch.delenv(API_KEY_ENV, raising=False)
    with pytest.raises(BackendError, match=API_KEY_ENV):
        run_pipeline(toy_config(tmp_path, backend="http"))
    assert list(tmp_path.iterdir()) == []


def test_missing_inputs(tmp_path):
    with pytest.raises(DataError, match="qrels"):
        run_pipeline(resolve_config(None, {"topics": str(toy_path("topics.json")),
                                           "out_dir": str(tmp_path)}))
