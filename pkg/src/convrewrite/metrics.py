"""Rank-based effectiveness measures: MRR, P@k, NDCG@k and R@k.

Each measure has a per-ranking function and a run-level function returning
``{qid: value}`` for the topics it is defined on. Topic handling:

* run topics without judgments are ignored (with a warning);
* judged topics without a relevant document are left out of MRR, P@k and
  R@k; judged topics whose ideal DCG is 0 are left out of NDCG;
* judged topics missing from the run score 0 (``strict=True``) or are
  dropped (``strict=False``).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .trec import Qrels, Run

logger = logging.getLogger(__name__)


def reciprocal_rank(ranking: Sequence[str], judged: dict, threshold: int = 1) -> float:
    for i, docno in enumerate(ranking, 1):
        if judged.get(docno, 0) >= threshold:
            return 1.0 / i
    return 0.0


def precision(ranking: Sequence[str], judged: dict, k: int, threshold: int = 1) -> float:
    hits = sum(1 for d in ranking[:k] if judged.get(d, 0) >= threshold)
    return hits / k


def recall(ranking: Sequence[str], judged: dict, k: int, threshold: int = 1) -> float:
    relevant = {d for d, g in judged.items() if g >= threshold}
    if not relevant:
        return 0.0
    return len(relevant.intersection(ranking[:k])) / len(relevant)


def _gain(grade: int, gain: str) -> float:
    if gain == "linear":
        return float(grade)
    if gain == "exponential":
        return 2.0 ** grade - 1.0
    raise ValueError(f"unknown gain {gain!r}")


def dcg(grades: Sequence[int], k: int, gain: str = "linear") -> float:
    return sum(_gain(g, gain) / math.log2(i + 1) for i, g in enumerate(grades[:k], 1))


def ndcg(ranking: Sequence[str], judged: dict, k: int, gain: str = "linear") -> float:
    ideal = dcg(sorted(judged.values(), reverse=True), k, gain)
    if ideal == 0:
        return 0.0
    return dcg([judged.get(d, 0) for d in ranking], k, gain) / ideal


def _topics(run: Run, qrels: Qrels, eligible, strict: bool, name: str):
    for qid in run.entries:
        if qid not in qrels.judgments:
            logger.warning("%s: topic %s has no judgments; excluded", name, qid)
    for qid, judged in qrels.judgments.items():
        if not eligible(judged):
            logger.warning("%s: topic %s has no positive judgments; excluded", name, qid)
            continue
        if qid not in run.entries and not strict:
            continue
        yield qid, run.docnos(qid), judged


def _positive(threshold):
    return lambda judged: any(g >= threshold for g in judged.values())


def mrr(run: Run, qrels: Qrels, rel_threshold: int = 1, strict: bool = True) -> dict[str, float]:
    if rel_threshold < 1:
        raise ValueError("rel_threshold must be >= 1")
    return {qid: reciprocal_rank(r, j, rel_threshold)
            for qid, r, j in _topics(run, qrels, _positive(rel_threshold), strict, "mrr")}


def precision_at(run: Run, qrels: Qrels, k: int, rel_threshold: int = 1,
                 strict: bool = True) -> dict[str, float]:
    return {qid: precision(r, j, k, rel_threshold)
            for qid, r, j in _topics(run, qrels, _positive(rel_threshold), strict, f"p@{k}")}


def recall_at(run: Run, qrels: Qrels, k: int, rel_threshold: int = 1,
              strict: bool = True) -> dict[str, float]:
    return {qid: recall(r, j, k, rel_threshold)
            for qid, r, j in _topics(run, qrels, _positive(rel_threshold), strict, f"r@{k}")}


def ndcg_at(run: Run, qrels: Qrels, k: int, gain: str = "linear",
            strict: bool = True) -> dict[str, float]:
    return {qid: ndcg(r, j, k, gain)
            for qid, r, j in _topics(run, qrels, _positive(1), strict, f"ndcg@{k}")}


@dataclass(frozen=True)
class EvalConfig:
    precision_cutoffs: tuple[int, ...] = (1,)
    ndcg_cutoffs: tuple[int, ...] = (3,)
    recall_cutoffs: tuple[int, ...] = (500,)
    rel_threshold: int = 1
    gain: str = "linear"
    strict: bool = True

    def metric_names(self) -> list[str]:
        return (["mrr"] + [f"p@{k}" for k in self.precision_cutoffs]
                + [f"ndcg@{k}" for k in self.ndcg_cutoffs]
                + [f"r@{k}" for k in self.recall_cutoffs])

    def to_dict(self) -> dict:
        return {"precision_cutoffs": list(self.precision_cutoffs),
                "ndcg_cutoffs": list(self.ndcg_cutoffs),
                "recall_cutoffs": list(self.recall_cutoffs),
                "rel_threshold": self.rel_threshold, "gain": self.gain,
                "strict": self.strict}


@dataclass
class MetricReport:
    per_topic: dict[str, dict[str, float]]
    means: dict[str, float]
    metrics: list[str]
    run_tag: str = ""
    settings: dict = field(default_factory=dict)

    @property
    def topic_count(self) -> int:
        return len(self.per_topic)

    def vector(self, metric: str) -> dict[str, float]:
        return {qid: vals[metric] for qid, vals in self.per_topic.items() if metric in vals}

    def to_json_obj(self) -> dict:
        return {"run": self.run_tag, "settings": self.settings, "metrics": self.metrics,
                "topic_count": self.topic_count, "means": self.means,
                "per_topic": self.per_topic}

    def save_json(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json_obj(), indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")

    @classmethod
    def from_json_obj(cls, obj) -> "MetricReport":
        return cls(per_topic=obj["per_topic"], means=obj["means"], metrics=obj["metrics"],
                   run_tag=obj.get("run", ""), settings=obj.get("settings", {}))

    @classmethod
    def load_json(cls, path) -> "MetricReport":
        return cls.from_json_obj(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_text(self, per_topic: bool = False) -> str:
        lines = []
        for key in sorted(self.settings):
            lines.append(f"# {key} = {self.settings[key]}")
        width = max([len("topic")] + [len(q) for q in self.per_topic]) if per_topic else len("all")
        header = f"{'topic':<{width}}  " + "  ".join(f"{m:>8}" for m in self.metrics)
        lines.append(header)
        if per_topic:
            for qid, vals in self.per_topic.items():
                cells = [f"{vals[m]:8.4f}" if m in vals else f"{'-':>8}" for m in self.metrics]
                lines.append(f"{qid:<{width}}  " + "  ".join(cells))
        lines.append(f"{'all':<{width}}  " + "  ".join(f"{self.means[m]:8.4f}" for m in self.metrics))
        lines.append(f"# topics = {self.topic_count}")
        return "\n".join(lines) + "\n"


def evaluate(run: Run, qrels: Qrels, config: EvalConfig | None = None) -> MetricReport:
    config = config or EvalConfig()
    columns: dict[str, dict[str, float]] = {
        "mrr": mrr(run, qrels, config.rel_threshold, config.strict)}
    for k in config.precision_cutoffs:
        columns[f"p@{k}"] = precision_at(run, qrels, k, config.rel_threshold, config.strict)
    for k in config.ndcg_cutoffs:
        columns[f"ndcg@{k}"] = ndcg_at(run, qrels, k, config.gain, config.strict)
    for k in config.recall_cutoffs:
        columns[f"r@{k}"] = recall_at(run, qrels, k, config.rel_threshold, config.strict)

    per_topic: dict[str, dict[str, float]] = {}
    for qid in qrels.judgments:
        vals = {m: col[qid] for m, col in columns.items() if qid in col}
        if vals:
            per_topic[qid] = vals
    means = {m: (math.fsum(col.values()) / len(col) if col else 0.0) for m, col in columns.items()}
    return MetricReport(per_topic, means, config.metric_names(), run.tag, config.to_dict())
