"""TREC run and qrels files."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

from .conversation import DataError

logger = logging.getLogger(__name__)

CAST_GRADES = frozenset({0, 1, 2})


@dataclass(frozen=True)
class RunEntry:
    docno: str
    rank: int
    score: float


@dataclass
class Run:
    """Ranked results per query id. Lists are kept in rank order."""

    entries: dict[str, list[RunEntry]] = field(default_factory=dict)
    tag: str = "run"

    def validate(self) -> "Run":
        for qid, rows in self.entries.items():
            if [r.rank for r in rows] != list(range(1, len(rows) + 1)):
                raise DataError(f"run {self.tag}: query {qid} ranks are not 1..{len(rows)}")
            docnos = [r.docno for r in rows]
            if len(set(docnos)) != len(docnos):
                raise DataError(f"run {self.tag}: query {qid} repeats a docno")
            for prev, cur in zip(rows, rows[1:]):
                if cur.score > prev.score:
                    raise DataError(
                        f"run {self.tag}: query {qid} score increases at rank {cur.rank}")
        return self

    def docnos(self, qid: str) -> list[str]:
        return [r.docno for r in self.entries.get(qid, [])]

    def __len__(self):
        return sum(len(v) for v in self.entries.values())

    @classmethod
    def from_scored(cls, results: dict, tag: str) -> "Run":
        """Build from ``{qid: [ScoredDoc, ...]}``."""
        return cls({qid: [RunEntry(d.docno, d.rank, d.score) for d in docs]
                    for qid, docs in results.items()}, tag)


def _format_score(score: float) -> str:
    if math.isinf(score):
        return "-inf" if score < 0 else "inf"
    return f"{score:.6f}"


def write_run(run: Run, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for qid, rows in run.entries.items():
            for r in rows:
                fh.write(f"{qid} Q0 {r.docno} {r.rank} {_format_score(r.score)} {run.tag}\n")


def read_run(path) -> Run:
    """Parse a six-column run file; rows are re-sorted by rank per query."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"run file not found: {path}")
    rows: dict[str, list[RunEntry]] = {}
    tag = None
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            cols = line.split()
            if len(cols) != 6:
                raise DataError(f"{path}:{lineno}: expected 6 columns, found {len(cols)}")
            qid, _, docno, rank, score, line_tag = cols
            try:
                entry = RunEntry(docno, int(rank), float(score))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-numeric rank or score") from exc
            rows.setdefault(qid, []).append(entry)
            tag = tag or line_tag
    for qid in rows:
        rows[qid].sort(key=lambda r: r.rank)
    return Run(rows, tag or path.stem).validate()


@dataclass
class Qrels:
    judgments: dict[str, dict[str, int]] = field(default_factory=dict)

    def grade(self, qid: str, docno: str) -> int:
        return self.judgments.get(qid, {}).get(docno, 0)

    def relevant(self, qid: str, threshold: int = 1) -> set[str]:
        return {d for d, g in self.judgments.get(qid, {}).items() if g >= threshold}

    def topics(self) -> list[str]:
        return list(self.judgments)


def read_qrels(path, scale=CAST_GRADES) -> Qrels:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"qrels file not found: {path}")
    judgments: dict[str, dict[str, int]] = {}
    outside = 0
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            cols = line.split()
            if len(cols) != 4:
                raise DataError(f"{path}:{lineno}: expected 'qid 0 docno grade'")
            qid, _, docno, grade = cols
            try:
                grade = int(grade)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: grade must be an integer") from exc
            if grade < 0:
                raise DataError(f"{path}:{lineno}: negative grade {grade}")
            if scale is not None and grade not in scale:
                outside += 1
            judgments.setdefault(qid, {})[docno] = grade
    if outside:
        logger.warning("%s: %d judgments outside the grade scale %s", path, outside, sorted(scale))
    return Qrels(judgments)


def write_qrels(qrels: Qrels, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for qid, docs in qrels.judgments.items():
            for docno, grade in docs.items():
                fh.write(f"{qid} 0 {docno} {grade}\n")
