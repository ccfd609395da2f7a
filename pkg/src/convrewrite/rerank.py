"""Second-stage reranking of first-stage candidates.

Rerankers expose ``score_batch(qid, query, candidates) -> list[float]``.
:class:`Reranker` provides a per-pair default on top of ``score_pair``; a
pair that raises gets ``-inf`` and sinks to the bottom of the list.
"""

from __future__ import annotations

import json
import logging
import math
import subprocess
from dataclasses import dataclass
from typing import Sequence

from .analysis import tokenize
from .index import ScoredDoc
from .trec import Run, RunEntry

logger = logging.getLogger(__name__)

MAX_CANDIDATES = 1000


class RerankError(RuntimeError):
    pass


@dataclass(frozen=True)
class Candidate:
    docno: str
    first_stage_score: float
    text: str


@dataclass(frozen=True)
class RerankInput:
    query_text: str
    candidates: tuple[Candidate, ...]
    qid: str = "q"

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if len(self.candidates) > MAX_CANDIDATES:
            raise ValueError(f"at most {MAX_CANDIDATES} candidates, got {len(self.candidates)}")


def overlap_score(query_text: str, passage_text: str) -> float:
    """Fraction of distinct query stems that occur in the passage."""
    q = set(tokenize(query_text))
    if not q:
        raise ValueError(f"query {query_text!r} has no indexable terms")
    return len(q & set(tokenize(passage_text))) / len(q)


class Reranker:
    def score_pair(self, query: str, candidate: Candidate) -> float:
        raise NotImplementedError

    def score_batch(self, qid: str, query: str, candidates: Sequence[Candidate]) -> list[float]:
        scores = []
        for c in candidates:
            try:
                scores.append(float(self.score_pair(query, c)))
            except Exception as exc:  # one bad pair must not sink the whole query
                logger.warning("reranker failed on %s/%s: %s", qid, c.docno, exc)
                scores.append(-math.inf)
        return scores


class IdentityReranker(Reranker):
    def score_pair(self, query, candidate):
        return candidate.first_stage_score


class OverlapReranker(Reranker):
    """Deterministic lexical stand-in for a neural cross-encoder."""

    def score_pair(self, query, candidate):
        return overlap_score(query, candidate.text)


class SubprocessReranker(Reranker):
    """Delegate scoring to an external program over JSON lines.

    One ``{"qid", "docno", "query", "text", "first_stage_score"}`` object per
    candidate is written to the program's stdin; it must print one
    ``{"qid", "docno", "score"}`` object per candidate on stdout.
    """

    def __init__(self, command: Sequence[str], timeout: float | None = None):
        self.command = list(command)
        self.timeout = timeout

    def score_batch(self, qid, query, candidates):
        payload = "".join(
            json.dumps({"qid": qid, "docno": c.docno, "query": query, "text": c.text,
                        "first_stage_score": c.first_stage_score}, ensure_ascii=False) + "\n"
            for c in candidates)
        try:
            proc = subprocess.run(self.command, input=payload, capture_output=True, text=True,
                                  encoding="utf-8", timeout=self.timeout, check=False)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise RerankError(f"could not run reranker {self.command}: {exc}") from exc
        if proc.returncode != 0:
            raise RerankError(f"reranker exited with status {proc.returncode}: {proc.stderr.strip()[:200]}")
        scores: dict[str, float] = {}
        for lineno, line in enumerate(proc.stdout.splitlines(), 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if obj["qid"] != qid:
                    raise ValueError(f"unexpected qid {obj['qid']!r}")
                scores[str(obj["docno"])] = float(obj["score"])
            except (ValueError, KeyError, TypeError) as exc:
                raise RerankError(f"malformed reranker output line {lineno}: {line[:200]!r} ({exc})") from exc
        missing = [c.docno for c in candidates if c.docno not in scores]
        if missing:
            raise RerankError(f"reranker returned no score for query {qid}: {', '.join(missing)}")
        return [scores[c.docno] for c in candidates]


def rerank(inp: RerankInput, reranker: Reranker) -> list[ScoredDoc]:
    """Reorder candidates by reranker score.

    Ties fall back to the first-stage rank, then to the docno.
    """
    if not inp.candidates:
        raise ValueError("nothing to rerank")
    scores = reranker.score_batch(inp.qid, inp.query_text, inp.candidates)
    if len(scores) != len(inp.candidates):
        raise RerankError("reranker returned the wrong number of scores")
    order = sorted(range(len(inp.candidates)),
                   key=lambda i: (-scores[i], i, inp.candidates[i].docno))
    return [ScoredDoc(inp.candidates[i].docno, scores[i], rank)
            for rank, i in enumerate(order, 1)]


def rerank_run(run: Run, queries: dict[str, str], passages: dict[str, str], reranker: Reranker,
               depth: int = MAX_CANDIDATES, tag: str | None = None) -> Run:
    """Rerank the top ``depth`` rows of every query in ``run``."""
    out: dict[str, list[RunEntry]] = {}
    for qid, rows in run.entries.items():
        if not rows:
            out[qid] = []
            continue
        if qid not in queries:
            raise RerankError(f"no query text for {qid}")
        try:
            cands = [Candidate(r.docno, r.score, passages[r.docno]) for r in rows[:depth]]
        except KeyError as exc:
            raise RerankError(f"passage {exc.args[0]} not in collection") from exc
        ranked = rerank(RerankInput(queries[qid], cands, qid), reranker)
        out[qid] = [RunEntry(d.docno, d.rank, d.score) for d in ranked]
    return Run(out, tag or f"{run.tag}-rerank")
