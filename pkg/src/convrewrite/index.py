"""Inverted index, DPH/BM25 weighting and first-stage retrieval."""

from __future__ import annotations

import hashlib
import heapq
import logging
import math
import struct
import sys
from array import array
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .analysis import Analyzer, load_stopwords
from .conversation import DataError
from .trec import Run
from .validation import check_positive_int, check_queries, check_ranking_model

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Passage:
    docno: str
    text: str

    def __post_init__(self):
        if not self.docno or not self.docno.strip() or any(c.isspace() for c in self.docno):
            raise DataError(f"invalid docno {self.docno!r}")


@dataclass(frozen=True)
class ScoredDoc:
    docno: str
    score: float
    rank: int


def analyzer_id(stopwords) -> str:
    digest = hashlib.sha256("\n".join(sorted(stopwords)).encode("utf-8")).hexdigest()[:12]
    return f"porter1980+stop:{digest}"


@dataclass
class InvertedIndex:
    """Postings are ``term -> (doc ordinals, term frequencies)`` as uint32 arrays."""

    postings: dict[str, tuple[array, array]] = field(default_factory=dict)
    doc_lengths: array = field(default_factory=lambda: array("I"))
    docnos: list[str] = field(default_factory=list)
    collection_tf: dict[str, int] = field(default_factory=dict)
    analyzer: str = ""

    @property
    def num_docs(self) -> int:
        return len(self.docnos)

    @property
    def total_length(self) -> int:
        return sum(self.doc_lengths)

    @property
    def avgdl(self) -> float:
        return self.total_length / self.num_docs if self.num_docs else 0.0

    def df(self, term: str) -> int:
        entry = self.postings.get(term)
        return len(entry[0]) if entry else 0

    def check(self) -> None:
        """Assert the structural invariants; raises ``AssertionError``."""
        assert len(self.doc_lengths) == len(self.docnos)
        for term, (docs, tfs) in self.postings.items():
            assert len(docs) == len(tfs) and len(docs) > 0, term
            assert all(a < b for a, b in zip(docs, docs[1:])), term
            assert all(1 <= tf <= self.doc_lengths[d] for d, tf in zip(docs, tfs)), term
            assert self.collection_tf[term] == sum(tfs), term

    # -- persistence ----------------------------------------------------

    MAGIC = b"CVRIDX\x00\x00"
    VERSION = 1

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as fh:
            fh.write(self.to_bytes())

    def to_bytes(self) -> bytes:
        out = bytearray()
        analyzer = self.analyzer.encode("utf-8")
        out += self.MAGIC
        out += struct.pack("<IIIQI", self.VERSION, self.num_docs, len(self.postings),
                           self.total_length, len(analyzer))
        out += analyzer
        for docno, length in zip(self.docnos, self.doc_lengths):
            raw = docno.encode("utf-8")
            out += struct.pack("<I", len(raw)) + raw + struct.pack("<I", length)
        for term in sorted(self.postings, key=lambda t: t.encode("utf-8")):
            docs, tfs = self.postings[term]
            raw = term.encode("utf-8")
            out += struct.pack("<I", len(raw)) + raw
            out += struct.pack("<IQ", len(docs), self.collection_tf[term])
            out += _le_bytes(docs) + _le_bytes(tfs)
        return bytes(out)

    @classmethod
    def load(cls, path) -> "InvertedIndex":
        path = Path(path)
        if not path.is_file():
            raise DataError(f"index file not found: {path}")
        return cls.from_bytes(path.read_bytes(), str(path))

    @classmethod
    def from_bytes(cls, data: bytes, name: str = "<bytes>") -> "InvertedIndex":
        view = memoryview(data)
        if bytes(view[:8]) != cls.MAGIC:
            raise DataError(f"{name}: not an index file (bad magic)")
        version, n_docs, n_terms, _total, alen = struct.unpack_from("<IIIQI", view, 8)
        if version != cls.VERSION:
            raise DataError(f"{name}: unsupported index version {version}")
        pos = 8 + struct.calcsize("<IIIQI")
        analyzer = bytes(view[pos:pos + alen]).decode("utf-8")
        pos += alen
        index = cls(analyzer=analyzer)
        try:
            for _ in range(n_docs):
                (n,) = struct.unpack_from("<I", view, pos)
                pos += 4
                index.docnos.append(bytes(view[pos:pos + n]).decode("utf-8"))
                pos += n
                index.doc_lengths.append(struct.unpack_from("<I", view, pos)[0])
                pos += 4
            for _ in range(n_terms):
                (n,) = struct.unpack_from("<I", view, pos)
                pos += 4
                term = bytes(view[pos:pos + n]).decode("utf-8")
                pos += n
                df, cf = struct.unpack_from("<IQ", view, pos)
                pos += 12
                if pos + 8 * df > len(view):
                    raise struct.error("postings run past the end")
                docs = _from_le(view[pos:pos + 4 * df])
                pos += 4 * df
                tfs = _from_le(view[pos:pos + 4 * df])
                pos += 4 * df
                index.postings[term] = (docs, tfs)
                index.collection_tf[term] = cf
        except struct.error as exc:
            raise DataError(f"{name}: truncated index file") from exc
        if pos != len(view):
            raise DataError(f"{name}: trailing bytes after index data")
        return index

    def dump_text(self, fh) -> None:
        """Human-readable dump for debugging."""
        fh.write(f"# N={self.num_docs} avgdl={self.avgdl:.6f} terms={len(self.postings)} "
                 f"analyzer={self.analyzer}\n")
        for docno, length in zip(self.docnos, self.doc_lengths):
            fh.write(f"doc\t{docno}\t{length}\n")
        for term in sorted(self.postings):
            docs, tfs = self.postings[term]
            plist = " ".join(f"{d}:{tf}" for d, tf in zip(docs, tfs))
            fh.write(f"term\t{term}\t{self.collection_tf[term]}\t{plist}\n")


def _le_bytes(arr: array) -> bytes:
    if sys.byteorder == "little":
        return arr.tobytes()
    swapped = array(arr.typecode, arr)
    swapped.byteswap()
    return swapped.tobytes()


def _from_le(buf) -> array:
    arr = array("I")
    arr.frombytes(bytes(buf))
    if sys.byteorder != "little":
        arr.byteswap()
    return arr


def build_index(passages: Iterable, analyzer: Analyzer | None = None) -> InvertedIndex:
    """Index a stream of passages (``Passage`` or ``(docno, text)`` pairs)."""
    analyzer = analyzer or Analyzer()
    index = InvertedIndex(analyzer=analyzer_id(analyzer.stopwords))
    seen: set[str] = set()
    postings: dict[str, tuple[array, array]] = {}
    for item in passages:
        p = item if isinstance(item, Passage) else Passage(*item)
        if p.docno in seen:
            raise DataError(f"duplicate docno {p.docno}")
        seen.add(p.docno)
        ordinal = len(index.docnos)
        tokens = analyzer(p.text)
        index.docnos.append(p.docno)
        index.doc_lengths.append(len(tokens))
        for term, tf in Counter(tokens).items():
            entry = postings.get(term)
            if entry is None:
                entry = postings[term] = (array("I"), array("I"))
            entry[0].append(ordinal)
            entry[1].append(tf)
    index.postings = postings
    index.collection_tf = {t: sum(tfs) for t, (_, tfs) in postings.items()}
    return index


def read_collection(path) -> Iterator[Passage]:
    """Stream passages from a ``docno\\ttext`` TSV file or a directory of them."""
    path = Path(path)
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.is_file())
    elif path.is_file():
        files = [path]
    else:
        raise DataError(f"collection not found: {path}")
    for f in files:
        with f.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\r\n")
                if not line.strip():
                    continue
                docno, sep, text = line.partition("\t")
                if not sep:
                    raise DataError(f"{f}:{lineno}: expected 'docno\\ttext'")
                yield Passage(docno.strip(), text)


def score_dph(tf, doclen, coll_tf, N, avgdl, qtf=1.0) -> float:
    """DPH (hypergeometric DFR) weight of one query term in one document.

    When the document consists of the term alone (``tf == doclen``) the
    relative frequency is clamped to ``(doclen - 0.5) / doclen``.
    """
    if tf <= 0:
        return 0.0
    f = tf / doclen
    if f >= 1.0:
        f = (doclen - 0.5) / doclen
    norm = (1.0 - f) * (1.0 - f) / (tf + 1.0)
    return qtf * norm * (
        tf * math.log2((tf * avgdl / doclen) * (N / coll_tf))
        + 0.5 * math.log2(2.0 * math.pi * tf * (1.0 - f))
    )


def score_bm25(tf, doclen, df, N, avgdl, k1=1.2, b=0.75, qtf=1.0) -> float:
    if tf <= 0:
        return 0.0
    idf = math.log((N - df + 0.5) / (df + 0.5) + 1.0)
    return qtf * idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * doclen / avgdl))


def _rank(scores: dict[int, float], docnos: list[str], k: int) -> list[ScoredDoc]:
    key = lambda item: (-item[1], docnos[item[0]])  # noqa: E731
    if k < len(scores):
        top = heapq.nsmallest(k, scores.items(), key=key)
    else:
        top = sorted(scores.items(), key=key)
    return [ScoredDoc(docnos[d], s, r) for r, (d, s) in enumerate(top, 1)]


def search(index: InvertedIndex, query_text: str, k: int = 1000, model: str = "dph",
           analyzer: Analyzer | None = None, k1: float = 1.2, b: float = 0.75) -> list[ScoredDoc]:
    """Score every document sharing a term with the query and return the top ``k``."""
    check_positive_int(k, "k")
    check_ranking_model(model)
    analyzer = analyzer or Analyzer()
    qterms = Counter(analyzer(query_text))
    if not qterms:
        logger.warning("query %r has no indexable terms; returning no results", query_text)
        return []
    N, avgdl = index.num_docs, index.avgdl
    lengths = index.doc_lengths
    scores: dict[int, float] = {}
    for term in sorted(qterms):
        entry = index.postings.get(term)
        if entry is None:
            continue
        qtf = qterms[term]
        docs, tfs = entry
        if model == "dph":
            ctf = index.collection_tf[term]
            for d, tf in zip(docs, tfs):
                scores[d] = scores.get(d, 0.0) + score_dph(tf, lengths[d], ctf, N, avgdl, qtf)
        else:
            df = len(docs)
            for d, tf in zip(docs, tfs):
                scores[d] = scores.get(d, 0.0) + score_bm25(tf, lengths[d], df, N, avgdl, k1, b, qtf)
    return _rank(scores, index.docnos, k)


class LexicalRetriever(BaseEstimator):
    """First-stage retriever over an inverted index.

    ``fit`` indexes a passage collection; ``predict`` maps a batch of queries
    to a :class:`~convrewrite.trec.Run`.
    """

    def __init__(self, model="dph", k=1000, k1=1.2, b=0.75, stopwords_path=None, tag=None):
        self.model = model
        self.k = k
        self.k1 = k1
        self.b = b
        self.stopwords_path = stopwords_path
        self.tag = tag

    def _analyzer(self) -> Analyzer:
        return Analyzer(load_stopwords(self.stopwords_path))

    def fit(self, X, y=None):
        check_ranking_model(self.model)
        check_positive_int(self.k, "k")
        self.analyzer_ = self._analyzer()
        self.index_ = build_index(X, self.analyzer_)
        return self

    def set_index(self, index: InvertedIndex):
        """Use a prebuilt index instead of calling ``fit``."""
        check_ranking_model(self.model)
        check_positive_int(self.k, "k")
        self.analyzer_ = self._analyzer()
        if index.analyzer and index.analyzer != analyzer_id(self.analyzer_.stopwords):
            logger.warning("index was built with analyzer %s but queries use %s",
                           index.analyzer, analyzer_id(self.analyzer_.stopwords))
        self.index_ = index
        return self

    def search(self, query_text: str, k: int | None = None) -> list[ScoredDoc]:
        check_is_fitted(self, "index_")
        return search(self.index_, query_text, k or self.k, self.model, self.analyzer_,
                      self.k1, self.b)

    def predict(self, X) -> Run:
        queries = check_queries(X)
        return Run.from_scored({qid: self.search(text) for qid, text in queries.items()},
                               self.tag or self.model)
