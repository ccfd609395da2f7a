"""Tokenisation: lowercase, split on non-alphanumerics, drop stopwords, stem."""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .porter import stem

_TOKEN_RE = re.compile(r"[^\W_]+")

STOPWORDS_RESOURCE = "stopwords-en-v1.txt"


def _parse_stopwords(text: str) -> frozenset:
    return frozenset(line.strip().lower() for line in text.splitlines()
                     if line.strip() and not line.startswith("#"))


@lru_cache(maxsize=None)
def default_stopwords() -> frozenset:
    return _parse_stopwords(
        resources.files("convrewrite.data").joinpath(STOPWORDS_RESOURCE).read_text(encoding="utf-8"))


def load_stopwords(path=None) -> frozenset:
    if path is None:
        return default_stopwords()
    return _parse_stopwords(Path(path).read_text(encoding="utf-8"))


class Analyzer:
    """Same pipeline for documents and queries."""

    def __init__(self, stopwords=None):
        self.stopwords = default_stopwords() if stopwords is None else frozenset(stopwords)

    def __call__(self, text: str) -> list[str]:
        stems = (stem(tok) for tok in _TOKEN_RE.findall(text.lower())
                 if tok not in self.stopwords)
        return [s for s in stems if s]


_default = None


def tokenize(text: str, stopwords=None) -> list[str]:
    global _default
    if stopwords is not None:
        return Analyzer(stopwords)(text)
    if _default is None:
        _default = Analyzer()
    return _default(text)
