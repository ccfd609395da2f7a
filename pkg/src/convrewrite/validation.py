"""Input validation helpers shared by the estimators and the CLI."""

from __future__ import annotations

import math
import numbers

from .conversation import Conversation

RANKING_MODELS = ("dph", "bm25")


def check_positive_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_probability(value, name: str, *, open_interval: bool = True) -> float:
    value = float(value)
    ok = 0.0 < value < 1.0 if open_interval else 0.0 <= value <= 1.0
    if not ok:
        raise ValueError(f"{name} must lie in {'(0, 1)' if open_interval else '[0, 1]'}, got {value}")
    return value


def check_finite(value, name: str) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")
    return value


def check_ranking_model(model: str) -> str:
    if model not in RANKING_MODELS:
        raise ValueError(f"unknown ranking model {model!r}; choose from {', '.join(RANKING_MODELS)}")
    return model


def check_conversations(X) -> list[Conversation]:
    if isinstance(X, Conversation):
        X = [X]
    X = list(X)
    for conv in X:
        if not isinstance(conv, Conversation):
            raise TypeError(f"expected Conversation objects, got {type(conv).__name__}")
    return X


def check_queries(X) -> dict[str, str]:
    """Normalise queries to an ordered ``{qid: text}`` mapping.

    Accepts a mapping or an iterable of ``(qid, text)`` pairs.
    """
    items = X.items() if hasattr(X, "items") else X
    out: dict[str, str] = {}
    for qid, text in items:
        qid = str(qid)
        if qid in out:
            raise ValueError(f"duplicate query id {qid!r}")
        if not isinstance(text, str):
            raise TypeError(f"query {qid!r}: text must be str")
        out[qid] = text
    return out
