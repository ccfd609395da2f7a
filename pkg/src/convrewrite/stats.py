"""Paired two-sided t-tests with Bonferroni correction between two systems."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from .metrics import MetricReport
from .validation import check_probability

_MAX_ITER = 10_000
_EPS = 1e-16
_TINY = 1e-300


class ConvergenceError(ArithmeticError):
    pass


def _beta_cf(x: float, a: float, b: float) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ConvergenceError(f"incomplete beta did not converge for x={x}, a={a}, b={b}")


def incomplete_beta(x: float, a: float, b: float) -> float:
    """Regularised incomplete beta function I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    # the fraction converges fast only below the mean; use symmetry above it
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(x, a, b) / a
    return 1.0 - front * _beta_cf(1.0 - x, b, a) / b


def t_sf_two_sided(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    return incomplete_beta(df / (df + t * t), df / 2.0, 0.5)


@dataclass(frozen=True)
class PairedSample:
    labels: tuple[str, ...]
    a: tuple[float, ...]
    b: tuple[float, ...]

    def __post_init__(self):
        for name in ("labels", "a", "b"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not len(self.a) == len(self.b) == len(self.labels):
            raise ValueError("paired sample vectors differ in length")
        if len(self.a) < 2:
            raise ValueError("a paired t-test needs at least two pairs")


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: int
    p: float
    degenerate: bool = False


def paired_t(sample: PairedSample) -> TTestResult:
    d = [x - y for x, y in zip(sample.a, sample.b)]
    n = len(d)
    mean = math.fsum(d) / n
    var = math.fsum((x - mean) ** 2 for x in d) / (n - 1)
    sd = math.sqrt(var)
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, n - 1, 1.0)
        return TTestResult(math.copysign(math.inf, mean), n - 1, 0.0, degenerate=True)
    t = mean * math.sqrt(n) / sd
    p = min(1.0, max(0.0, t_sf_two_sided(t, n - 1)))
    return TTestResult(t, n - 1, p)


def bonferroni_decide(p_values: Sequence[float], alpha: float = 0.05, m: int | None = None) -> list[bool]:
    """Whether each p-value clears the corrected level ``alpha / m``."""
    if not p_values:
        raise ValueError("no p-values given")
    m = len(p_values) if m is None else m
    if m < len(p_values):
        raise ValueError(f"comparison count m={m} is smaller than the number of p-values")
    check_probability(alpha, "alpha")
    threshold = alpha / m
    return [p < threshold for p in p_values]


SIG_GAIN, SIG_LOSS, NOT_SIG = "sig_gain", "sig_loss", "not_sig"
MARKERS = {SIG_GAIN: "▲", SIG_LOSS: "▼", NOT_SIG: ""}


@dataclass
class MetricComparison:
    metric: str
    mean_a: float
    mean_b: float
    relative_gain: float | None
    t_stat: float
    df: int
    p_value: float
    corrected_alpha: float
    decision: str
    degenerate: bool = False


@dataclass
class SignificanceReport:
    system_a: str
    system_b: str
    alpha: float
    m: int
    topic_count: int
    comparisons: list[MetricComparison] = field(default_factory=list)

    def __getitem__(self, metric: str) -> MetricComparison:
        for c in self.comparisons:
            if c.metric == metric:
                return c
        raise KeyError(metric)

    def to_json_obj(self) -> dict:
        return {"system_a": self.system_a, "system_b": self.system_b, "alpha": self.alpha,
                "m": self.m, "topic_count": self.topic_count,
                "comparisons": [_json_safe(asdict(c)) for c in self.comparisons]}

    def save_json(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json_obj(), indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")

    def to_text(self) -> str:
        lines = [f"# {self.system_a} vs {self.system_b}: two-sided paired t-test, "
                 f"alpha = {self.alpha}, m = {self.m}, corrected alpha = {self.alpha / self.m:.6g}, "
                 f"topics = {self.topic_count}",
                 f"{'metric':<10} {'A':>8} {'B':>8} {'gain%':>8} {'t':>8} {'p':>10}  sig"]
        for c in self.comparisons:
            gain = f"{100 * c.relative_gain:+8.1f}" if c.relative_gain is not None else f"{'n/a':>8}"
            lines.append(f"{c.metric:<10} {c.mean_a:8.4f} {c.mean_b:8.4f} {gain} "
                         f"{c.t_stat:8.3f} {c.p_value:10.4g}  {MARKERS[c.decision]}".rstrip())
        return "\n".join(lines) + "\n"


def _json_safe(obj: dict) -> dict:
    out = {}
    for k, v in obj.items():
        if isinstance(v, float) and math.isinf(v):
            v = "inf" if v > 0 else "-inf"
        out[k] = v
    return out


def relative_gain(mean_a: float, mean_b: float) -> float | None:
    if mean_b == 0:
        return None
    return (mean_a - mean_b) / mean_b


def compare_systems(report_a: MetricReport, report_b: MetricReport, alpha: float = 0.05,
                    m: int = 1, metrics: Sequence[str] | None = None) -> SignificanceReport:
    """Paired t-test per metric over the per-topic values of two reports."""
    check_probability(alpha, "alpha")
    if m < 1:
        raise ValueError("m must be >= 1")
    metrics = list(metrics or [x for x in report_a.metrics if x in report_b.metrics])
    topics_a, topics_b = set(report_a.per_topic), set(report_b.per_topic)
    if topics_a != topics_b:
        diff = sorted(topics_a ^ topics_b)
        raise ValueError(f"reports cover different topics; symmetric difference: {diff}")
    threshold = alpha / m
    report = SignificanceReport(report_a.run_tag, report_b.run_tag, alpha, m, len(topics_a))
    for metric in metrics:
        va, vb = report_a.vector(metric), report_b.vector(metric)
        if set(va) != set(vb):
            raise ValueError(f"{metric}: topic sets differ: {sorted(set(va) ^ set(vb))}")
        labels = sorted(va)
        a = [va[q] for q in labels]
        b = [vb[q] for q in labels]
        res = paired_t(PairedSample(labels, a, b))
        mean_a, mean_b = math.fsum(a) / len(a), math.fsum(b) / len(b)
        if res.p < threshold:
            decision = SIG_GAIN if res.t > 0 else SIG_LOSS
        else:
            decision = NOT_SIG
        report.comparisons.append(MetricComparison(
            metric, mean_a, mean_b, relative_gain(mean_a, mean_b), res.t, res.df, res.p,
            threshold, decision, res.degenerate))
    return report
