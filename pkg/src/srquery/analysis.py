"""Significance testing, multi-run variability, and query failure analysis.

The paired t-test computes its two-tailed p-value from the t distribution
via the regularized incomplete beta function, evaluated with a modified
Lentz continued fraction to an absolute tolerance of 1e-10.  The test suite
checks it against an independent reference implementation.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .collections import MeshVocab, Qrels
from .metrics import Metrics
from .query_ast import Query, extract_mesh_terms

__all__ = [
    "RunResult",
    "RunSeries",
    "TopicClass",
    "TTestResult",
    "MeshValidity",
    "VariabilitySummary",
    "LengthMismatchError",
    "DegenerateVarianceError",
    "ZeroOriginalCountError",
    "EmptyRetrievalError",
    "TooFewRunsError",
    "paired_t_test",
    "bonferroni",
    "oracle_select",
    "classify_topic",
    "retrieved_ratio_stats",
    "mesh_validity_ratio",
    "unjudged_fraction",
    "variability_summary",
    "significance_matrix",
]


class LengthMismatchError(ValueError):
    pass


class DegenerateVarianceError(ValueError):
    pass


class ZeroOriginalCountError(ValueError):
    pass


class EmptyRetrievalError(ValueError):
    pass


class TooFewRunsError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Student's t, two-tailed, paired
# ---------------------------------------------------------------------------

_BETACF_TOL = 1e-10
_BETACF_TINY = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    # Modified Lentz evaluation of the continued fraction for I_x(a, b).
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETACF_TINY:
        d = _BETACF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, 500):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_TINY:
            d = _BETACF_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETACF_TINY:
            c = _BETACF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_TINY:
            d = _BETACF_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETACF_TINY:
            c = _BETACF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_TOL:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def _reg_inc_beta(a: float, b: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def _t_two_tailed_p(t: float, df: float) -> float:
    return _reg_inc_beta(df / 2.0, 0.5, df / (df + t * t))


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Student's two-tailed paired t-test on per-topic score vectors."""
    if len(a) != len(b):
        raise LengthMismatchError(f"paired vectors differ in length: {len(a)} vs {len(b)}")
    n = len(a)
    if n < 2:
        raise LengthMismatchError("paired t-test needs at least two pairs")
    diffs = [x - y for x, y in zip(a, b)]
    mean = sum(diffs) / n
    ss = sum((d - mean) ** 2 for d in diffs)
    if ss == 0.0:
        raise DegenerateVarianceError("all paired differences are equal")
    sd = math.sqrt(ss / (n - 1))
    t = mean / (sd / math.sqrt(n))
    return TTestResult(t=t, p=_t_two_tailed_p(t, n - 1))


def bonferroni(p: float, m: int) -> float:
    """min(1, m * p) for m comparisons."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if m < 1:
        raise ValueError("m must be >= 1")
    return min(1.0, m * p)


def significance_matrix(
    per_method_scores: dict[str, Sequence[float]],
) -> tuple[list[str], dict[tuple[str, str], Optional[float]], int]:
    """Pairwise Bonferroni-adjusted p-values across methods.

    m is the number of method pairs tested.  Degenerate pairs (all paired
    differences equal) get None so the report shows them explicitly instead
    of a silent NaN.
    """
    methods = sorted(per_method_scores)
    pairs = [(x, y) for i, x in enumerate(methods) for y in methods[i + 1 :]]
    m = len(pairs)
    cells: dict[tuple[str, str], Optional[float]] = {}
    for x, y in pairs:
        try:
            raw = paired_t_test(per_method_scores[x], per_method_scores[y]).p
            adjusted: Optional[float] = bonferroni(raw, m)
        except DegenerateVarianceError:
            adjusted = None
        cells[(x, y)] = adjusted
        cells[(y, x)] = adjusted
    return methods, cells, m


# ---------------------------------------------------------------------------
# Oracle selection and topic classification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunResult:
    run_index: int
    metrics: Metrics

    @property
    def retrieved_count(self) -> int:
        return self.metrics.retrieved_count


@dataclass(frozen=True)
class RunSeries:
    topic_id: str
    runs: tuple[RunResult, ...]

    def __post_init__(self) -> None:
        if not self.runs:
            raise ValueError(f"topic {self.topic_id}: a run series needs at least one run")
        indices = [r.run_index for r in self.runs]
        if len(set(indices)) != len(indices):
            raise ValueError(f"topic {self.topic_id}: duplicate run_index")


class TopicClass(Enum):
    SUCCESSFUL = "successful"
    FAILING = "failing"
    NEUTRAL = "neutral"


def oracle_select(series: RunSeries) -> RunResult:
    """The run with maximal recall; ties broken by precision, then by the
    lowest run index for determinism."""
    return min(
        series.runs,
        key=lambda r: (-r.metrics.recall, -r.metrics.precision, r.run_index),
    )


def classify_topic(oracle: Metrics, original: Metrics) -> TopicClass:
    """Successful iff the oracle beats the original on both precision and
    recall; failing iff it loses on both; everything else is neutral."""
    if oracle.precision > original.precision and oracle.recall > original.recall:
        return TopicClass.SUCCESSFUL
    if oracle.precision < original.precision and oracle.recall < original.recall:
        return TopicClass.FAILING
    return TopicClass.NEUTRAL


def retrieved_ratio_stats(
    pairs: Sequence[tuple[int, int]],
    class_labels: Sequence[TopicClass],
) -> dict[TopicClass, float]:
    """Median generated/original retrieved-count ratio per topic class.

    Medians use the mean-of-middle convention for even counts.
    """
    if len(pairs) != len(class_labels):
        raise LengthMismatchError("pairs and class_labels differ in length")
    grouped: dict[TopicClass, list[float]] = {}
    for (generated, original), label in zip(pairs, class_labels):
        if original <= 0:
            raise ZeroOriginalCountError("original retrieved count must be positive")
        grouped.setdefault(label, []).append(generated / original)
    return {label: statistics.median(ratios) for label, ratios in grouped.items()}


def mesh_validity_ratio(q: Query, vocab: MeshVocab) -> "MeshValidity":
    """Fraction of the query's MeSH terms that are absent from the
    vocabulary (case-insensitive); 0 when the query has none."""
    terms = extract_mesh_terms(q)
    if not terms:
        return MeshValidity(mesh_count=0, invalid_fraction=0.0)
    invalid = sum(1 for text, _ in terms if vocab.lookup(text) is None)
    return MeshValidity(mesh_count=len(terms), invalid_fraction=invalid / len(terms))


@dataclass(frozen=True)
class MeshValidity:
    mesh_count: int
    invalid_fraction: float


def unjudged_fraction(retrieved: set[str], qrels: Qrels, topic_id: str) -> float:
    """Share of retrieved documents with no judgment for the topic."""
    if not retrieved:
        raise EmptyRetrievalError("unjudged fraction is undefined for an empty retrieval")
    judged = qrels.judged_for(topic_id)
    return len(retrieved - judged) / len(retrieved)


# ---------------------------------------------------------------------------
# Multi-run variability
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VariabilitySummary:
    metric: str
    mean: float
    variance: float
    variance_to_mean_ratio: float
    per_topic_quartiles: dict[str, tuple[float, float, float, float, float]]


def variability_summary(series_list: Iterable[RunSeries], metric: str) -> VariabilitySummary:
    """Across-run mean and sample variance of the per-run macro-averaged
    score, plus per-topic five-number summaries for boxplots.

    Every topic must carry the same set of run indices so that runs can be
    macro-averaged across topics.
    """
    series_list = list(series_list)
    if not series_list:
        raise ValueError("no run series supplied")
    if metric not in ("precision", "recall", "f1", "f3"):
        raise ValueError(f"unknown metric {metric!r}")

    run_indices = sorted(r.run_index for r in series_list[0].runs)
    if len(run_indices) < 2:
        raise TooFewRunsError("variability needs at least two runs")
    per_topic: dict[str, dict[int, float]] = {}
    for series in series_list:
        values = {r.run_index: getattr(r.metrics, metric) for r in series.runs}
        if sorted(values) != run_indices:
            raise ValueError(
                f"topic {series.topic_id} has run indices {sorted(values)}, expected {run_indices}"
            )
        per_topic[series.topic_id] = values

    per_run_macro = [
        float(np.mean([per_topic[tid][idx] for tid in per_topic])) for idx in run_indices
    ]
    mean = float(np.mean(per_run_macro))
    variance = float(np.var(per_run_macro, ddof=1))
    ratio = variance / mean if mean != 0 else 0.0

    quartiles = {}
    for tid, values in per_topic.items():
        data = [values[idx] for idx in run_indices]
        lo, q1, med, q3, hi = np.percentile(data, [0, 25, 50, 75, 100])
        quartiles[tid] = (float(lo), float(q1), float(med), float(q3), float(hi))

    return VariabilitySummary(
        metric=metric,
        mean=mean,
        variance=variance,
        variance_to_mean_ratio=ratio,
        per_topic_quartiles=quartiles,
    )
