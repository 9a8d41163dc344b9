"""Evaluation metrics: errors, retrieval, cross-comparison, and paired tests.

All functions are pure over immutable inputs. Correlations return None when
either side has zero variance (rendered "-" in reports). The paired t-test
computes two-sided p-values through a regularized incomplete beta evaluated
by continued fraction, so values as small as 1e-26 are represented exactly
rather than flushed to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .actions import ACTION_COUNT, ACTION_INDEX, ACTIONS, DOMINANT_13
from .errors import StructuralError, ValidationError
from .frames import CoefficientFrame

__all__ = [
    "as_matrix",
    "per_sample_mse",
    "mse",
    "r_precision",
    "r_precision_batched",
    "mmd",
    "pearson",
    "spearman",
    "cross_comparison",
    "CrossComparisonReport",
    "CoefficientComparison",
    "paired_ttest",
    "TTestResult",
    "error_summary",
    "ErrorSummary",
    "per_coefficient_report",
    "CoefficientRow",
    "student_t_two_sided_p",
]


def as_matrix(frames, *, width: int | None = ACTION_COUNT) -> np.ndarray:
    """Coerce frames / vectors / arrays into an (n, k) float64 matrix."""
    if isinstance(frames, np.ndarray):
        arr = frames.astype(np.float64, copy=False)
    else:
        rows = [
            f.values if isinstance(f, CoefficientFrame) else np.asarray(f, dtype=np.float64)
            for f in frames
        ]
        arr = np.asarray(rows, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise StructuralError(f"expected a 2-d array, got shape {arr.shape}")
    if width is not None and arr.shape[1] != width:
        raise StructuralError(f"expected {width} columns, got {arr.shape[1]}")
    return arr


def _aligned(pred, gt, *, width: int | None = ACTION_COUNT) -> tuple[np.ndarray, np.ndarray]:
    p = as_matrix(pred, width=width)
    g = as_matrix(gt, width=width)
    if p.shape != g.shape:
        raise StructuralError(f"pred {p.shape} and gt {g.shape} are misaligned")
    if p.shape[0] == 0:
        raise ValidationError("empty input")
    return p, g


def per_sample_mse(pred, gt) -> np.ndarray:
    """Mean squared error per sample, averaged over the 61 coefficients."""
    p, g = _aligned(pred, gt)
    return np.mean((p - g) ** 2, axis=1)


def mse(pred, gt) -> float:
    """Dataset MSE: mean over samples of the per-sample coefficient MSE."""
    return float(np.mean(per_sample_mse(pred, gt)))


def r_precision(sim, k: int) -> float:
    """Fraction of rows whose diagonal entry ranks in the top-k of its row.

    Ranking is by descending similarity with ties broken by column index.
    """
    S = np.asarray(sim, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise StructuralError(f"similarity matrix must be square, got {S.shape}")
    if not np.all(np.isfinite(S)):
        raise ValidationError("similarity matrix contains non-finite entries")
    n = S.shape[0]
    if not (1 <= k < n):
        raise ValidationError(f"k must satisfy 1 <= k < {n}, got {k}")
    hits = 0
    for i in range(n):
        row = S[i]
        d = row[i]
        rank = 1 + int(np.sum(row > d)) + int(np.sum(row[:i] == d))
        if rank <= k:
            hits += 1
    return hits / n


def r_precision_batched(
    img_embs,
    mot_embs,
    ks: Sequence[int] = (1, 2, 3),
    batch_size: int = 32,
    seed: int = 0,
) -> dict[int, float]:
    """Dataset-level R-Precision: seeded shuffle, fixed batches, tail dropped.

    When fewer rows than ``batch_size`` exist, a single batch of all rows is
    used so small runs still produce a number.
    """
    img = as_matrix(img_embs, width=None)
    mot = as_matrix(mot_embs, width=None)
    if img.shape != mot.shape:
        raise StructuralError("embedding sets are misaligned")
    n = img.shape[0]
    if n < 2:
        raise ValidationError("need at least two pairs")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    size = min(batch_size, n)
    batches = [order[i : i + size] for i in range(0, n - size + 1, size)]
    totals = {k: 0.0 for k in ks}
    for idx in batches:
        sim = img[idx] @ mot[idx].T
        for k in ks:
            totals[k] += r_precision(sim, k)
    return {k: totals[k] / len(batches) for k in ks}


def mmd(img_embs, mot_embs) -> float:
    """Mean Euclidean distance between matched embedding rows."""
    img = as_matrix(img_embs, width=None)
    mot = as_matrix(mot_embs, width=None)
    if img.shape != mot.shape:
        raise StructuralError("embedding sets are misaligned")
    if img.shape[0] == 0:
        raise ValidationError("empty input")
    return float(np.mean(np.linalg.norm(img - mot, axis=1)))


def pearson(x, y) -> float | None:
    """Product-moment correlation; None when either side has zero variance."""
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise StructuralError("inputs must be 1-d and equal length")
    if xa.size < 2:
        raise ValidationError("need at least two observations")
    xc = xa - xa.mean()
    yc = ya - ya.mean()
    sxx = float(np.dot(xc, xc))
    syy = float(np.dot(yc, yc))
    if sxx == 0.0 or syy == 0.0:
        return None
    r = float(np.dot(xc, yc)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def _rank_average(values: np.ndarray) -> np.ndarray:
    """Ranks starting at 1; ties receive the mean of their positions."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float | None:
    """Rank correlation: Pearson on average-ranked data."""
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise StructuralError("inputs must be 1-d and equal length")
    if xa.size < 2:
        raise ValidationError("need at least two observations")
    return pearson(_rank_average(xa), _rank_average(ya))


@dataclass(frozen=True)
class CoefficientComparison:
    pearson: float | None
    spearman: float | None
    accuracy: float
    msd: float
    deviation: float


@dataclass(frozen=True)
class CrossComparisonReport:
    per_coefficient: dict[str, CoefficientComparison]
    pearson: float | None
    spearman: float | None
    accuracy: float
    msd: float
    deviation: float
    subset: tuple[str, ...]
    threshold: float


def cross_comparison(
    pred,
    gt,
    subset: Sequence[str] = DOMINANT_13,
    threshold: float = 0.1,
) -> CrossComparisonReport:
    """Per-coefficient correlations plus thresholded agreement on a subset.

    Accuracy counts (sample, coefficient) cells where prediction and ground
    truth fall on the same side of the threshold; MSD and Deviation are the
    squared and absolute errors restricted to the subset. Aggregate
    correlations average only coefficients where they are defined.
    """
    p, g = _aligned(pred, gt)
    for name in subset:
        if name not in ACTION_INDEX:
            raise ValidationError(f"unknown action name in subset: {name}")
    idx = [ACTION_INDEX[name] for name in subset]
    per: dict[str, CoefficientComparison] = {}
    for name, j in zip(subset, idx):
        pj, gj = p[:, j], g[:, j]
        agree = (pj > threshold) == (gj > threshold)
        per[name] = CoefficientComparison(
            pearson=pearson(pj, gj) if p.shape[0] >= 2 else None,
            spearman=spearman(pj, gj) if p.shape[0] >= 2 else None,
            accuracy=float(np.mean(agree)),
            msd=float(np.mean((pj - gj) ** 2)),
            deviation=float(np.mean(np.abs(pj - gj))),
        )
    ps = p[:, idx]
    gs = g[:, idx]
    defined_p = [c.pearson for c in per.values() if c.pearson is not None]
    defined_s = [c.spearman for c in per.values() if c.spearman is not None]
    return CrossComparisonReport(
        per_coefficient=per,
        pearson=float(np.mean(defined_p)) if defined_p else None,
        spearman=float(np.mean(defined_s)) if defined_s else None,
        accuracy=float(np.mean((ps > threshold) == (gs > threshold))),
        msd=float(np.mean((ps - gs) ** 2)),
        deviation=float(np.mean(np.abs(ps - gs))),
        subset=tuple(subset),
        threshold=float(threshold),
    )


# --- Student-t machinery -------------------------------------------------------

_BETA_EPS = 1e-15
_BETA_MAX_ITER = 500


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_EPS:
            return h
    return h


def _betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
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


def student_t_two_sided_p(t: float, df: float) -> float:
    """Two-sided tail probability of Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValidationError("degrees of freedom must be positive")
    if math.isinf(t):
        return 0.0
    return _betainc(df / 2.0, 0.5, df / (df + t * t))


@dataclass(frozen=True)
class TTestResult:
    delta_mse: float
    t_statistic: float
    p_value: float
    n: int
    degenerate: bool = False


def paired_ttest(errors_a, errors_b) -> TTestResult:
    """Two-sided paired t-test on per-sample error lists (a minus b)."""
    a = np.asarray(errors_a, dtype=np.float64)
    b = np.asarray(errors_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise StructuralError("paired samples must be 1-d and equal length")
    n = a.size
    if n < 2:
        raise ValidationError("need at least two paired samples")
    d = a - b
    mean = float(np.mean(d))
    sd = float(np.std(d, ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(delta_mse=0.0, t_statistic=0.0, p_value=1.0, n=n)
        return TTestResult(
            delta_mse=mean,
            t_statistic=math.copysign(math.inf, mean),
            p_value=0.0,
            n=n,
            degenerate=True,
        )
    t = mean / (sd / math.sqrt(n))
    return TTestResult(
        delta_mse=mean,
        t_statistic=t,
        p_value=student_t_two_sided_p(t, n - 1),
        n=n,
    )


@dataclass(frozen=True)
class ErrorSummary:
    mean: float
    median: float
    std: float
    p90: float


def error_summary(per_sample: Sequence[float]) -> ErrorSummary:
    """Mean / median / sample std / 90th percentile of per-sample errors.

    The median is the midpoint of the two central order statistics for even
    n; P90 interpolates linearly between order statistics.
    """
    arr = np.asarray(per_sample, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError("per-sample errors must be a non-empty 1-d sequence")
    std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return ErrorSummary(
        mean=float(np.mean(arr)),
        median=float(np.median(arr)),
        std=std,
        p90=float(np.percentile(arr, 90)),
    )


@dataclass(frozen=True)
class CoefficientRow:
    name: str
    mse: float
    pearson: float | None
    spearman: float | None
    deviation: float


def per_coefficient_report(pred, gt) -> list[CoefficientRow]:
    """One row per coefficient sorted ascending by MSE, plus an Average row.

    Correlations undefined for constant coefficients stay None; the Average
    row averages each column over rows where it is defined.
    """
    p, g = _aligned(pred, gt)
    rows = []
    for name in ACTIONS:
        j = ACTION_INDEX[name]
        pj, gj = p[:, j], g[:, j]
        rows.append(
            CoefficientRow(
                name=name,
                mse=float(np.mean((pj - gj) ** 2)),
                pearson=pearson(pj, gj) if p.shape[0] >= 2 else None,
                spearman=spearman(pj, gj) if p.shape[0] >= 2 else None,
                deviation=float(np.mean(np.abs(pj - gj))),
            )
        )
    rows.sort(key=lambda r: r.mse)
    defined_p = [r.pearson for r in rows if r.pearson is not None]
    defined_s = [r.spearman for r in rows if r.spearman is not None]
    rows.append(
        CoefficientRow(
            name="Average",
            mse=float(np.mean([r.mse for r in rows])),
            pearson=float(np.mean(defined_p)) if defined_p else None,
            spearman=float(np.mean(defined_s)) if defined_s else None,
            deviation=float(np.mean([r.deviation for r in rows])),
        )
    )
    return rows
