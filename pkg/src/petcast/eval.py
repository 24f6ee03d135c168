"""Regression metrics, binned F-scores, Kruskal-Wallis tests, and the
latent-vs-hand-feature dependency regression.

Metrics operate in log space by default (the space the models are trained
in); a raw-space toggle exists on the report builder for sensitivity checks.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import OrdinalScheme, ordinal_level
from .errors import ValidationError
from .special import chi2_sf, f_sf  # noqa: F401  (re-exported as part of this module's surface)

logger = logging.getLogger(__name__)

STAR_LEVELS = ((0.001, "***"), (0.01, "**"), (0.05, "*"))


def significance_stars(p: float) -> str:
    for cutoff, stars in STAR_LEVELS:
        if p < cutoff:
            return stars
    return ""


@dataclass
class EvalReport:
    """Metric bundle for one model on one split."""

    mae: float
    mape: float
    per_bin_f: list[float] = field(default_factory=list)
    macro_f: float = 0.0
    bin_edges: list[float] = field(default_factory=list)
    mape_excluded: int = 0

    def __post_init__(self):
        if self.mae < 0 or self.mape < 0:
            raise ValidationError("mae/mape must be non-negative")

    def flat(self, prefix: str = "") -> dict[str, float]:
        out = {prefix + "mae": self.mae, prefix + "mape": self.mape}
        if self.per_bin_f:
            out[prefix + "macro_f"] = self.macro_f
            for i, f in enumerate(self.per_bin_f):
                out[f"{prefix}f_bin{i}"] = f
        if self.mape_excluded:
            out[prefix + "mape_excluded"] = float(self.mape_excluded)
        return out


@dataclass
class KwResult:
    """Kruskal-Wallis outcome: statistic H, degrees of freedom, p-value."""

    h: float
    df: int
    p: float
    tie_corrected: bool = False


@dataclass
class DependencyResult:
    """How well one hand feature is linearly explained by the hidden units."""

    feature: str
    r2: float
    f_stat: float
    p_hidden: float
    ridge_fallback: bool = False


def mae(pred: Sequence[float], truth: Sequence[float]) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.size == 0:
        raise ValidationError(
            f"pred/truth must be equal non-empty lengths: {pred.shape} vs {truth.shape}"
        )
    return float(np.mean(np.abs(pred - truth)))


def mape(pred: Sequence[float], truth: Sequence[float]) -> float:
    """Mean absolute percentage error; zero-truth entries are skipped.

    The number of skipped entries is logged; report builders record it via
    mape_exclusions().
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.size == 0:
        raise ValidationError(
            f"pred/truth must be equal non-empty lengths: {pred.shape} vs {truth.shape}"
        )
    keep = truth != 0.0
    dropped = int(np.sum(~keep))
    if dropped:
        logger.warning("mape: excluded %d zero-target examples", dropped)
    if not np.any(keep):
        raise ValidationError("mape: every target is zero")
    return float(
        100.0 * np.mean(np.abs(pred[keep] - truth[keep]) / np.abs(truth[keep]))
    )


def mape_exclusions(truth: Sequence[float]) -> int:
    return int(np.sum(np.asarray(truth, dtype=np.float64) == 0.0))


def bin_counts(counts: Sequence[float], edges: Sequence[float]) -> np.ndarray:
    """Class per count: the number of edges at or below it."""
    edges = np.asarray(edges, dtype=np.float64)
    if edges.size and np.any(np.diff(edges) <= 0):
        raise ValidationError("bin edges must be strictly increasing")
    return np.searchsorted(edges, np.asarray(counts, dtype=np.float64), side="right")


def bin_fscore(
    pred_counts: Sequence[float],
    true_counts: Sequence[float],
    edges: Sequence[float],
) -> tuple[list[float], float]:
    """Per-class F1 over count bins plus the unweighted macro average.

    Every class defined by the edges contributes to the macro mean; a class
    with no predictions and no truth counts as F1 = 0.
    """
    pred_bin = bin_counts(pred_counts, edges)
    true_bin = bin_counts(true_counts, edges)
    if pred_bin.shape != true_bin.shape:
        raise ValidationError("pred/true length mismatch")
    n_classes = len(edges) + 1
    per_class = []
    for cls in range(n_classes):
        tp = int(np.sum((pred_bin == cls) & (true_bin == cls)))
        fp = int(np.sum((pred_bin == cls) & (true_bin != cls)))
        fn = int(np.sum((pred_bin != cls) & (true_bin == cls)))
        denom = 2 * tp + fp + fn
        per_class.append(2.0 * tp / denom if denom else 0.0)
    return per_class, float(np.mean(per_class))


def _midranks(values: np.ndarray) -> np.ndarray:
    """1-based midranks of the pooled sample (ties share their mean rank)."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def kruskal_wallis(groups: Sequence[Sequence[float]]) -> KwResult:
    """Rank test for whether the groups share one distribution.

    Uses pooled midranks and the standard tie correction; the p-value is the
    chi-square tail at k - 1 degrees of freedom.  If every pooled value is
    identical the statistic is 0 and p is 1.
    """
    if len(groups) < 2:
        raise ValidationError("kruskal_wallis needs at least two groups")
    arrays = [np.asarray(g, dtype=np.float64) for g in groups]
    if any(a.size == 0 for a in arrays):
        raise ValidationError("kruskal_wallis groups must be non-empty")
    pooled = np.concatenate(arrays)
    n = pooled.size
    if n < 3:
        raise ValidationError("kruskal_wallis needs at least three observations")
    ranks = _midranks(pooled)
    h = 0.0
    offset = 0
    for a in arrays:
        r_mean = float(np.mean(ranks[offset : offset + a.size]))
        h += a.size * r_mean * r_mean
        offset += a.size
    h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0)
    # tie correction over pooled tie-group sizes
    _, tie_sizes = np.unique(pooled, return_counts=True)
    tie_sizes = tie_sizes.astype(np.float64)
    correction = 1.0 - float(np.sum(tie_sizes**3 - tie_sizes)) / (float(n) ** 3 - n)
    tie_corrected = bool(np.any(tie_sizes > 1))
    if correction <= 0.0:
        # every pooled value identical: no evidence of separation
        return KwResult(h=0.0, df=len(arrays) - 1, p=1.0, tie_corrected=True)
    h = max(h / correction, 0.0)
    df = len(arrays) - 1
    return KwResult(h=h, df=df, p=chi2_sf(h, df), tie_corrected=tie_corrected)


def dependency_analysis(
    hidden: np.ndarray,
    hand_features: np.ndarray,
    feature_names: Sequence[str] | None = None,
) -> list[DependencyResult]:
    """Regress each hand feature on [1, hidden] and F-test the overall fit.

    hidden is n x d (one row per example); hand_features is n x m.  A rank
    deficient design falls back to a tiny ridge solve and flags the result.
    """
    hidden = np.asarray(hidden, dtype=np.float64)
    hand = np.asarray(hand_features, dtype=np.float64)
    if hidden.ndim != 2 or hand.ndim != 2 or hidden.shape[0] != hand.shape[0]:
        raise ValidationError("hidden and hand_features must align on rows")
    n, d = hidden.shape
    if n <= d + 1:
        raise ValidationError(f"need n > d + 1 rows, got n={n}, d={d}")
    if feature_names is None:
        feature_names = [f"feature_{j}" for j in range(hand.shape[1])]
    design = np.hstack([np.ones((n, 1)), hidden])
    results = []
    for j, name in enumerate(feature_names):
        y = hand[:, j]
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        if ss_tot <= 1e-300:
            results.append(DependencyResult(name, 0.0, 0.0, 1.0))
            continue
        beta, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
        fallback = bool(rank < design.shape[1])
        if fallback:
            gram = design.T @ design + 1e-6 * np.eye(design.shape[1])
            beta = np.linalg.solve(gram, design.T @ y)
        resid = y - design @ beta
        ss_res = float(np.dot(resid, resid))
        r2 = min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
        if 1.0 - r2 <= 1e-15:
            results.append(DependencyResult(name, 1.0, math.inf, 0.0, fallback))
            continue
        f_stat = (r2 / d) / ((1.0 - r2) / (n - d - 1))
        results.append(
            DependencyResult(
                name, float(r2), float(f_stat), float(f_sf(f_stat, d, n - d - 1)), fallback
            )
        )
    return results


def feature_significance_table(
    feature_matrix: np.ndarray,
    feature_names: Sequence[str],
    counts: Sequence[int],
    scheme: OrdinalScheme,
) -> list[tuple[str, KwResult]]:
    """One Kruskal-Wallis test per feature across ordinal count groups.

    Examples are grouped by the highest threshold they reached (plus a
    below-all group); empty groups are dropped with a warning.
    """
    feature_matrix = np.asarray(feature_matrix, dtype=np.float64)
    if feature_matrix.shape[0] != len(counts):
        raise ValidationError("feature rows must align with counts")
    levels = np.array([ordinal_level(scheme, c) for c in counts])
    group_rows = []
    for level in range(len(scheme) + 1):
        rows = np.nonzero(levels == level)[0]
        if rows.size == 0:
            logger.warning("significance table: ordinal group %d is empty", level)
            continue
        group_rows.append(rows)
    if len(group_rows) < 2:
        raise ValidationError("need at least two non-empty ordinal groups")
    out = []
    for j, name in enumerate(feature_names):
        col = feature_matrix[:, j]
        out.append((name, kruskal_wallis([col[rows] for rows in group_rows])))
    return out


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------


def write_metrics(path, values: dict[str, float]) -> None:
    """Flat key/value metrics file, one "key=value" per line, sorted keys."""
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(values):
            fh.write(f"{key}={values[key]!r}\n")


def format_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    """Plain-text table with aligned columns."""
    table = [list(header)] + [[str(c) for c in row] for row in rows]
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]
    lines = []
    for k, row in enumerate(table):
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
