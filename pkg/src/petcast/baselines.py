"""Classical reference predictors: train-mean, ridge regression on sparse
bag-of-words or dense feature inputs, RBF kernel ridge, and a per-threshold
logistic classifier over milestone labels.

The ridge solver runs conjugate gradients on the normal equations so the
same code path serves sparse and dense designs; the kernel solver factors
with Cholesky; the logistic fits take damped Newton steps with the same CG
core.  All regression targets are log counts.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import eval as ev
from .errors import NumericError, ValidationError
from .text import SparseVector

logger = logging.getLogger(__name__)

RIDGE_LAMBDA_GRID = (1e-3, 1e-2, 1e-1, 1.0, 10.0)
LOGISTIC_LAMBDA_GRID = (1e-2, 1e-1, 1.0)
SIGMA_MULTIPLIERS = (0.5, 1.0, 2.0)
KRR_MAX_TRAIN = 4000

SUITE_NAMES = (
    "Mean",
    "Linear_BoW",
    "Linear_GI",
    "KRR_BoW",
    "KRR_feat",
    "KRR_BoW+feat",
    "Logistic_ord",
)


def to_csr(vectors: Sequence[SparseVector]) -> sp.csr_matrix:
    """Stack sparse vectors into one CSR matrix."""
    if not vectors:
        raise ValidationError("need at least one vector")
    dim = vectors[0].dim
    if any(v.dim != dim for v in vectors):
        raise ValidationError("vectors disagree on dimensionality")
    indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
    for i, v in enumerate(vectors):
        indptr[i + 1] = indptr[i] + v.nnz
    indices = np.concatenate([v.indices for v in vectors]) if indptr[-1] else np.zeros(0, dtype=np.int64)
    data = np.concatenate([v.values for v in vectors]) if indptr[-1] else np.zeros(0)
    return sp.csr_matrix((data, indices, indptr), shape=(len(vectors), dim))


def gi_features(tokens: Sequence[str], categories: dict) -> np.ndarray:
    """Share of tokens hitting each lexicon category, in sorted-name order.

    Each component is (# tokens in that category's word set) / max(1, total
    tokens), so an empty document maps to the zero vector.
    """
    names = sorted(categories)
    denom = max(1, len(tokens))
    out = np.zeros(len(names))
    for j, name in enumerate(names):
        words = categories[name]
        out[j] = sum(1 for t in tokens if t in words) / denom
    return out


def gi_feature_matrix(docs: Sequence[Sequence[str]], categories: dict) -> np.ndarray:
    if not categories:
        return np.zeros((len(docs), 0))
    return np.stack([gi_features(tokens, categories) for tokens in docs])


class MeanModel:
    """Predicts the training-target mean for every input."""

    def __init__(self):
        self.mean_ = None

    def fit(self, targets: np.ndarray) -> "MeanModel":
        targets = np.asarray(targets, dtype=np.float64)
        if targets.size == 0:
            raise ValidationError("cannot fit on empty targets")
        self.mean_ = float(targets.mean())
        return self

    def predict(self, n: int) -> np.ndarray:
        if self.mean_ is None:
            raise ValidationError("MeanModel is not fitted")
        return np.full(n, self.mean_)


def mean_predictor(targets: np.ndarray) -> MeanModel:
    """Constant model carrying the mean of the training targets."""
    return MeanModel().fit(targets)


@dataclass
class RidgeModel:
    weights: np.ndarray
    intercept: float

    def predict(self, x) -> np.ndarray:
        return np.asarray(x @ self.weights).ravel() + self.intercept


def ridge_predict(model: RidgeModel, x) -> np.ndarray:
    return model.predict(x)


def _conjugate_gradient(
    apply_a, b: np.ndarray, tol: float, max_iter: int, require_converged: bool = True
) -> np.ndarray:
    """Solve A x = b for symmetric positive definite A given x -> A x."""
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = float(r @ r)
    threshold = tol * max(1.0, float(np.linalg.norm(b)))
    for _ in range(max_iter):
        if np.sqrt(rs) <= threshold:
            return x
        ap = apply_a(p)
        denom = float(p @ ap)
        if denom <= 0:
            break
        alpha = rs / denom
        x += alpha * p
        r -= alpha * ap
        rs_new = float(r @ r)
        p = r + (rs_new / rs) * p
        rs = rs_new
    if np.sqrt(rs) <= threshold or not require_converged:
        return x
    raise NumericError(
        f"conjugate gradients did not converge in {max_iter} iterations "
        f"(residual {np.sqrt(rs):.3e})"
    )


def ridge_fit(x, y: np.ndarray, lam: float, tol: float = 1e-8, max_iter: int = 10000) -> RidgeModel:
    """L2-penalized least squares with an unpenalized intercept.

    Centering the targets and columns removes the intercept from the
    system, so CG only sees the penalized part.  Works for scipy.sparse
    and dense designs alike; sparse designs are not densified.
    """
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[0]
    if n != y.shape[0]:
        raise ValidationError(f"rows {n} != targets {y.shape[0]}")
    if lam < 0:
        raise ValidationError("lam must be non-negative")
    y_mean = float(y.mean())
    yc = y - y_mean
    col_mean = np.asarray(x.mean(axis=0)).ravel()

    sparse = sp.issparse(x)
    if sparse:
        x = x.tocsr()

    def apply_a(v: np.ndarray) -> np.ndarray:
        # (Xc^T Xc + lam I) v without forming centered Xc explicitly
        xv = np.asarray(x @ v).ravel() - float(col_mean @ v)
        out = np.asarray(x.T @ xv).ravel() - col_mean * float(xv.sum())
        return out + lam * v

    xty = np.asarray(x.T @ yc).ravel() - col_mean * float(yc.sum())
    w = _conjugate_gradient(apply_a, xty, tol, max_iter)
    intercept = y_mean - float(col_mean @ w)
    return RidgeModel(weights=w, intercept=intercept)


@dataclass
class KrrModel:
    train_x: np.ndarray
    alpha: np.ndarray
    sigma: float

    def predict(self, x: np.ndarray) -> np.ndarray:
        k = rbf_kernel(np.asarray(x, dtype=np.float64), self.train_x, self.sigma)
        return k @ self.alpha


def krr_predict(model: KrrModel, x: np.ndarray) -> np.ndarray:
    return model.predict(x)


def rbf_kernel(a: np.ndarray, b: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian kernel matrix exp(-|ai - bj|^2 / (2 sigma^2))."""
    if sigma <= 0:
        raise ValidationError("sigma must be positive")
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / (2.0 * sigma * sigma))


def median_heuristic(x: np.ndarray, seed: int = 0, sample: int = 500) -> float:
    """Median pairwise distance on a seeded subsample; fallback 1.0."""
    x = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(seed)
    if x.shape[0] > sample:
        x = x[rng.choice(x.shape[0], size=sample, replace=False)]
    sq = (
        np.sum(x * x, axis=1)[:, None]
        + np.sum(x * x, axis=1)[None, :]
        - 2.0 * (x @ x.T)
    )
    np.maximum(sq, 0.0, out=sq)
    dists = np.sqrt(sq[np.triu_indices_from(sq, k=1)])
    positive = dists[dists > 0]
    if positive.size == 0:
        return 1.0
    return float(np.median(positive))


def krr_fit(
    x: np.ndarray,
    y: np.ndarray,
    sigma: float,
    lam: float,
    seed: int = 0,
    max_train: int = KRR_MAX_TRAIN,
) -> KrrModel:
    """Kernel ridge via Cholesky on (K + lam I); subsamples large trains."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValidationError("x must be 2-D with one target per row")
    if lam <= 0:
        raise ValidationError("lam must be positive")
    if x.shape[0] > max_train:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(x.shape[0], size=max_train, replace=False))
        x, y = x[keep], y[keep]
        logger.info("kernel ridge subsampled %d rows to %d", y.shape[0], max_train)
    k = rbf_kernel(x, x, sigma)
    k[np.diag_indices_from(k)] += lam
    try:
        chol = np.linalg.cholesky(k)
    except np.linalg.LinAlgError as exc:
        raise NumericError(
            f"kernel matrix not positive definite at lam={lam}; try a larger lam"
        ) from exc
    alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, y))
    return KrrModel(train_x=x, alpha=alpha, sigma=sigma)


@dataclass
class LogisticModel:
    weights: np.ndarray
    intercept: float

    def predict_proba(self, x) -> np.ndarray:
        z = np.asarray(x @ self.weights).ravel() + self.intercept
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out


def _logistic_objective(x, y, w, b, lam) -> float:
    z = np.asarray(x @ w).ravel() + b
    # log(1 + e^z) - y z, computed stably for both signs of z
    total = float(np.sum(np.logaddexp(0.0, z) - y * z))
    return total + 0.5 * lam * float(w @ w)


def logistic_fit(
    x,
    y: np.ndarray,
    lam: float,
    max_newton: int = 30,
    tol: float = 1e-8,
) -> LogisticModel:
    """Binary logistic regression, L2 on the weights, free intercept.

    Damped Newton iterations; each step solves the (always positive
    definite) curvature system with conjugate gradients, so sparse designs
    stay sparse.
    """
    y = np.asarray(y, dtype=np.float64)
    n, d = x.shape
    if y.shape != (n,):
        raise ValidationError("need one 0/1 label per row")
    if lam <= 0:
        raise ValidationError("lam must be positive")
    w = np.zeros(d)
    rate = min(max(float(y.mean()), 1e-3), 1.0 - 1e-3)
    b = math.log(rate / (1.0 - rate))
    obj = _logistic_objective(x, y, w, b, lam)
    for _ in range(max_newton):
        model = LogisticModel(weights=w, intercept=b)
        p = model.predict_proba(x)
        g_w = np.asarray(x.T @ (p - y)).ravel() + lam * w
        g_b = float(np.sum(p - y))
        gnorm = math.sqrt(float(g_w @ g_w) + g_b * g_b)
        if gnorm <= tol * max(1.0, n):
            break
        curv = np.maximum(p * (1.0 - p), 1e-10)

        def apply_a(v: np.ndarray) -> np.ndarray:
            vw, vb = v[:d], v[d]
            t = (np.asarray(x @ vw).ravel() + vb) * curv
            out = np.empty(d + 1)
            out[:d] = np.asarray(x.T @ t).ravel() + lam * vw
            out[d] = float(t.sum())
            return out

        rhs = np.concatenate([-g_w, [-g_b]])
        delta = _conjugate_gradient(
            apply_a, rhs, tol=1e-8, max_iter=500, require_converged=False
        )
        step = 1.0
        while step > 1e-4:
            cand = _logistic_objective(x, y, w + step * delta[:d], b + step * delta[d], lam)
            if cand <= obj + 1e-12:
                break
            step *= 0.5
        w = w + step * delta[:d]
        b = float(b + step * delta[d])
        obj = _logistic_objective(x, y, w, b, lam)
    return LogisticModel(weights=w, intercept=float(b))


@dataclass
class OrdinalClassifier:
    """One independent binary classifier per count threshold."""

    models: list
    lams: tuple

    def predict_proba(self, x) -> np.ndarray:
        return np.stack([m.predict_proba(x) for m in self.models], axis=1)

    def predict_level(self, x) -> np.ndarray:
        """Number of thresholds believed reached (0 .. K)."""
        return (self.predict_proba(x) >= 0.5).sum(axis=1)


def ordinal_classifier_fit(
    x,
    bits: np.ndarray,
    x_dev=None,
    bits_dev: Optional[np.ndarray] = None,
    grid: Sequence[float] = LOGISTIC_LAMBDA_GRID,
) -> OrdinalClassifier:
    """Per-threshold logistic fits; lam picked per head on dev log-loss.

    Without a dev design, the middle of the grid is used everywhere.
    """
    bits = np.asarray(bits, dtype=np.float64)
    if bits.ndim != 2 or bits.shape[0] != x.shape[0]:
        raise ValidationError("bit matrix rows must match the design")
    models, lams = [], []
    for k in range(bits.shape[1]):
        y = bits[:, k]
        if x_dev is None or bits_dev is None:
            lam = grid[len(grid) // 2]
            models.append(logistic_fit(x, y, lam))
            lams.append(lam)
            continue
        best = None
        for lam in grid:
            model = logistic_fit(x, y, lam)
            p = np.clip(model.predict_proba(x_dev), 1e-12, 1.0 - 1e-12)
            yd = np.asarray(bits_dev[:, k], dtype=np.float64)
            score = float(-np.mean(yd * np.log(p) + (1.0 - yd) * np.log1p(-p)))
            if best is None or score < best[0]:
                best = (score, lam, model)
        models.append(best[2])
        lams.append(best[1])
    return OrdinalClassifier(models=models, lams=tuple(lams))


def level_to_count(levels: np.ndarray, thresholds: Sequence[int]) -> np.ndarray:
    """Representative count per predicted level: 1 below the ladder, else
    the highest threshold reached."""
    reps = np.array([1.0] + [float(t) for t in thresholds])
    levels = np.asarray(levels, dtype=np.int64)
    if levels.min() < 0 or levels.max() >= reps.shape[0]:
        raise ValidationError("level outside the threshold ladder")
    return reps[levels]


def _select_ridge(x_train, y_train, x_dev, y_dev, grid=RIDGE_LAMBDA_GRID):
    best = None
    for lam in grid:
        model = ridge_fit(x_train, y_train, lam)
        score = float(np.mean(np.abs(model.predict(x_dev) - y_dev)))
        if best is None or score < best[0]:
            best = (score, lam, model)
    return best[2], best[1]


def _select_krr(
    x_train, y_train, x_dev, y_dev, seed, grid=RIDGE_LAMBDA_GRID, multipliers=SIGMA_MULTIPLIERS
):
    base_sigma = median_heuristic(x_train, seed=seed)
    best = None
    for mult in multipliers:
        for lam in grid:
            try:
                model = krr_fit(x_train, y_train, base_sigma * mult, lam, seed=seed)
            except NumericError:
                continue
            score = float(np.mean(np.abs(model.predict(x_dev) - y_dev)))
            if best is None or score < best[0]:
                best = (score, lam, mult, model)
    if best is None:
        raise NumericError("no kernel ridge configuration was solvable")
    return best[3], best[1], base_sigma * best[2]


@dataclass
class BaselineResult:
    name: str
    predictions: np.ndarray
    hyper: dict
    kind: str = "regression"
    report: Optional[ev.EvalReport] = field(default=None)


def _make_report(
    pred_log: np.ndarray, true_log: np.ndarray, test_counts, edges
) -> Optional[ev.EvalReport]:
    if test_counts is None or edges is None:
        return None
    pred_counts = np.exp(np.maximum(pred_log, 0.0))
    per_bin, macro = ev.bin_fscore(pred_counts, np.asarray(test_counts, dtype=np.float64), edges)
    return ev.EvalReport(
        mae=ev.mae(np.maximum(pred_log, 0.0), true_log),
        mape=ev.mape(np.maximum(pred_log, 0.0), true_log),
        per_bin_f=tuple(per_bin),
        macro_f=macro,
        bin_edges=tuple(float(e) for e in edges),
        mape_excluded=ev.mape_exclusions(true_log),
    )


def baseline_suite(
    bow: dict,
    feats: dict,
    targets: dict,
    seed: int = 0,
    names: Optional[Sequence[str]] = None,
    gi: Optional[dict] = None,
    ordinal_bits: Optional[dict] = None,
    thresholds: Optional[Sequence[int]] = None,
    test_counts=None,
    report_edges=None,
    ridge_grid: Sequence[float] = RIDGE_LAMBDA_GRID,
    sigma_multipliers: Sequence[float] = SIGMA_MULTIPLIERS,
) -> list[BaselineResult]:
    """Fit the reference predictors and score the test rows of each.

    ``bow``/``feats``/``gi``/``targets`` map "train"/"dev"/"test" to design
    matrices (CSR or dense) and 1-D log targets.  Model selection uses dev
    rows only.  When ``test_counts`` and ``report_edges`` are given, each
    result carries a filled-in report.

    The classifier entry predicts which count milestones will be reached
    (one logistic model per threshold, most probable level wins); its
    "regression" output is the representative count of that level, so its
    error metrics are plateau approximations and are flagged by ``kind``.
    """
    wanted = set(names) if names is not None else None
    if wanted is not None:
        unknown = wanted - set(SUITE_NAMES)
        if unknown:
            raise ValidationError(f"unknown baseline names: {sorted(unknown)}")
    y_tr, y_dev, y_test = targets["train"], targets["dev"], targets["test"]
    n_test = y_test.shape[0]
    results = []

    def keep(name: str) -> bool:
        return wanted is None or name in wanted

    def finish(name, preds, hyper, kind="regression"):
        results.append(
            BaselineResult(
                name,
                preds,
                hyper,
                kind=kind,
                report=_make_report(preds, y_test, test_counts, report_edges),
            )
        )

    if keep("Mean"):
        model = mean_predictor(y_tr)
        finish("Mean", model.predict(n_test), {})

    if keep("Linear_BoW"):
        model, lam = _select_ridge(bow["train"], y_tr, bow["dev"], y_dev, grid=ridge_grid)
        finish("Linear_BoW", model.predict(bow["test"]), {"lam": lam})

    if keep("Linear_GI"):
        if gi is None:
            raise ValidationError("Linear_GI needs lexicon category matrices")
        model, lam = _select_ridge(gi["train"], y_tr, gi["dev"], y_dev, grid=ridge_grid)
        finish("Linear_GI", model.predict(gi["test"]), {"lam": lam})

    dense_bow = {k: np.asarray(v.todense()) for k, v in bow.items()} if any(
        keep(n) for n in ("KRR_BoW", "KRR_BoW+feat")
    ) else None

    if keep("KRR_BoW"):
        model, lam, sigma = _select_krr(
            dense_bow["train"], y_tr, dense_bow["dev"], y_dev, seed,
            grid=ridge_grid, multipliers=sigma_multipliers,
        )
        finish("KRR_BoW", model.predict(dense_bow["test"]), {"lam": lam, "sigma": sigma})

    if keep("KRR_feat"):
        model, lam, sigma = _select_krr(
            feats["train"], y_tr, feats["dev"], y_dev, seed,
            grid=ridge_grid, multipliers=sigma_multipliers,
        )
        finish("KRR_feat", model.predict(feats["test"]), {"lam": lam, "sigma": sigma})

    if keep("KRR_BoW+feat"):
        joined = {
            k: np.concatenate([dense_bow[k], feats[k]], axis=1) for k in ("train", "dev", "test")
        }
        model, lam, sigma = _select_krr(
            joined["train"], y_tr, joined["dev"], y_dev, seed,
            grid=ridge_grid, multipliers=sigma_multipliers,
        )
        finish("KRR_BoW+feat", model.predict(joined["test"]), {"lam": lam, "sigma": sigma})

    if keep("Logistic_ord"):
        if ordinal_bits is None or thresholds is None:
            raise ValidationError("Logistic_ord needs ordinal bits and the threshold ladder")
        clf = ordinal_classifier_fit(
            bow["train"], ordinal_bits["train"], bow["dev"], ordinal_bits["dev"]
        )
        levels = clf.predict_level(bow["test"])
        preds = np.log(level_to_count(levels, thresholds))
        finish("Logistic_ord", preds, {"lam": list(clf.lams)}, kind="classifier")

    return results
