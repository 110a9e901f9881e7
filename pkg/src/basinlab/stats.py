"""Weighted least squares and bootstrap helpers shared across modules.

Only ever two regressors, so the normal equations are solved with explicit
2x2 inversion; no linear-algebra dependency and every intermediate is
auditable.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class WlsResult:
    slope: float
    intercept: float
    slope_stderr: float
    intercept_stderr: float
    chi2: float


@dataclass(frozen=True)
class OriginFit:
    slope: float
    slope_stderr: float
    chi2: float


def wls(xs, ys, weights) -> WlsResult:
    """Minimize sum w_i (y_i - a x_i - b)^2.

    Weights are taken as inverse variances; the standard errors come from
    the inverse normal matrix (absolute-sigma convention).
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    w = np.asarray(weights, dtype=float)
    if not (x.shape == y.shape == w.shape) or x.ndim != 1:
        raise ValueError("xs, ys, weights must be equal-length 1-D sequences")
    if x.size < 3:
        raise ValueError("need at least 3 points")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")

    sw = float(np.sum(w))
    sx = float(np.sum(w * x))
    sy = float(np.sum(w * y))
    sxx = float(np.sum(w * x * x))
    sxy = float(np.sum(w * x * y))
    det = sw * sxx - sx * sx
    scale = sw * sxx
    if det <= 0 or (scale > 0 and det < 1e-14 * scale):
        raise ValueError("degenerate design: regressor has no spread")
    slope = (sw * sxy - sx * sy) / det
    intercept = (sxx * sy - sx * sxy) / det
    resid = y - slope * x - intercept
    chi2 = float(np.sum(w * resid * resid))
    return WlsResult(slope=slope, intercept=intercept,
                     slope_stderr=float(np.sqrt(sw / det)),
                     intercept_stderr=float(np.sqrt(sxx / det)),
                     chi2=chi2)


def wls_through_origin(xs, ys, weights) -> OriginFit:
    """Minimize sum w_i (y_i - a x_i)^2 with chi-square-scaled stderr.

    Used for model fits forced through the origin; the stderr shrinks to
    zero when the data lie exactly on the line.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    w = np.asarray(weights, dtype=float)
    if x.size < 2:
        raise ValueError("need at least 2 points")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    sxx = float(np.sum(w * x * x))
    if sxx <= 0:
        raise ValueError("degenerate design")
    slope = float(np.sum(w * x * y)) / sxx
    resid = y - slope * x
    chi2 = float(np.sum(w * resid * resid))
    dof = max(x.size - 1, 1)
    stderr = np.sqrt((chi2 / dof) / sxx)
    return OriginFit(slope=slope, slope_stderr=float(stderr), chi2=chi2)


def pair_disagreement(labels, rng) -> float:
    """Disagreement fraction over one random perfect matching of labels."""
    n = len(labels)
    order = rng.permutation(n)
    n_pairs = n // 2
    diff = 0
    for k in range(n_pairs):
        if labels[order[2 * k]] != labels[order[2 * k + 1]]:
            diff += 1
    return diff / n_pairs


def bootstrap_fraction(labels, n_resamples: int, seed: int):
    """Bootstrap mean and standard error of the pairwise disagreement rate.

    Each resample pairs the labels at random and counts the fraction of
    pairs whose labels differ.  Degenerate single-label input short-circuits
    to (0, 0).
    """
    labels = list(labels)
    if len(labels) < 2:
        raise ValueError("need at least 2 labels")
    if n_resamples < 100:
        raise ValueError("need at least 100 resamples")
    if len(set(labels)) == 1:
        return 0.0, 0.0
    rng = np.random.default_rng(seed)
    fs = np.empty(n_resamples)
    arr = np.asarray(labels)
    for i in range(n_resamples):
        order = rng.permutation(arr.size)
        shuffled = arr[order]
        n_pairs = arr.size // 2
        a = shuffled[: 2 * n_pairs : 2]
        b = shuffled[1 : 2 * n_pairs : 2]
        fs[i] = np.mean(a != b)
    return float(fs.mean()), float(fs.std())
