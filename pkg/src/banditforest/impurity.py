"""Impurity metrics, split objectives and delta-method confidence intervals.

Classification splits are parameterised by the joint masses of
(side, class) cells over a common denominator: the ``theta`` vector is
``[p_L1..p_LK, p_R1..p_R(K-1)]`` with the last cell implied.  Regression
splits use ``theta = [w_L, s_L1, s_L2, s_R1, s_R2]`` where ``s_side,k`` is the
mean of ``y**k * 1[side]`` and ``w_R = 1 - w_L``.

The ``*_objective_variance`` functions are the array workhorses used by the
splitter.  They return the objective and the per-observation asymptotic
variance ``grad' Sigma grad`` for every row of their inputs at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

GINI = "gini"
ENTROPY = "entropy"
MSE = "mse"
KINDS = (GINI, ENTROPY, MSE)
CLASSIFICATION_KINDS = (GINI, ENTROPY)

EPSILON = 1e-10
MASS_TOL = 1e-12


@dataclass(frozen=True)
class SideStats:
    """Sufficient statistics of one side of a split.

    ``masses`` holds per-class masses (classification) or the normalised
    moments ``(w, s1, s2, s3, s4)`` (regression), all divided by
    ``denominator``.
    """

    masses: np.ndarray
    denominator: int
    classification: bool = True

    @property
    def weight(self) -> float:
        return float(self.masses.sum()) if self.classification else float(self.masses[0])


@dataclass(frozen=True)
class SplitEstimate:
    mu_hat: float
    ci_half_width: float
    n_used: int
    exact: bool


def check_kind(kind: str) -> str:
    if kind not in KINDS:
        raise ValueError(f"unknown impurity kind {kind!r}")
    return kind


def z_value(delta: float) -> float:
    """Two-sided normal quantile ``z_{1 - delta/2}``."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return -NormalDist().inv_cdf(delta / 2.0)


# ---------------------------------------------------------------------------
# plain impurities


def node_impurity(kind: str, stats) -> float:
    """Impurity of a node from normalised statistics.

    ``stats`` is a class-probability vector for gini/entropy and
    ``(w, s1, s2)`` with ``w == 1`` for mse.
    """
    check_kind(kind)
    s = np.asarray(stats, dtype=np.float64)
    if np.any(s[:1] < 0) or (kind != MSE and np.any(s < 0)):
        raise ValueError("negative mass")
    if kind == MSE:
        w, s1, s2 = s[:3]
        if abs(w - 1.0) > MASS_TOL:
            raise ValueError("mass not normalised")
        return float(max(s2 - s1 * s1, 0.0))
    if abs(s.sum() - 1.0) > MASS_TOL:
        raise ValueError("mass not normalised")
    if kind == GINI:
        return float(1.0 - np.dot(s, s))
    nz = s[s > 0]
    return float(-np.sum(nz * np.log2(nz)))


def impurity_from_targets(kind: str, y: np.ndarray, n_classes: int = 0) -> float:
    """Exact impurity of a set of targets (labels or reals)."""
    check_kind(kind)
    y = np.asarray(y)
    if y.size == 0:
        return 0.0
    if kind == MSE:
        y = y.astype(np.float64)
        return float(np.mean((y - y.mean()) ** 2))
    counts = np.bincount(y.astype(np.int64), minlength=n_classes)
    return node_impurity(kind, counts / counts.sum())


def impurity_reduction(parent_impurity: float, mu: float) -> float:
    """``mu - I(parent)``; negative when the split helps."""
    return mu - parent_impurity


# ---------------------------------------------------------------------------
# array workhorses


def _safe_div(a, b):
    out = np.zeros(np.broadcast(a, b).shape)
    np.divide(a, b, out=out, where=b > 0)
    return out


def class_objective_variance(kind: str, left: np.ndarray, right: np.ndarray, epsilon: float = EPSILON):
    """Objective and plug-in variance for classification splits.

    ``left`` and ``right`` are ``(A, K)`` arrays of (side, class) masses that
    together sum to one per row.  Empty sides contribute zero.  Gradients are
    taken at masses clamped to ``[epsilon, 1 - epsilon]``; the covariance uses
    the unclamped masses, so cells with zero mass never contribute.
    """
    left = np.atleast_2d(np.asarray(left, dtype=np.float64))
    right = np.atleast_2d(np.asarray(right, dtype=np.float64))
    PL = left.sum(axis=1)
    PR = right.sum(axis=1)
    if kind == GINI:
        mu = (PL - _safe_div((left * left).sum(axis=1), PL)) + (PR - _safe_div((right * right).sum(axis=1), PR))
    elif kind == ENTROPY:
        mu = _entropy_term(left, PL) + _entropy_term(right, PR)
    else:
        raise ValueError(f"{kind!r} is not a classification impurity")
    p = np.concatenate([left, right], axis=1)
    g = _full_gradient(kind, left, right, epsilon)
    mean = (p * g).sum(axis=1)
    var = (p * g * g).sum(axis=1) - mean * mean
    return mu, np.maximum(var, 0.0)


def _entropy_term(side: np.ndarray, P: np.ndarray) -> np.ndarray:
    ratio = _safe_div(side, P[:, None])
    logs = np.zeros_like(side)
    np.log2(ratio, out=logs, where=side > 0)
    return -(side * logs).sum(axis=1)


def _full_gradient(kind, left, right, epsilon):
    """Gradient w.r.t. every (side, class) mass, at clamped masses."""
    lc = np.clip(left, epsilon, 1.0 - epsilon)
    rc = np.clip(right, epsilon, 1.0 - epsilon)
    parts = []
    for s in (lc, rc):
        P = s.sum(axis=1, keepdims=True)
        if kind == GINI:
            parts.append(1.0 - 2.0 * s / P + (s * s).sum(axis=1, keepdims=True) / (P * P))
        else:
            parts.append(-np.log2(s / P))
    return np.concatenate(parts, axis=1)


def mse_objective_variance(left: np.ndarray, right: np.ndarray, epsilon: float = EPSILON):
    """Objective and plug-in variance for regression splits.

    ``left``/``right`` are ``(A, 5)`` arrays of normalised moments
    ``(w, s1, s2, s3, s4)`` of the side indicator times ``y**k``.  The
    variance is that of ``grad' phi`` for the per-point tuple
    ``phi = (1_L, y 1_L, y^2 1_L, y 1_R, y^2 1_R)``, which needs the third and
    fourth moments.
    """
    left = np.atleast_2d(np.asarray(left, dtype=np.float64))
    right = np.atleast_2d(np.asarray(right, dtype=np.float64))
    wL, s1L, s2L, s3L, s4L = left.T
    wR, s1R, s2R, s3R, s4R = right.T
    mu = (s2L - _safe_div(s1L * s1L, wL)) + (s2R - _safe_div(s1R * s1R, wR))
    g0, g1, g2, g3, g4 = _mse_gradient(wL, s1L, s1R, epsilon)
    second = (
        g0 * g0 * wL
        + 2.0 * g0 * g1 * s1L
        + (g1 * g1 + 2.0 * g0 * g2) * s2L
        + 2.0 * g1 * g2 * s3L
        + g2 * g2 * s4L
        + g3 * g3 * s2R
        + 2.0 * g3 * g4 * s3R
        + g4 * g4 * s4R
    )
    mean = g0 * wL + g1 * s1L + g2 * s2L + g3 * s1R + g4 * s2R
    return mu, np.maximum(second - mean * mean, 0.0)


def _mse_gradient(wL, s1L, s1R, epsilon):
    wl = np.clip(wL, epsilon, 1.0 - epsilon)
    wr = 1.0 - wl
    ones = np.ones_like(wl)
    g0 = (s1L / wl) ** 2 - (s1R / wr) ** 2
    return g0, -2.0 * s1L / wl, ones, -2.0 * s1R / wr, ones


def objective_variance(kind: str, left: np.ndarray, right: np.ndarray, epsilon: float = EPSILON):
    if kind == MSE:
        return mse_objective_variance(left, right, epsilon)
    return class_objective_variance(kind, left, right, epsilon)


# ---------------------------------------------------------------------------
# theta-vector interface


def _class_split(theta: np.ndarray):
    theta = np.asarray(theta, dtype=np.float64)
    if theta.size % 2 != 1:
        raise ValueError("classification theta must have odd length 2K-1")
    K = (theta.size + 1) // 2
    last = 1.0 - theta.sum()
    full = np.append(theta, last)
    return full[:K], full[K:], K


def _mse_split(theta: np.ndarray):
    theta = np.asarray(theta, dtype=np.float64)
    if theta.size != 5:
        raise ValueError("regression theta must have length 5")
    return theta


def split_objective(kind: str, theta) -> float:
    """Weighted child impurity ``mu`` for a theta vector."""
    check_kind(kind)
    if kind == MSE:
        wL, s1L, s2L, s1R, s2R = _mse_split(theta)
        wR = 1.0 - wL
        left = (s2L - s1L * s1L / wL) if wL > 0 else 0.0
        right = (s2R - s1R * s1R / wR) if wR > 0 else 0.0
        return float(left + right)
    left, right, _ = _class_split(theta)
    total = 0.0
    for side in (left, right):
        P = side.sum()
        if P <= 0:
            continue
        q = side / P
        if kind == GINI:
            total += P * (1.0 - np.dot(q, q))
        else:
            nz = q[q > 0]
            total += -P * np.sum(nz * np.log2(nz))
    return float(total)


def objective_gradient(kind: str, theta, epsilon: float = EPSILON) -> np.ndarray:
    """Analytic gradient of :func:`split_objective` with respect to theta."""
    check_kind(kind)
    if kind == MSE:
        wL, s1L, _, s1R, _ = _mse_split(theta)
        g = _mse_gradient(np.array([wL]), np.array([s1L]), np.array([s1R]), epsilon)
        return np.array([float(np.asarray(c).ravel()[0]) for c in g])
    left, right, K = _class_split(theta)
    g = _full_gradient(kind, left[None, :], right[None, :], epsilon)[0]
    # the last right-side cell is 1 - sum(theta)
    return g[:-1] - g[-1]


def multinomial_covariance(theta) -> np.ndarray:
    """Per-observation covariance of the free multinomial cells."""
    t = np.asarray(theta, dtype=np.float64)
    return np.diag(t) - np.outer(t, t)


def regression_covariance(left_moments, right_moments) -> np.ndarray:
    """Covariance of ``(1_L, y 1_L, y^2 1_L, y 1_R, y^2 1_R)`` from moments.

    Each argument is ``(w, s1, s2, s3, s4)`` for one side.
    """
    wL, s1L, s2L, s3L, s4L = np.asarray(left_moments, dtype=np.float64)
    _, s1R, s2R, s3R, s4R = np.asarray(right_moments, dtype=np.float64)
    second = np.array(
        [
            [wL, s1L, s2L, 0.0, 0.0],
            [s1L, s2L, s3L, 0.0, 0.0],
            [s2L, s3L, s4L, 0.0, 0.0],
            [0.0, 0.0, 0.0, s2R, s3R],
            [0.0, 0.0, 0.0, s3R, s4R],
        ]
    )
    theta = np.array([wL, s1L, s2L, s1R, s2R])
    return second - np.outer(theta, theta)


def finite_population_factor(n_used: int, n_total: int) -> float:
    if n_total <= 1 or n_used >= n_total:
        return 0.0
    return math.sqrt((n_total - n_used) / (n_total - 1))


def estimate_with_ci(
    kind: str,
    theta_hat,
    n_used: int,
    n_total: int,
    delta: float,
    finite_population: bool = True,
    cov: np.ndarray | None = None,
    epsilon: float = EPSILON,
) -> SplitEstimate:
    """Plug-in estimate of ``mu`` with a delta-method half-width.

    ``cov`` defaults to the multinomial covariance for classification; for
    mse pass :func:`regression_covariance` of the sampled moments.
    """
    check_kind(kind)
    if n_used < 1:
        raise ValueError("n_used must be at least 1")
    z = z_value(delta)
    if cov is None:
        if kind == MSE:
            raise ValueError("mse estimates need the moment covariance")
        cov = multinomial_covariance(theta_hat)
    mu = split_objective(kind, theta_hat)
    g = objective_gradient(kind, theta_hat, epsilon)
    var = max(float(g @ cov @ g), 0.0)
    half = z * math.sqrt(var / n_used)
    exact = False
    if finite_population:
        if n_used >= n_total:
            half, exact = 0.0, True
        else:
            half *= finite_population_factor(n_used, n_total)
    return SplitEstimate(mu, half, int(n_used), exact)
