"""Weighted marginal association estimators (Pearson, Spearman, Phi) with
cluster-robust uncertainty.

The point estimate is the product-moment functional

    g(m) = (m11 - m10*m01) / sqrt((m20 - m10^2) * (m02 - m01^2))

applied to the five weighted raw moments of the working pair: the raw
values for Pearson, weighted midranks for Spearman, and 0/1 indicators
for Phi.  The five moment estimating equations are stacked, their joint
covariance is the cluster-level sandwich, and the standard error of the
correlation follows from the delta method with the analytic gradient of
g.  Confidence intervals are plain Wald intervals rho +- z_{0.975} * se.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._backend import cluster_weighted_sums, weighted_midranks
from .data import CategorizedDataset, ClusteredDataset
from .errors import ClusterDataError, DegenerateVarianceError, EstimationError
from .numerics import normal_quantile
from .weights import WeightScheme, compute_weights

Z_975 = normal_quantile(0.975)

# A centered variance below this multiple of the raw second moment is
# treated as zero rather than allowed to blow up the correlation.
_NEAR_SINGULAR = 1e-12

_MEASURES = ("pearson", "spearman", "phi")


@dataclass(frozen=True)
class MomentVector:
    """Weighted raw moments (m10, m01, m11, m20, m02) of a working pair."""

    m10: float
    m01: float
    m11: float
    m20: float
    m02: float

    def as_array(self) -> np.ndarray:
        return np.array([self.m10, self.m01, self.m11, self.m20, self.m02])

    @classmethod
    def from_array(cls, arr) -> "MomentVector":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.shape != (5,):
            raise ClusterDataError("moment vector must have five entries")
        return cls(*(float(v) for v in arr))


@dataclass(frozen=True)
class AssociationEstimate:
    measure: str
    scheme: WeightScheme
    rho_hat: float
    se: float
    ci_low: float
    ci_high: float
    n_clusters_used: int
    n_units_used: int


def weighted_moments(a, b, weights, clusters):
    """Weighted raw moments of (a, b) and the sandwich covariance of their
    estimator.

    Parameters
    ----------
    a, b : per-unit values
    weights : positive per-unit weights
    clusters : per-unit cluster labels (any hashable values)

    Returns
    -------
    (MomentVector, cov) where cov is the 5x5 sandwich covariance of the
    stacked moment estimating equations: with per-cluster scores
    S_i = sum_j w_ij (f_ij - m_hat), cov = (sum_i S_i S_i^T) / (sum w)^2.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    w = np.ascontiguousarray(weights, dtype=np.float64)
    labels = np.asarray(clusters)
    if not (a.shape == b.shape == w.shape == labels.shape) or a.ndim != 1 or a.size == 0:
        raise ClusterDataError("a, b, weights, clusters must be equal-length non-empty vectors")
    if np.any(~np.isfinite(w)) or np.any(w <= 0):
        raise ClusterDataError("weights must be positive and finite")
    _, inv = np.unique(labels, return_inverse=True)
    if np.any(np.diff(inv) < 0):
        order = np.argsort(inv, kind="stable")
        a, b, w, inv = a[order], b[order], w[order], inv[order]
    counts = np.bincount(inv)
    starts = np.concatenate(([0], np.cumsum(counts)))
    return _moments_from_segments(a, b, w, starts)


def _moments_from_segments(a, b, w, starts):
    wsum_c, fsums_c = cluster_weighted_sums(a, b, w, starts)
    total_w = wsum_c.sum()
    if not total_w > 0:
        raise ClusterDataError("total weight must be positive")
    totals = fsums_c.sum(axis=0)
    m = totals / total_w
    scores = fsums_c - wsum_c[:, None] * m[None, :]
    cov = scores.T @ scores / (total_w * total_w)
    return MomentVector.from_array(m), cov


def _variances(m: MomentVector):
    vx = m.m20 - m.m10 * m.m10
    vy = m.m02 - m.m01 * m.m01
    if vx <= 0 or vx < _NEAR_SINGULAR * abs(m.m20):
        raise DegenerateVarianceError(f"first margin has (near-)zero variance: {vx!r}")
    if vy <= 0 or vy < _NEAR_SINGULAR * abs(m.m02):
        raise DegenerateVarianceError(f"second margin has (near-)zero variance: {vy!r}")
    return vx, vy


def correlation_functional(m: MomentVector) -> float:
    """Product-moment correlation from a moment vector.

    Raises DegenerateVarianceError on a (near-)constant margin.  Values
    overshooting [-1, 1] by less than 1e-9 are clamped; larger overshoots
    raise EstimationError.
    """
    vx, vy = _variances(m)
    rho = (m.m11 - m.m10 * m.m01) / math.sqrt(vx * vy)
    if abs(rho) > 1.0:
        if abs(rho) - 1.0 < 1e-9:
            return math.copysign(1.0, rho)
        raise EstimationError(f"correlation functional out of range: {rho!r}")
    return rho


def correlation_gradient(m: MomentVector) -> np.ndarray:
    """Analytic gradient of the correlation functional at ``m``."""
    vx, vy = _variances(m)
    s = math.sqrt(vx * vy)
    g = (m.m11 - m.m10 * m.m01) / s
    return np.array(
        [
            -m.m01 / s + g * m.m10 / vx,
            -m.m10 / s + g * m.m01 / vy,
            1.0 / s,
            -g / (2.0 * vx),
            -g / (2.0 * vy),
        ]
    )


def delta_se(m: MomentVector, cov) -> float:
    """Delta-method standard error of the correlation functional."""
    cov = np.asarray(cov, dtype=np.float64)
    if cov.shape != (5, 5):
        raise ClusterDataError("covariance must be 5x5")
    grad = correlation_gradient(m)
    var = float(grad @ cov @ grad)
    return math.sqrt(var) if var > 0 else 0.0


def _estimate_from_moments(measure, scheme, m, cov, n_clusters, n_units, rho=None):
    if rho is None:
        rho = correlation_functional(m)
    se = delta_se(m, cov)
    return AssociationEstimate(
        measure=measure,
        scheme=scheme,
        rho_hat=rho,
        se=se,
        ci_low=rho - Z_975 * se,
        ci_high=rho + Z_975 * se,
        n_clusters_used=n_clusters,
        n_units_used=n_units,
    )


def _prepare(data, scheme, min_cluster_size):
    """Weights plus the eligible-cluster arrays for the moment pipeline."""
    if isinstance(data, CategorizedDataset):
        base = data.base
    elif isinstance(data, ClusteredDataset):
        base = data
    else:
        raise ClusterDataError("data must be a ClusteredDataset or CategorizedDataset")
    w = compute_weights(data, scheme)
    min_cluster_size = int(min_cluster_size)
    if min_cluster_size < 1:
        raise ClusterDataError("min_cluster_size must be at least 1")
    sizes = base.sizes
    keep = sizes >= min_cluster_size
    n_keep = int(keep.sum())
    if n_keep < 2:
        raise EstimationError(
            f"need at least 2 clusters with {min_cluster_size}+ units, have {n_keep}"
        )
    if n_keep == base.n_clusters:
        x, y, ww = base.x, base.y, w
        starts = base.starts
    else:
        mask = np.repeat(keep, sizes)
        x, y, ww = base.x[mask], base.y[mask], w[mask]
        starts = np.concatenate(([0], np.cumsum(sizes[keep])))
    return x, y, ww, starts, n_keep, int(starts[-1])


def pearson(data, scheme: WeightScheme, min_cluster_size: int = 2) -> AssociationEstimate:
    """Weighted Pearson correlation of the raw paired outcomes."""
    x, y, w, starts, n_clusters, n_units = _prepare(data, scheme, min_cluster_size)
    m, cov = _moments_from_segments(x, y, w, starts)
    return _estimate_from_moments("pearson", scheme, m, cov, n_clusters, n_units)


def spearman(data, scheme: WeightScheme, min_cluster_size: int = 2) -> AssociationEstimate:
    """Weighted Spearman correlation: the Pearson pipeline applied to
    weighted midranks.

    Midranks come from the pooled weighted ECDF of each margin over all
    retained units (same weights as the moment estimation); they are then
    treated as fixed transformed data for the sandwich/delta step.
    """
    x, y, w, starts, n_clusters, n_units = _prepare(data, scheme, min_cluster_size)
    rx = weighted_midranks(x, w)
    ry = weighted_midranks(y, w)
    m, cov = _moments_from_segments(rx, ry, w, starts)
    return _estimate_from_moments("spearman", scheme, m, cov, n_clusters, n_units)


def phi(
    data,
    scheme: WeightScheme,
    x_threshold: float,
    y_threshold: float,
    min_cluster_size: int = 2,
) -> AssociationEstimate:
    """Weighted phi coefficient of the margins dichotomized at the given
    thresholds (indicator 1 when value >= threshold).

    The point estimate is computed from the weighted 2x2 cell
    probabilities; it coincides algebraically with the Pearson pipeline on
    the 0/1 indicators, which supplies the standard error.
    """
    x, y, w, starts, n_clusters, n_units = _prepare(data, scheme, min_cluster_size)
    ix = (x >= float(x_threshold)).astype(np.float64)
    iy = (y >= float(y_threshold)).astype(np.float64)
    total_w = w.sum()
    p11 = float(w[(ix == 1.0) & (iy == 1.0)].sum()) / total_w
    p10 = float(w[(ix == 1.0) & (iy == 0.0)].sum()) / total_w
    p01 = float(w[(ix == 0.0) & (iy == 1.0)].sum()) / total_w
    p00 = float(w[(ix == 0.0) & (iy == 0.0)].sum()) / total_w
    p1x, p0x = p11 + p10, p01 + p00
    px1, px0 = p11 + p01, p10 + p00
    denom = p1x * p0x * px1 * px0
    if denom <= 0.0:
        raise DegenerateVarianceError("a dichotomized margin has a single level")
    rho_cells = (p11 * p00 - p10 * p01) / math.sqrt(denom)
    m, cov = _moments_from_segments(ix, iy, w, starts)
    rho_moments = correlation_functional(m)
    if abs(rho_cells - rho_moments) > 1e-9:
        raise EstimationError(
            f"cell-probability and indicator-moment phi disagree: {rho_cells} vs {rho_moments}"
        )
    return _estimate_from_moments(
        "phi", scheme, m, cov, n_clusters, n_units, rho=rho_cells
    )


def parse_measures(tokens: str) -> tuple:
    """Parse a comma-separated measure list."""
    out = []
    for tok in tokens.split(","):
        name = tok.strip().lower()
        if name not in _MEASURES:
            raise ClusterDataError(
                f"unknown measure {tok!r} (expected one of: {', '.join(_MEASURES)})"
            )
        if name not in out:
            out.append(name)
    if not out:
        raise ClusterDataError("at least one measure is required")
    return tuple(out)
