"""Informative subgroup size (ISS) testing.

For a paired dataset, one margin acts as the subgroup-inducing variable Z
and the other as the response.  Thresholding Z at a cutpoint z splits
each cluster into latent subgroups; the rank statistic compares the
subgroup means of the response's pooled midranks, giving every unit
weight 1/n_i so that clusters count equally and each subgroup receives
its within-cluster share.  The group-mean difference is centered by its
exact expectation over uniform within-cluster relabellings (subgroup
sizes are preserved by the permutation, so that expectation is a
permutation-invariant function of the data); without the centering the
cluster composition leaves the permutation distribution off-center and
the two-sided test loses power.  Significance comes from permuting Z
within clusters (sizes and the response structure preserved), and
evidence is aggregated over threshold choices and disjoint cluster
subsets with Stouffer's inverse-normal combination; p-values are clamped
away from 0/1 before the normal-score transform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._backend import permuted_group_sums, weighted_midranks
from ._parallel import parallel_map
from .data import ClusteredDataset
from .errors import ClusterDataError, EstimationError
from .numerics import RandomStream, normal_cdf, normal_quantile

TRUNCATION_EPS = 1e-16

_DIRECTIONS = ("x", "y")


@dataclass(frozen=True)
class IssConfig:
    """Configuration of one ISS test run.

    direction : which margin induces the subgroups ("x" or "y")
    thresholds : explicit cutpoints, or an integer t for automatic
        selection of t cutpoints from the pooled Z values
    subset_size : clusters per disjoint subset; None tests all clusters
        as a single subset
    permutations : within-cluster permutations per component test
    epsilon : p-value truncation bound for the normal-score transform
    """

    direction: str
    thresholds: object = 10
    subset_size: int | None = 10
    permutations: int = 100
    seed: int = 1729
    epsilon: float = TRUNCATION_EPS

    def __post_init__(self):
        if self.direction not in _DIRECTIONS:
            raise ClusterDataError(f"direction must be 'x' or 'y', got {self.direction!r}")
        if isinstance(self.thresholds, int):
            if self.thresholds < 1:
                raise ClusterDataError("threshold count must be positive")
        else:
            vals = tuple(float(v) for v in self.thresholds)
            if not vals:
                raise ClusterDataError("at least one threshold is required")
            if any(vals[i] >= vals[i + 1] for i in range(len(vals) - 1)):
                raise ClusterDataError("thresholds must be strictly increasing")
            object.__setattr__(self, "thresholds", vals)
        if self.subset_size is not None and self.subset_size < 2:
            raise ClusterDataError("subset_size must be at least 2")
        if self.permutations < 1:
            raise ClusterDataError("permutations must be at least 1")
        if not 0.0 < self.epsilon < 0.5:
            raise ClusterDataError("epsilon must lie in (0, 0.5)")


@dataclass(frozen=True)
class IssComponent:
    direction: str
    threshold: float
    subset_index: int
    n_clusters: int
    p_value: float | None
    skipped: bool = False
    reason: str | None = None


@dataclass(frozen=True)
class IssReport:
    direction: str
    thresholds: tuple
    n_subsets: int
    components: tuple
    n_combined: int
    n_skipped: int
    z_stouffer: float
    p_stouffer: float


def select_thresholds(values, t: int) -> list:
    """t cutpoints for a subgroup variable: midpoints of adjacent distinct
    values positioned to split the distinct-value sequence into t+1
    equal-count blocks."""
    t = int(t)
    if t < 1:
        raise ClusterDataError("threshold count must be positive")
    distinct = np.unique(np.asarray(values, dtype=np.float64))
    n = distinct.shape[0]
    if n < t + 1:
        raise EstimationError(f"need at least {t + 1} distinct values for {t} thresholds, have {n}")
    out = []
    for g in range(1, t + 1):
        cut = -((-g * n) // (t + 1))  # ceil(g*n/(t+1))
        cut = min(max(cut, 1), n - 1)
        out.append(float((distinct[cut - 1] + distinct[cut]) / 2.0))
    return out


def _direction_arrays(data: ClusteredDataset, direction: str):
    if direction == "x":
        return data.x, data.y
    if direction == "y":
        return data.y, data.x
    raise ClusterDataError(f"direction must be 'x' or 'y', got {direction!r}")


def _rank_parts(data: ClusteredDataset, direction: str, threshold: float):
    z, resp = _direction_arrays(data, direction)
    sizes = data.sizes.astype(np.float64)
    w = np.repeat(1.0 / sizes, data.sizes)
    low = z <= float(threshold)
    n_low_total = int(low.sum())
    if n_low_total == 0 or n_low_total == low.shape[0]:
        raise EstimationError(f"threshold {threshold!r} leaves an empty subgroup")
    ranks = weighted_midranks(resp, w)
    scores = w * ranks
    s_tot = scores.sum()
    w_tot = w.sum()
    n_low = np.add.reduceat(low.astype(np.int64), data.starts[:-1])
    # closed-form mean of the group-mean difference over within-cluster
    # relabellings: group shares are fixed, so centering by it leaves the
    # statistic exchangeable while anchoring its null at zero
    cluster_mean_rank = np.add.reduceat(ranks, data.starts[:-1]) / sizes
    share_low = n_low / sizes
    share_high = 1.0 - share_low
    # identical summation trees keep the ratios exact for degenerate
    # (constant-rank) responses, so T is then exactly zero
    center = float((share_low * cluster_mean_rank).sum()) / float(share_low.sum()) - float(
        (share_high * cluster_mean_rank).sum()
    ) / float(share_high.sum())
    s_low = scores[low].sum()
    w_low = w[low].sum()
    t_obs = s_low / w_low - (s_tot - s_low) / (w_tot - w_low) - center
    return t_obs, scores, w, n_low, s_tot, w_tot, center


def rank_statistic(data: ClusteredDataset, direction: str, threshold: float) -> float:
    """Centered difference of subgroup-weighted mean midranks of the response.

    Subgroups are Z <= threshold vs Z > threshold; every unit carries
    weight 1/n_i, so each cluster contributes total weight one, split
    between the subgroups by their within-cluster shares.  The raw
    group-mean difference is centered by its exact mean over uniform
    within-cluster relabellings (a permutation-invariant constant), so the
    statistic is zero in expectation under the within-cluster null.
    """
    t_obs, *_ = _rank_parts(data, direction, threshold)
    return float(t_obs)


def _pvalue_from_parts(t_obs, scores, w, starts, n_low, s_tot, w_tot, center, permutations, stream):
    gen = stream.generator()
    n = scores.shape[0]
    count = 0
    abs_obs = abs(t_obs)
    remaining = int(permutations)
    max_rows = max(1, min(remaining, 50_000_000 // max(n, 1)))
    while remaining > 0:
        rows = min(remaining, max_rows)
        keys = gen.random((rows, n))
        s_low, w_low = permuted_group_sums(scores, w, starts, n_low, keys)
        t_perm = s_low / w_low - (s_tot - s_low) / (w_tot - w_low) - center
        count += int(np.count_nonzero(np.abs(t_perm) >= abs_obs))
        remaining -= rows
    return (1.0 + count) / (permutations + 1.0)


def permutation_pvalue(
    data: ClusteredDataset,
    direction: str,
    threshold: float,
    permutations: int,
    stream: RandomStream,
) -> float:
    """Two-sided within-cluster permutation p-value of the rank statistic,
    with add-one smoothing: (1 + #{|T*| >= |T|}) / (K + 1)."""
    t_obs, scores, w, n_low, s_tot, w_tot, center = _rank_parts(data, direction, threshold)
    return _pvalue_from_parts(
        t_obs, scores, w, data.starts, n_low, s_tot, w_tot, center, permutations, stream
    )


def partition_clusters(data: ClusteredDataset, subset_size: int, stream: RandomStream) -> list:
    """Random partition of cluster positions into disjoint subsets of
    ``subset_size`` clusters (the final subset may be smaller)."""
    subset_size = int(subset_size)
    m = data.n_clusters
    if subset_size < 1:
        raise ClusterDataError("subset_size must be positive")
    if subset_size > m:
        raise ClusterDataError(f"subset_size {subset_size} exceeds the {m} available clusters")
    perm = stream.generator().permutation(m)
    return [
        np.sort(perm[i : i + subset_size])
        for i in range(0, m, subset_size)
    ]


def stouffer_combine(p_values, epsilon: float = TRUNCATION_EPS):
    """Stouffer inverse-normal combination of p-values.

    Each p is clamped to [epsilon, 1 - epsilon], transformed to
    Z = Phi^{-1}(1 - p), and the combined statistic is sum(Z) / sqrt(G)
    with p_combined = 1 - Phi(Z_combined).
    """
    p = np.asarray(list(p_values), dtype=np.float64)
    if p.size == 0:
        raise ClusterDataError("at least one p-value is required")
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise ClusterDataError("p-values must lie in [0, 1]")
    # evaluate Phi^{-1}(1 - clamp(p)) through the well-conditioned tail:
    # the clamp at 1 - epsilon is below float resolution next to 1.0
    z_scores = np.empty(p.size)
    for i, pv in enumerate(p):
        if pv <= 0.5:
            z_scores[i] = -normal_quantile(max(pv, epsilon))
        else:
            z_scores[i] = normal_quantile(max(1.0 - pv, epsilon))
    z = float(z_scores.sum() / math.sqrt(p.size))
    return z, 1.0 - normal_cdf(z)


def _component_worker(args):
    (x_sub, y_sub, starts, direction, threshold, permutations, stream) = args
    sub = ClusteredDataset(tuple(range(len(starts) - 1)), x_sub, y_sub, starts)
    try:
        p = permutation_pvalue(sub, direction, threshold, permutations, stream)
    except EstimationError as exc:
        return None, str(exc)
    return p, None


def iss_test(data: ClusteredDataset, cfg: IssConfig, threads=1) -> IssReport:
    """Run the full ISS test in one direction.

    Thresholds are taken from the config (or selected from the pooled Z
    values), clusters are partitioned into disjoint subsets, a permutation
    p-value is computed for every (threshold, subset) component, and all
    component p-values are pooled into a single Stouffer combination.
    Components where a threshold empties one subgroup of a subset are
    skipped and recorded.
    """
    z_all, _ = _direction_arrays(data, cfg.direction)
    root = RandomStream(cfg.seed).child(_DIRECTIONS.index(cfg.direction))
    if isinstance(cfg.thresholds, int):
        thresholds = tuple(select_thresholds(z_all, cfg.thresholds))
    else:
        thresholds = tuple(cfg.thresholds)
    if cfg.subset_size is None:
        subsets = [np.arange(data.n_clusters, dtype=np.int64)]
    else:
        subsets = partition_clusters(data, cfg.subset_size, root.child(0))

    tasks = []
    for si, positions in enumerate(subsets):
        sub = data.subset(positions)
        for ti, thr in enumerate(thresholds):
            tasks.append(
                (
                    sub.x,
                    sub.y,
                    sub.starts,
                    cfg.direction,
                    thr,
                    cfg.permutations,
                    root.child(1 + ti, si),
                )
            )
    results = parallel_map(_component_worker, tasks, threads=threads)

    components = []
    kept = []
    idx = 0
    for si, positions in enumerate(subsets):
        for thr in thresholds:
            p, reason = results[idx]
            idx += 1
            if p is None:
                components.append(
                    IssComponent(cfg.direction, thr, si, len(positions), None, True, reason)
                )
            else:
                components.append(
                    IssComponent(cfg.direction, thr, si, len(positions), p)
                )
                kept.append(p)
    if not kept:
        raise EstimationError("every (threshold, subset) component was degenerate")
    z, p = stouffer_combine(kept, cfg.epsilon)
    return IssReport(
        direction=cfg.direction,
        thresholds=thresholds,
        n_subsets=len(subsets),
        components=tuple(components),
        n_combined=len(kept),
        n_skipped=len(components) - len(kept),
        z_stouffer=z,
        p_stouffer=p,
    )
