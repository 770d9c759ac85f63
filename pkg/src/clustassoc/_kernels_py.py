"""Pure-numpy implementations of the hot kernels.

The compiled extension ``clustassoc._kernels`` exposes the same four
functions with identical semantics; ``clustassoc._backend`` picks
whichever is available at import time.  Every function is pure and does
no random number generation, so results do not depend on the backend
beyond floating-point summation order.

Cluster layout convention: unit arrays are cluster-contiguous and
``starts`` holds the C+1 segment boundaries (``starts[0] == 0``,
``starts[-1] == n_units``).
"""

from __future__ import annotations

import numpy as np


def _check_starts(starts, n):
    starts = np.ascontiguousarray(starts, dtype=np.int64)
    if starts.ndim != 1 or starts.shape[0] < 2 or starts[0] != 0 or starts[-1] != n:
        raise ValueError("starts must be [0, ..., n_units] segment boundaries")
    return starts


def cluster_multiplicities(codes, starts):
    """Per-unit same-code multiplicity within its cluster, plus per-cluster
    distinct-code counts.

    codes : int64[n] non-negative category codes
    returns (mult int64[n], distinct int64[n_clusters])
    """
    codes = np.ascontiguousarray(codes, dtype=np.int64)
    n = codes.shape[0]
    starts = _check_starts(starts, n)
    c = starts.shape[0] - 1
    sizes = np.diff(starts)
    cidx = np.repeat(np.arange(c, dtype=np.int64), sizes)
    base = int(codes.max()) + 1 if n else 1
    key = cidx * base + codes
    uniq, inv, counts = np.unique(key, return_inverse=True, return_counts=True)
    mult = counts[inv].astype(np.int64)
    distinct = np.bincount(uniq // base, minlength=c).astype(np.int64)
    return mult, distinct


def cluster_weighted_sums(a, b, w, starts):
    """Per-cluster weighted sums used by the moment + sandwich estimator.

    Returns ``(wsum[c], fsums[c, 5])`` where the feature columns are
    ``w*a, w*b, w*a*b, w*a*a, w*b*b`` summed within each cluster.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    n = a.shape[0]
    starts = _check_starts(starts, n)
    lo = starts[:-1]
    wa = w * a
    wb = w * b
    wsum = np.add.reduceat(w, lo)
    fsums = np.stack(
        [
            np.add.reduceat(wa, lo),
            np.add.reduceat(wb, lo),
            np.add.reduceat(wa * b, lo),
            np.add.reduceat(wa * a, lo),
            np.add.reduceat(wb * b, lo),
        ],
        axis=1,
    )
    return wsum, fsums


def weighted_midranks(values, weights):
    """Midranks of ``values`` under the weighted ECDF, on the [0, 1] scale.

    The midrank of v is (F(v) + F(v-)) / 2 where F is the weighted ECDF;
    tied values share one midrank.
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    sv = values[order]
    sw = weights[order]
    cw = np.cumsum(sw)
    total = cw[-1]
    left = np.searchsorted(sv, sv, side="left")
    right = np.searchsorted(sv, sv, side="right")
    cum_before = np.where(left > 0, cw[np.maximum(left - 1, 0)], 0.0)
    cum_incl = cw[right - 1]
    ranks_sorted = (cum_before + cum_incl) / (2.0 * total)
    out = np.empty_like(ranks_sorted)
    out[order] = ranks_sorted
    return out


def permuted_group_sums(scores, weights, starts, n_low, keys):
    """Group sums for within-cluster permutations encoded by random keys.

    For each row k of ``keys`` the low group of cluster c consists of the
    ``n_low[c]`` units with the smallest keys in that segment (uniform keys
    make this a uniform within-cluster relabelling).  Returns the per-row
    sums of ``scores`` and ``weights`` over the low group.
    """
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    keys = np.ascontiguousarray(keys, dtype=np.float64)
    n = scores.shape[0]
    starts = _check_starts(starts, n)
    n_low = np.ascontiguousarray(n_low, dtype=np.int64)
    c = starts.shape[0] - 1
    sizes = np.diff(starts)
    if np.any(n_low < 0) or np.any(n_low > sizes):
        raise ValueError("n_low must satisfy 0 <= n_low <= cluster size")
    cidx = np.repeat(np.arange(c, dtype=np.int64), sizes)
    pos_in_seg = np.arange(n, dtype=np.int64) - np.repeat(starts[:-1], sizes)
    sel_mask = pos_in_seg < np.repeat(n_low, sizes)
    k = keys.shape[0]
    s_low = np.empty(k, dtype=np.float64)
    w_low = np.empty(k, dtype=np.float64)
    for i in range(k):
        order = np.lexsort((keys[i], cidx))
        chosen = order[sel_mask]
        s_low[i] = scores[chosen].sum()
        w_low[i] = weights[chosen].sum()
    return s_low, w_low
