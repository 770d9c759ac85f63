"""Clustered paired observations, categorization rules, and the per-cluster
category counts that drive the weight schemes.

A dataset is a list of clusters; each cluster holds paired units (x, y).
Categorization maps each margin to ordinal categories, either through
explicit per-unit labels or through sorted thresholds with the
left-closed/right-open convention: category h covers [t_{h-1}, t_h).
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from ._backend import cluster_multiplicities
from .errors import ClusterDataError


def _as_float_units(name, values):
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ClusterDataError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise ClusterDataError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True, eq=False)
class ClusteredDataset:
    """Paired observations grouped into clusters.

    ``x`` and ``y`` are unit-level arrays laid out cluster-contiguously;
    ``starts`` holds the C+1 segment boundaries.  Instances are immutable
    after construction and safe to share across threads.
    """

    cluster_ids: tuple
    x: np.ndarray
    y: np.ndarray
    starts: np.ndarray

    def __post_init__(self):
        ids = tuple(self.cluster_ids)
        if len(set(ids)) != len(ids):
            raise ClusterDataError("cluster ids must be unique")
        if not ids:
            raise ClusterDataError("dataset must contain at least one cluster")
        starts = np.ascontiguousarray(self.starts, dtype=np.int64)
        if starts.ndim != 1 or starts.shape[0] != len(ids) + 1 or starts[0] != 0:
            raise ClusterDataError("starts must have one boundary per cluster plus the end")
        if np.any(np.diff(starts) < 1):
            raise ClusterDataError("every cluster must contain at least one unit")
        x = _as_float_units("x", self.x)
        y = _as_float_units("y", self.y)
        if x.shape[0] != starts[-1] or y.shape[0] != starts[-1]:
            raise ClusterDataError("x/y length must match the unit count implied by starts")
        for arr in (x, y, starts):
            arr.flags.writeable = False
        object.__setattr__(self, "cluster_ids", ids)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "starts", starts)

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_ids)

    @property
    def n_units(self) -> int:
        return int(self.starts[-1])

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.starts)

    def cluster_index(self) -> np.ndarray:
        """Per-unit index of the containing cluster."""
        return np.repeat(np.arange(self.n_clusters, dtype=np.int64), self.sizes)

    @classmethod
    def from_clusters(cls, clusters) -> "ClusteredDataset":
        """Build from an iterable of ``(cluster_id, xs, ys)`` triples."""
        ids, xs, ys, starts = [], [], [], [0]
        for cid, cx, cy in clusters:
            cx = np.atleast_1d(np.asarray(cx, dtype=np.float64))
            cy = np.atleast_1d(np.asarray(cy, dtype=np.float64))
            if cx.shape != cy.shape:
                raise ClusterDataError(f"cluster {cid!r}: x and y lengths differ")
            ids.append(cid)
            xs.append(cx)
            ys.append(cy)
            starts.append(starts[-1] + cx.shape[0])
        if not ids:
            raise ClusterDataError("dataset must contain at least one cluster")
        return cls(tuple(ids), np.concatenate(xs), np.concatenate(ys), np.asarray(starts))

    @classmethod
    def from_records(cls, cluster_ids, x, y) -> "ClusteredDataset":
        """Build from per-unit records, grouping rows by cluster id.

        Clusters appear in first-occurrence order; within a cluster the
        record order is preserved even when its rows are interleaved with
        other clusters.
        """
        ids = list(cluster_ids)
        n = len(ids)
        if n == 0:
            raise ClusterDataError("no records")
        first: dict = {}
        ordinal = np.empty(n, dtype=np.int64)
        for i, cid in enumerate(ids):
            ordinal[i] = first.setdefault(cid, len(first))
        order = np.argsort(ordinal, kind="stable")
        x = _as_float_units("x", x)[order]
        y = _as_float_units("y", y)[order]
        counts = np.bincount(ordinal, minlength=len(first))
        starts = np.concatenate(([0], np.cumsum(counts)))
        return cls(tuple(first.keys()), x, y, starts)

    def subset(self, positions) -> "ClusteredDataset":
        """New dataset containing the clusters at the given positions."""
        positions = np.asarray(positions, dtype=np.int64)
        if positions.size == 0:
            raise ClusterDataError("subset must keep at least one cluster")
        sizes = self.sizes
        idx = np.concatenate([np.arange(self.starts[p], self.starts[p + 1]) for p in positions])
        starts = np.concatenate(([0], np.cumsum(sizes[positions])))
        ids = tuple(self.cluster_ids[p] for p in positions)
        return ClusteredDataset(ids, self.x[idx], self.y[idx], starts)


@dataclass(frozen=True)
class ThresholdRule:
    """Ordinal categorization by sorted cutpoints, left-closed/right-open."""

    thresholds: tuple

    def __post_init__(self):
        t = tuple(float(v) for v in self.thresholds)
        if len(t) == 0:
            raise ClusterDataError("at least one threshold is required")
        if any(not np.isfinite(v) for v in t):
            raise ClusterDataError("thresholds must be finite")
        if any(t[i] >= t[i + 1] for i in range(len(t) - 1)):
            raise ClusterDataError("thresholds must be strictly increasing")
        object.__setattr__(self, "thresholds", t)

    @property
    def n_levels(self) -> int:
        return len(self.thresholds) + 1

    def apply(self, data: ClusteredDataset, values: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.thresholds, values, side="right").astype(np.int64) + 1


@dataclass(frozen=True)
class LabelRule:
    """Explicit positive integer categories, one per unit.

    ``labels`` is either a flat sequence aligned with the dataset's units
    or a mapping from cluster id to that cluster's label sequence.
    """

    labels: object

    def apply(self, data: ClusteredDataset, values: np.ndarray) -> np.ndarray:
        if isinstance(self.labels, Mapping):
            parts = []
            sizes = data.sizes
            for i, cid in enumerate(data.cluster_ids):
                if cid not in self.labels:
                    raise ClusterDataError(f"label map missing cluster {cid!r}")
                lab = np.asarray(self.labels[cid])
                if lab.shape[0] != sizes[i]:
                    raise ClusterDataError(f"label map for cluster {cid!r} has wrong length")
                parts.append(lab)
            flat = np.concatenate(parts)
        else:
            flat = np.asarray(self.labels)
            if flat.ndim != 1 or flat.shape[0] != data.n_units:
                raise ClusterDataError("labels must provide one category per unit")
        if flat.dtype.kind == "f":
            if np.any(~np.isfinite(flat)) or np.any(flat != np.floor(flat)):
                raise ClusterDataError("labels must be integers with no missing values")
        try:
            out = flat.astype(np.int64)
        except (TypeError, ValueError) as exc:
            raise ClusterDataError("labels must be integers") from exc
        if np.any(out < 1):
            raise ClusterDataError("labels must be positive integers (1, ..., n_levels)")
        return np.ascontiguousarray(out)


@dataclass(frozen=True)
class Categorizer:
    """Pair of per-margin categorization rules (thresholds or labels)."""

    x_rule: object
    y_rule: object

    @classmethod
    def from_thresholds(cls, x_thresholds, y_thresholds) -> "Categorizer":
        return cls(ThresholdRule(tuple(x_thresholds)), ThresholdRule(tuple(y_thresholds)))

    @classmethod
    def from_labels(cls, x_labels, y_labels) -> "Categorizer":
        return cls(LabelRule(x_labels), LabelRule(y_labels))


@dataclass(frozen=True, eq=False)
class CategorizedDataset:
    """A clustered dataset plus per-unit categories and the count structure
    needed by the weight schemes.

    Per unit: ``x_cat``/``y_cat`` and the multiplicities ``n_same_x``
    (units of the cluster sharing the x category), ``n_same_y``, and
    ``n_same_pair`` (sharing the paired category).  Per cluster:
    ``n_cats_x``/``n_cats_y``/``n_cats_pair`` distinct observed category
    counts.  ``levels_x``/``levels_y`` are the global category counts.
    """

    base: ClusteredDataset
    x_cat: np.ndarray
    y_cat: np.ndarray
    n_same_x: np.ndarray
    n_same_y: np.ndarray
    n_same_pair: np.ndarray
    n_cats_x: np.ndarray
    n_cats_y: np.ndarray
    n_cats_pair: np.ndarray
    levels_x: int
    levels_y: int
    _weight_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def levels_pair(self) -> int:
        return self.levels_x * self.levels_y

    @property
    def starts(self) -> np.ndarray:
        return self.base.starts

    @property
    def sizes(self) -> np.ndarray:
        return self.base.sizes


def _pair_codes(x_cat, y_cat):
    span = int(y_cat.max()) + 1
    return x_cat * span + y_cat


def categorize_labels(
    data: ClusteredDataset,
    x_cat,
    y_cat,
    levels_x: int | None = None,
    levels_y: int | None = None,
) -> CategorizedDataset:
    """Categorized dataset from per-unit integer categories already in hand."""
    x_cat = LabelRule(x_cat).apply(data, data.x)
    y_cat = LabelRule(y_cat).apply(data, data.y)
    lx = int(x_cat.max()) if levels_x is None else int(levels_x)
    ly = int(y_cat.max()) if levels_y is None else int(levels_y)
    if int(x_cat.max()) > lx or int(y_cat.max()) > ly:
        raise ClusterDataError("labels exceed the declared number of levels")
    starts = data.starts
    n_same_x, n_cats_x = cluster_multiplicities(x_cat, starts)
    n_same_y, n_cats_y = cluster_multiplicities(y_cat, starts)
    n_same_pair, n_cats_pair = cluster_multiplicities(_pair_codes(x_cat, y_cat), starts)
    for arr in (x_cat, y_cat, n_same_x, n_same_y, n_same_pair, n_cats_x, n_cats_y, n_cats_pair):
        arr.flags.writeable = False
    return CategorizedDataset(
        base=data,
        x_cat=x_cat,
        y_cat=y_cat,
        n_same_x=n_same_x,
        n_same_y=n_same_y,
        n_same_pair=n_same_pair,
        n_cats_x=n_cats_x,
        n_cats_y=n_cats_y,
        n_cats_pair=n_cats_pair,
        levels_x=lx,
        levels_y=ly,
    )


def categorize(data: ClusteredDataset, categorizer: Categorizer) -> CategorizedDataset:
    """Apply a categorizer and populate all per-unit and per-cluster counts."""
    x_cat = categorizer.x_rule.apply(data, data.x)
    y_cat = categorizer.y_rule.apply(data, data.y)
    lx = categorizer.x_rule.n_levels if isinstance(categorizer.x_rule, ThresholdRule) else None
    ly = categorizer.y_rule.n_levels if isinstance(categorizer.y_rule, ThresholdRule) else None
    return categorize_labels(data, x_cat, y_cat, levels_x=lx, levels_y=ly)


def filter_min_cluster_size(data: ClusteredDataset, n_min: int) -> ClusteredDataset:
    """Keep only clusters with at least ``n_min`` units, preserving order."""
    n_min = int(n_min)
    if n_min < 1:
        raise ClusterDataError("n_min must be at least 1")
    keep = np.flatnonzero(data.sizes >= n_min)
    if keep.size == 0:
        raise ClusterDataError(f"no cluster has {n_min} or more units")
    if keep.size == data.n_clusters:
        return data
    return data.subset(keep)
