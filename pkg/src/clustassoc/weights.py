"""Per-unit weight schemes derived from within-cluster resampling.

Schemes
-------
none  : unweighted (every unit weight 1)
cw    : inverse cluster size, 1 / n_i
ppw   : population pair weight, 1 / n_same_pair (the constant factor from
        the global pair-category count cancels from the estimating
        equation and is dropped)
opw   : observed pair weight, 1 / (n_cats_pair * n_same_pair)
mopw  : marginally observed pair weight,
        1 / (n_cats_x * n_cats_y * n_same_pair)

cw/none need only cluster sizes; the pair-based schemes require a
categorized dataset.  Weights are cached per (dataset, scheme), keyed by
the categorized dataset instance, so dichotomization sweeps that build
many categorizations pay for each weight vector once.
"""

from __future__ import annotations

import enum

import numpy as np

from .data import CategorizedDataset, ClusteredDataset
from .errors import ClusterDataError


class WeightScheme(enum.Enum):
    NONE = "none"
    CW = "cw"
    PPW = "ppw"
    OPW = "opw"
    MOPW = "mopw"

    @classmethod
    def parse(cls, token: str) -> "WeightScheme":
        try:
            return cls(token.strip().lower())
        except ValueError:
            valid = ", ".join(s.value for s in cls)
            raise ClusterDataError(f"unknown weight scheme {token!r} (expected one of: {valid})") from None


PAIR_SCHEMES = (WeightScheme.PPW, WeightScheme.OPW, WeightScheme.MOPW)
ALL_SCHEMES = tuple(WeightScheme)


def parse_schemes(tokens: str) -> tuple:
    """Parse a comma-separated scheme list, preserving order, dropping dups."""
    out = []
    for tok in tokens.split(","):
        scheme = WeightScheme.parse(tok)
        if scheme not in out:
            out.append(scheme)
    if not out:
        raise ClusterDataError("at least one weight scheme is required")
    return tuple(out)


def _compute(data, scheme: WeightScheme) -> np.ndarray:
    if isinstance(data, CategorizedDataset):
        base = data.base
    else:
        base = data
    if scheme is WeightScheme.NONE:
        return np.ones(base.n_units, dtype=np.float64)
    if scheme is WeightScheme.CW:
        return np.repeat(1.0 / base.sizes.astype(np.float64), base.sizes)
    if not isinstance(data, CategorizedDataset):
        raise ClusterDataError(f"{scheme.value} weights require a categorized dataset")
    pair_mult = data.n_same_pair.astype(np.float64)
    if scheme is WeightScheme.PPW:
        return 1.0 / pair_mult
    if scheme is WeightScheme.OPW:
        per_unit_cats = np.repeat(data.n_cats_pair, data.sizes).astype(np.float64)
        return 1.0 / (per_unit_cats * pair_mult)
    if scheme is WeightScheme.MOPW:
        cross = (data.n_cats_x * data.n_cats_y).astype(np.float64)
        return 1.0 / (np.repeat(cross, data.sizes) * pair_mult)
    raise ClusterDataError(f"unsupported scheme {scheme!r}")


def compute_weights(data, scheme: WeightScheme) -> np.ndarray:
    """Per-unit weights for a scheme, aligned with the dataset's units.

    ``data`` may be a ClusteredDataset for none/cw; the pair-based schemes
    require a CategorizedDataset.  The returned array is read-only.
    """
    if not isinstance(data, (ClusteredDataset, CategorizedDataset)):
        raise ClusterDataError("data must be a ClusteredDataset or CategorizedDataset")
    cache = data._weight_cache if isinstance(data, CategorizedDataset) else None
    if cache is not None and scheme in cache:
        return cache[scheme]
    w = _compute(data, scheme)
    w.flags.writeable = False
    if cache is not None:
        cache[scheme] = w
    return w
