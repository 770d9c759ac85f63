"""Clustered paired-outcome simulator with outcome-dependent retention,
closed-form and pooled correlation targets, Monte Carlo setting runs, and
the dichotomization sweep.

Generative model per cluster: latent (U, V) bivariate normal; given
(U, V), n_max potential unit pairs (X, Y) bivariate normal around
(alpha_x + beta_x U, alpha_y + beta_y V).  Each margin is standardized by
its unconditional moments and cut at equally spaced standard normal
quantiles into ordinal categories.  A unit is retained with probability
min(logistic(eta_0 + eta_x X), logistic(eta_0 + eta_y Y)); clusters enter
the analysis only when at least ``n_min`` units are retained.
"""

from __future__ import annotations

import functools
import hashlib
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from ._parallel import parallel_map
from .association import Z_975, pearson, phi, spearman
from .data import ClusteredDataset, categorize_labels
from .errors import ClusterDataError, DegenerateVarianceError, EstimationError
from .numerics import RandomStream, bivariate_normal, logistic, normal_quantile
from .weights import WeightScheme

DEFAULT_MEASURES = ("pearson", "spearman", "phi")
DEFAULT_SCHEMES = (WeightScheme.CW, WeightScheme.PPW, WeightScheme.OPW, WeightScheme.MOPW)


@functools.lru_cache(maxsize=64)
def _quantile_cuts(n_levels: int) -> np.ndarray:
    cuts = np.array([normal_quantile(h / n_levels) for h in range(1, n_levels)])
    cuts.flags.writeable = False
    return cuts


@dataclass(frozen=True)
class SimulationConfig:
    """Full parameterization of one simulation setting.

    Defaults are the fixed-parameter values of the reference study design;
    m, rho_uv, rho_xy, eta_x, eta_y are the varied factors.
    """

    m: int = 100                 # clusters per replicate
    mu_u: float = 0.0            # latent means
    mu_v: float = 0.0
    sigma_u: float = 1.0         # latent standard deviations
    sigma_v: float = 1.0
    rho_uv: float = 0.0          # latent (cluster-level) correlation
    alpha_x: float = 0.0         # outcome intercepts
    alpha_y: float = 0.0
    beta_x: float = 1.0          # latent loadings
    beta_y: float = 1.0
    sigma_x: float = 0.5         # unit-level residual standard deviations
    sigma_y: float = 0.5
    rho_xy: float = 0.0          # unit-level residual correlation
    n_cats_x: int = 5            # ordinal category counts per margin
    n_cats_y: int = 5
    eta_0: float = 3.0           # retention intercept
    eta_x: float = 0.0           # retention dependence on each margin
    eta_y: float = 0.0
    n_max: int = 100             # potential units per cluster
    n_min: int = 2               # minimum retained size for analysis
    q: int = 10_000              # Monte Carlo replicates
    seed: int = 1729

    def __post_init__(self):
        if self.m < 1 or self.n_max < 1 or self.q < 1:
            raise ClusterDataError("m, n_max, and q must be positive")
        if self.n_min < 1 or self.n_min > self.n_max:
            raise ClusterDataError("need 1 <= n_min <= n_max")
        if self.sigma_u <= 0 or self.sigma_v <= 0 or self.sigma_x <= 0 or self.sigma_y <= 0:
            raise ClusterDataError("standard deviations must be positive")
        if abs(self.rho_uv) > 1 or abs(self.rho_xy) > 1:
            raise ClusterDataError("correlations must lie in [-1, 1]")
        if self.n_cats_x < 1 or self.n_cats_y < 1:
            raise ClusterDataError("category counts must be at least 1")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ClusterDataError("seed must be a non-negative integer")

    def x_moments(self):
        """Unconditional (mean, sd) of the X margin."""
        return (
            self.alpha_x + self.beta_x * self.mu_u,
            math.sqrt(self.beta_x**2 * self.sigma_u**2 + self.sigma_x**2),
        )

    def y_moments(self):
        return (
            self.alpha_y + self.beta_y * self.mu_v,
            math.sqrt(self.beta_y**2 * self.sigma_v**2 + self.sigma_y**2),
        )

    def cutpoints_x(self):
        return _quantile_cuts(self.n_cats_x)

    def cutpoints_y(self):
        return _quantile_cuts(self.n_cats_y)

    def setting_key(self) -> int:
        """Stable integer identifying the generative setting (everything
        except q and seed), used to derive replicate substreams."""
        gen_fields = [
            f.name for f in fields(self) if f.name not in ("q", "seed")
        ]
        blob = ",".join(f"{name}={getattr(self, name)!r}" for name in gen_fields)
        digest = hashlib.sha256(blob.encode()).digest()
        return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class GeneratedCluster:
    """One simulated cluster: latents, potential units, categories,
    retention flags."""

    u: float
    v: float
    x: np.ndarray
    y: np.ndarray
    x_std: np.ndarray
    y_std: np.ndarray
    x_cat: np.ndarray
    y_cat: np.ndarray
    retained: np.ndarray

    @property
    def n_observed(self) -> int:
        return int(self.retained.sum())


def retention_probability(x, y, cfg: SimulationConfig):
    """Retention probability min(logistic(eta_0 + eta_x x), logistic(eta_0 + eta_y y))."""
    px = logistic(cfg.eta_0 + cfg.eta_x * np.asarray(x, dtype=np.float64))
    py = logistic(cfg.eta_0 + cfg.eta_y * np.asarray(y, dtype=np.float64))
    out = np.minimum(px, py)
    if np.ndim(x) == 0 and np.ndim(y) == 0:
        return float(out)
    return out


def generate_cluster(cfg: SimulationConfig, stream: RandomStream) -> GeneratedCluster:
    """Draw one full cluster (latents, n_max potential units, categories,
    retention flags) from its own random stream."""
    gen = stream.generator()
    u, v = bivariate_normal((cfg.mu_u, cfg.mu_v), (cfg.sigma_u, cfg.sigma_v), cfg.rho_uv, gen)
    x, y = bivariate_normal(
        (cfg.alpha_x + cfg.beta_x * u, cfg.alpha_y + cfg.beta_y * v),
        (cfg.sigma_x, cfg.sigma_y),
        cfg.rho_xy,
        gen,
        size=cfg.n_max,
    )
    mx, sx = cfg.x_moments()
    my, sy = cfg.y_moments()
    x_std = (x - mx) / sx
    y_std = (y - my) / sy
    x_cat = np.searchsorted(cfg.cutpoints_x(), x_std, side="right").astype(np.int64) + 1
    y_cat = np.searchsorted(cfg.cutpoints_y(), y_std, side="right").astype(np.int64) + 1
    keep_prob = retention_probability(x, y, cfg)
    retained = gen.random(cfg.n_max) < keep_prob
    return GeneratedCluster(u, v, x, y, x_std, y_std, x_cat, y_cat, retained)


def rho_true(cfg: SimulationConfig) -> float:
    """Closed-form marginal correlation of (X, Y) under the full model."""
    cov = cfg.beta_x * cfg.beta_y * cfg.rho_uv * cfg.sigma_u * cfg.sigma_v + cfg.rho_xy * cfg.sigma_x * cfg.sigma_y
    _, sx = cfg.x_moments()
    _, sy = cfg.y_moments()
    return cov / (sx * sy)


class _PooledSums:
    """Streaming sums for the pooled Pearson correlation of retained units."""

    __slots__ = ("n", "sx", "sy", "sxx", "syy", "sxy")

    def __init__(self):
        self.n = 0
        self.sx = self.sy = self.sxx = self.syy = self.sxy = 0.0

    def add_arrays(self, x, y):
        self.n += x.shape[0]
        self.sx += float(x.sum())
        self.sy += float(y.sum())
        self.sxx += float((x * x).sum())
        self.syy += float((y * y).sum())
        self.sxy += float((x * y).sum())

    def add(self, other: "_PooledSums"):
        self.n += other.n
        self.sx += other.sx
        self.sy += other.sy
        self.sxx += other.sxx
        self.syy += other.syy
        self.sxy += other.sxy

    def correlation(self) -> float:
        if self.n < 2:
            raise EstimationError("need at least two pooled units for the observed-data target")
        n = float(self.n)
        vx = self.sxx / n - (self.sx / n) ** 2
        vy = self.syy / n - (self.sy / n) ** 2
        if vx <= 0 or vy <= 0:
            raise DegenerateVarianceError("pooled margins are constant")
        return (self.sxy / n - (self.sx / n) * (self.sy / n)) / math.sqrt(vx * vy)


def rho_obs_pooled(clusters, cfg: SimulationConfig) -> float:
    """Ordinary Pearson correlation of retained units pooled over all
    generated clusters, restricted to clusters meeting the n_min rule."""
    sums = _PooledSums()
    for cl in clusters:
        if cl.n_observed >= cfg.n_min:
            sums.add_arrays(cl.x[cl.retained], cl.y[cl.retained])
    return sums.correlation()


def pre_retention_correlation(
    cfg: SimulationConfig,
    n_clusters: int,
    stream: RandomStream,
    units_per_cluster: int | None = None,
    chunk_clusters: int = 20_000,
) -> float:
    """Monte Carlo pooled Pearson correlation of pre-retention units.

    Batched across clusters (one stream) for target-validation runs that
    need millions of units.
    """
    n_units = cfg.n_max if units_per_cluster is None else int(units_per_cluster)
    gen = stream.generator()
    sums = _PooledSums()
    done = 0
    cx = math.sqrt(max(0.0, 1.0 - cfg.rho_uv**2))
    cr = math.sqrt(max(0.0, 1.0 - cfg.rho_xy**2))
    while done < n_clusters:
        m = min(chunk_clusters, n_clusters - done)
        z = gen.standard_normal((2, m))
        u = cfg.mu_u + cfg.sigma_u * z[0]
        v = cfg.mu_v + cfg.sigma_v * (cfg.rho_uv * z[0] + cx * z[1])
        zx = gen.standard_normal((m, n_units))
        zr = gen.standard_normal((m, n_units))
        x = cfg.alpha_x + cfg.beta_x * u[:, None] + cfg.sigma_x * zx
        y = cfg.alpha_y + cfg.beta_y * v[:, None] + cfg.sigma_y * (cfg.rho_xy * zx + cr * zr)
        sums.add_arrays(x.ravel(), y.ravel())
        done += m
    return sums.correlation()


@dataclass(frozen=True)
class EstimatorSummary:
    measure: str
    scheme: WeightScheme
    mean_estimate: float
    coverage_true: float
    coverage_obs: float
    n_replicates_used: int
    n_degenerate: int


@dataclass(frozen=True)
class SettingSummary:
    config: SimulationConfig
    rho_true: float
    rho_obs: float
    cells: tuple


def _replicate_arrays(cfg: SimulationConfig, rep_stream: RandomStream):
    """Generate one replicate and return the retained, eligible clusters as
    flat arrays plus the pooled sums contribution."""
    xs, ys, kc, lc, sizes = [], [], [], [], []
    sums = _PooledSums()
    for i in range(cfg.m):
        cl = generate_cluster(cfg, rep_stream.child(i))
        n_obs = cl.n_observed
        if n_obs >= cfg.n_min:
            r = cl.retained
            xs.append(cl.x[r])
            ys.append(cl.y[r])
            kc.append(cl.x_cat[r])
            lc.append(cl.y_cat[r])
            sizes.append(n_obs)
            sums.add_arrays(cl.x[r], cl.y[r])
    if not xs:
        return None, sums
    starts = np.concatenate(([0], np.cumsum(sizes)))
    base = ClusteredDataset(
        tuple(range(len(sizes))), np.concatenate(xs), np.concatenate(ys), starts
    )
    cdata = categorize_labels(
        base, np.concatenate(kc), np.concatenate(lc), cfg.n_cats_x, cfg.n_cats_y
    )
    return cdata, sums


def _estimate_cell(cdata, measure, scheme, cfg):
    if measure == "pearson":
        return pearson(cdata, scheme, min_cluster_size=cfg.n_min)
    if measure == "spearman":
        return spearman(cdata, scheme, min_cluster_size=cfg.n_min)
    if measure == "phi":
        mx, _ = cfg.x_moments()
        my, _ = cfg.y_moments()
        return phi(cdata, scheme, mx, my, min_cluster_size=cfg.n_min)
    raise ClusterDataError(f"unknown measure {measure!r}")


def _run_replicate(cfg, measures, schemes, rep_index):
    rep_stream = RandomStream(cfg.seed).child(cfg.setting_key(), rep_index)
    cdata, sums = _replicate_arrays(cfg, rep_stream)
    results = {}
    for measure in measures:
        for scheme in schemes:
            if cdata is None:
                results[(measure, scheme)] = None
                continue
            try:
                est = _estimate_cell(cdata, measure, scheme, cfg)
            except EstimationError:
                results[(measure, scheme)] = None
            else:
                results[(measure, scheme)] = (est.rho_hat, est.se)
    return results, sums


def run_setting(
    cfg: SimulationConfig,
    measures=DEFAULT_MEASURES,
    schemes=DEFAULT_SCHEMES,
    threads=1,
) -> SettingSummary:
    """Run one Monte Carlo setting and summarize every (measure, scheme).

    Per replicate: generate m clusters, apply retention and the n_min
    rule, estimate each (measure, scheme) with its confidence interval.
    The summary reports the mean estimate and the empirical coverage of
    both the closed-form full-data target and the pooled observed-data
    target.  Replicates where an estimator is degenerate are dropped from
    that estimator's summary and counted.  For the phi measure the margins
    are dichotomized at their population medians while weights keep the
    full ordinal categories.
    """
    measures = tuple(measures)
    schemes = tuple(schemes)
    worker = functools.partial(_run_replicate, cfg, measures, schemes)
    outcomes = parallel_map(worker, range(cfg.q), threads=threads)

    pooled = _PooledSums()
    for _, sums in outcomes:
        pooled.add(sums)
    target_obs = pooled.correlation()
    target_true = rho_true(cfg)

    cells = []
    for measure in measures:
        for scheme in schemes:
            vals = [res[(measure, scheme)] for res, _ in outcomes]
            used = [v for v in vals if v is not None]
            n_bad = len(vals) - len(used)
            if not used:
                raise EstimationError(
                    f"all {cfg.q} replicates degenerate for {measure}/{scheme.value}"
                )
            rho = np.array([v[0] for v in used])
            se = np.array([v[1] for v in used])
            lo = rho - Z_975 * se
            hi = rho + Z_975 * se
            cells.append(
                EstimatorSummary(
                    measure=measure,
                    scheme=scheme,
                    mean_estimate=float(rho.mean()),
                    coverage_true=float(np.mean((lo <= target_true) & (target_true <= hi))),
                    coverage_obs=float(np.mean((lo <= target_obs) & (target_obs <= hi))),
                    n_replicates_used=len(used),
                    n_degenerate=n_bad,
                )
            )
    return SettingSummary(cfg, target_true, target_obs, tuple(cells))


# ---------------------------------------------------------------------------
# Dichotomization sweep


def split_label(split, n_levels: int) -> str:
    """Human-readable label for a two-block split (None means keep all levels)."""
    if split is None:
        return "severity"
    k = int(split)
    left = "1" if k == 1 else f"1-{k}"
    right = f"{k + 1}" if k + 1 == n_levels else f"{k + 1}-{n_levels}"
    return f"{left}|{right}"


def parse_split(token: str, n_levels: int):
    """Parse a split token: ``severity``, a bare cut index k, or ``1-k|k+1-N``."""
    tok = token.strip().lower()
    if tok == "severity":
        return None
    if "|" in tok:
        left, right = tok.split("|", 1)

        def block(part):
            bits = part.split("-")
            if len(bits) == 1:
                return int(bits[0]), int(bits[0])
            if len(bits) == 2:
                return int(bits[0]), int(bits[1])
            raise ClusterDataError(f"bad split block {part!r}")

        l0, l1 = block(left)
        r0, r1 = block(right)
        if l0 != 1 or r1 != n_levels or r0 != l1 + 1 or not 1 <= l1 < n_levels:
            raise ClusterDataError(
                f"split {token!r} must partition 1..{n_levels} into two contiguous blocks"
            )
        return l1
    k = int(tok)
    if not 1 <= k < n_levels:
        raise ClusterDataError(f"split cut {k} out of range 1..{n_levels - 1}")
    return k


@dataclass(frozen=True)
class SweepCell:
    x_split: object
    y_split: object
    scheme: WeightScheme
    mean_abs_bias: float | None
    mc_se: float | None
    n_replicates_used: int
    n_failed: int


def _split_categories(cats, split):
    if split is None:
        return cats
    return np.where(cats <= split, 1, 2).astype(np.int64)


def _sweep_replicate(cfg, measure, schemes, x_splits, y_splits, rep_index):
    rep_stream = RandomStream(cfg.seed).child(cfg.setting_key(), rep_index)
    cdata, _ = _replicate_arrays(cfg, rep_stream)
    target = rho_true(cfg)
    mx, sx = cfg.x_moments()
    my, sy = cfg.y_moments()
    out = {}
    flat = {}
    for scheme in schemes:
        split_free = scheme in (WeightScheme.NONE, WeightScheme.CW)
        for xs in x_splits:
            for ys in y_splits:
                key = (xs, ys, scheme)
                if cdata is None:
                    out[key] = None
                    continue
                if measure == "phi" and (xs is None or ys is None):
                    out[key] = None
                    continue
                cache_key = None
                if split_free and measure in ("pearson", "spearman"):
                    cache_key = ("free", scheme)
                elif split_free and measure == "phi":
                    cache_key = ("free-phi", scheme, xs, ys)
                if cache_key is not None and cache_key in flat:
                    out[key] = flat[cache_key]
                    continue
                base = cdata.base
                cell_data = cdata
                if not split_free:
                    cell_data = categorize_labels(
                        base,
                        _split_categories(cdata.x_cat, xs),
                        _split_categories(cdata.y_cat, ys),
                    )
                try:
                    if measure == "pearson":
                        est = pearson(cell_data, scheme, min_cluster_size=cfg.n_min)
                    elif measure == "spearman":
                        est = spearman(cell_data, scheme, min_cluster_size=cfg.n_min)
                    else:
                        tx = mx + sx * normal_quantile(xs / cfg.n_cats_x)
                        ty = my + sy * normal_quantile(ys / cfg.n_cats_y)
                        est = phi(cell_data, scheme, tx, ty, min_cluster_size=cfg.n_min)
                except EstimationError:
                    val = None
                else:
                    val = abs(est.rho_hat - target)
                out[key] = val
                if cache_key is not None:
                    flat[cache_key] = val
    return out


def dichotomization_sweep(
    cfg: SimulationConfig,
    measure: str,
    schemes=DEFAULT_SCHEMES,
    x_splits=None,
    y_splits=None,
    threads=1,
) -> tuple:
    """Monte Carlo mean absolute bias |rho_hat - rho_true| over a grid of
    two-block categorizations of each margin (plus the full ordinal
    "severity" option), one cell per (x_split, y_split, scheme).

    Schemes that ignore categorization (none, cw) produce identical values
    in every cell by construction.  Cells where the estimator fails in
    every replicate are reported with missing values.
    """
    if measure not in DEFAULT_MEASURES:
        raise ClusterDataError(f"unknown measure {measure!r}")
    if x_splits is None:
        x_splits = tuple(range(1, cfg.n_cats_x)) + (None,)
    if y_splits is None:
        y_splits = tuple(range(1, cfg.n_cats_y)) + (None,)
    x_splits = tuple(x_splits)
    y_splits = tuple(y_splits)
    for s in x_splits:
        if s is not None and not 1 <= int(s) < cfg.n_cats_x:
            raise ClusterDataError(f"x split {s!r} out of range")
    for s in y_splits:
        if s is not None and not 1 <= int(s) < cfg.n_cats_y:
            raise ClusterDataError(f"y split {s!r} out of range")
    schemes = tuple(schemes)
    worker = functools.partial(_sweep_replicate, cfg, measure, schemes, x_splits, y_splits)
    per_rep = parallel_map(worker, range(cfg.q), threads=threads)

    cells = []
    for xs in x_splits:
        for ys in y_splits:
            for scheme in schemes:
                vals = [rep[(xs, ys, scheme)] for rep in per_rep]
                used = np.array([v for v in vals if v is not None])
                n_failed = len(vals) - used.size
                if used.size == 0:
                    cells.append(SweepCell(xs, ys, scheme, None, None, 0, n_failed))
                    continue
                mc_se = float(used.std(ddof=1) / math.sqrt(used.size)) if used.size > 1 else 0.0
                cells.append(
                    SweepCell(xs, ys, scheme, float(used.mean()), mc_se, int(used.size), n_failed)
                )
    return tuple(cells)


def table1_grid(base: SimulationConfig) -> tuple:
    """The full factorial of the varied study parameters, all other fields
    taken from ``base``."""
    settings = []
    for m in (20, 100):
        for rho_xy in (0.0, 0.5):
            for rho_uv in (0.0, 0.5):
                for eta_x in (0.0, 4.0):
                    for eta_y in (0.0, 4.0):
                        settings.append(
                            replace(base, m=m, rho_xy=rho_xy, rho_uv=rho_uv, eta_x=eta_x, eta_y=eta_y)
                        )
    return tuple(settings)
