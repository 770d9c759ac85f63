"""Weighted marginal association for clustered paired outcomes.

Estimates Pearson, Spearman, and phi association between paired outcomes
in clustered data under informative cluster size and informative subgroup
size, using within-cluster-resampling weight schemes (inverse cluster
size and three pair-category weights) with cluster-robust sandwich /
delta-method uncertainty.  Ships a configurable clustered-data simulator
with outcome-dependent retention and a Stouffer-combined permutation test
for informative subgroup size.
"""

__version__ = "0.1.0"

from ._backend import kernel_backend
from .association import (
    AssociationEstimate,
    MomentVector,
    correlation_functional,
    correlation_gradient,
    delta_se,
    pearson,
    phi,
    spearman,
    weighted_moments,
)
from .data import (
    Categorizer,
    CategorizedDataset,
    ClusteredDataset,
    LabelRule,
    ThresholdRule,
    categorize,
    categorize_labels,
    filter_min_cluster_size,
)
from .errors import (
    ClustAssocError,
    ClusterDataError,
    CsvFormatError,
    DegenerateVarianceError,
    EstimationError,
)
from .iss import (
    IssConfig,
    IssReport,
    iss_test,
    partition_clusters,
    permutation_pvalue,
    rank_statistic,
    select_thresholds,
    stouffer_combine,
)
from .numerics import RandomStream, bivariate_normal, logistic, normal_cdf, normal_quantile
from .simulate import (
    GeneratedCluster,
    SettingSummary,
    SimulationConfig,
    SweepCell,
    dichotomization_sweep,
    generate_cluster,
    pre_retention_correlation,
    retention_probability,
    rho_obs_pooled,
    rho_true,
    run_setting,
)
from .weights import WeightScheme, compute_weights

__all__ = [
    "__version__",
    "kernel_backend",
    "AssociationEstimate",
    "MomentVector",
    "correlation_functional",
    "correlation_gradient",
    "delta_se",
    "pearson",
    "phi",
    "spearman",
    "weighted_moments",
    "Categorizer",
    "CategorizedDataset",
    "ClusteredDataset",
    "LabelRule",
    "ThresholdRule",
    "categorize",
    "categorize_labels",
    "filter_min_cluster_size",
    "ClustAssocError",
    "ClusterDataError",
    "CsvFormatError",
    "DegenerateVarianceError",
    "EstimationError",
    "IssConfig",
    "IssReport",
    "iss_test",
    "partition_clusters",
    "permutation_pvalue",
    "rank_statistic",
    "select_thresholds",
    "stouffer_combine",
    "RandomStream",
    "bivariate_normal",
    "logistic",
    "normal_cdf",
    "normal_quantile",
    "GeneratedCluster",
    "SettingSummary",
    "SimulationConfig",
    "SweepCell",
    "dichotomization_sweep",
    "generate_cluster",
    "pre_retention_correlation",
    "retention_probability",
    "rho_obs_pooled",
    "rho_true",
    "run_setting",
    "WeightScheme",
    "compute_weights",
]
