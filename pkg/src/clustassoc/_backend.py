"""Select the kernel implementation: compiled extension if available,
pure-numpy fallback otherwise."""

try:
    from . import _kernels as _impl

    BACKEND = "c"
except ImportError:  # extension not built on this install
    from . import _kernels_py as _impl

    BACKEND = "python"

cluster_multiplicities = _impl.cluster_multiplicities
cluster_weighted_sums = _impl.cluster_weighted_sums
weighted_midranks = _impl.weighted_midranks
permuted_group_sums = _impl.permuted_group_sums


def kernel_backend() -> str:
    """Name of the active kernel backend: ``"c"`` or ``"python"``."""
    return BACKEND
