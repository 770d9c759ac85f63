#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Runs each kernel on simulation-sized synthetic inputs and reports the
best-of-N wall time per call for both backends, plus an end-to-end
Monte Carlo replicate timing.  The compiled extension must be built
(`pip install -e . --no-build-isolation`) for the comparison column.
"""

import time

import numpy as np

from clustassoc import _kernels_py as kpy

try:
    from clustassoc import _kernels as kc
except ImportError:
    kc = None


def best_of(fn, repeats=7):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def make_inputs(n_clusters=2_000, mean_size=50, seed=0):
    rng = np.random.default_rng(seed)
    sizes = rng.integers(2, 2 * mean_size, size=n_clusters)
    starts = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
    n = int(starts[-1])
    return {
        "starts": starts,
        "codes": rng.integers(0, 25, size=n).astype(np.int64),
        "a": rng.normal(size=n),
        "b": rng.normal(size=n),
        "w": rng.uniform(0.1, 1.0, size=n),
        "n_low": (sizes // 2).astype(np.int64),
        "keys": rng.random((100, n)),
    }


def main():
    d = make_inputs()
    n = d["a"].shape[0]
    cases = [
        ("cluster_multiplicities", lambda m: m.cluster_multiplicities(d["codes"], d["starts"])),
        ("cluster_weighted_sums", lambda m: m.cluster_weighted_sums(d["a"], d["b"], d["w"], d["starts"])),
        ("weighted_midranks", lambda m: m.weighted_midranks(d["a"], d["w"])),
        (
            "permuted_group_sums(K=100)",
            lambda m: m.permuted_group_sums(d["a"], d["w"], d["starts"], d["n_low"], d["keys"]),
        ),
    ]
    print(f"synthetic data: {len(d['starts']) - 1} clusters, {n} units\n")
    print(f"{'kernel':<28} {'numpy':>10} {'compiled':>10} {'speedup':>8}")
    for name, call in cases:
        t_py = best_of(lambda: call(kpy))
        if kc is None:
            print(f"{name:<28} {t_py * 1e3:9.2f}ms {'n/a':>10} {'-':>8}")
            continue
        t_c = best_of(lambda: call(kc))
        print(f"{name:<28} {t_py * 1e3:9.2f}ms {t_c * 1e3:9.2f}ms {t_py / t_c:7.1f}x")

    from clustassoc import SimulationConfig, WeightScheme, kernel_backend, run_setting

    cfg = SimulationConfig(m=100, rho_uv=0.5, q=20, seed=0)
    t = best_of(lambda: run_setting(cfg, measures=("pearson", "spearman"), schemes=(WeightScheme.CW, WeightScheme.PPW)), repeats=3)
    print(f"\nrun_setting (m=100, q=20, 2 measures x 2 schemes, backend={kernel_backend()}): {t:.2f}s")


if __name__ == "__main__":
    main()
