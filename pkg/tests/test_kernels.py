"""Backend equivalence: the compiled kernels must match the pure-numpy
reference on random inputs."""

import numpy as np
import pytest

from clustassoc import _kernels_py as kpy

kc = pytest.importorskip("clustassoc._kernels")


def random_layout(rng, n_clusters=20, max_size=40):
    sizes = rng.integers(1, max_size + 1, size=n_clusters)
    starts = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
    return starts, int(starts[-1])


@pytest.mark.parametrize("seed", range(5))
def test_cluster_multiplicities_agree(seed):
    rng = np.random.default_rng(seed)
    starts, n = random_layout(rng)
    codes = rng.integers(0, 7, size=n).astype(np.int64)
    m1, d1 = kpy.cluster_multiplicities(codes, starts)
    m2, d2 = kc.cluster_multiplicities(codes, starts)
    assert np.array_equal(m1, m2)
    assert np.array_equal(d1, d2)


@pytest.mark.parametrize("seed", range(5))
def test_cluster_weighted_sums_agree(seed):
    rng = np.random.default_rng(seed)
    starts, n = random_layout(rng)
    a, b = rng.normal(size=(2, n))
    w = rng.uniform(0.01, 3.0, size=n)
    w1, f1 = kpy.cluster_weighted_sums(a, b, w, starts)
    w2, f2 = kc.cluster_weighted_sums(a, b, w, starts)
    np.testing.assert_allclose(w1, w2, rtol=1e-13, atol=0)
    np.testing.assert_allclose(f1, f2, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_weighted_midranks_agree_bitwise(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 800))
    v = np.round(rng.normal(size=n), 1)  # plenty of ties
    w = rng.uniform(0.01, 2.0, size=n)
    assert np.array_equal(kpy.weighted_midranks(v, w), kc.weighted_midranks(v, w))


@pytest.mark.parametrize("seed", range(5))
def test_permuted_group_sums_agree(seed):
    rng = np.random.default_rng(seed)
    starts, n = random_layout(rng, n_clusters=12, max_size=25)
    sizes = np.diff(starts)
    scores = rng.normal(size=n)
    weights = rng.uniform(0.1, 1.0, size=n)
    n_low = np.array([rng.integers(0, s + 1) for s in sizes], dtype=np.int64)
    keys = rng.random((64, n))
    s1, w1 = kpy.permuted_group_sums(scores, weights, starts, n_low, keys)
    s2, w2 = kc.permuted_group_sums(scores, weights, starts, n_low, keys)
    np.testing.assert_allclose(s1, s2, rtol=1e-11, atol=1e-12)
    np.testing.assert_allclose(w1, w2, rtol=1e-11, atol=1e-12)


def test_permuted_group_sums_identity_keys():
    # sorted keys reproduce the observed leading blocks in both backends
    starts = np.array([0, 3, 7], dtype=np.int64)
    scores = np.arange(7, dtype=float)
    weights = np.ones(7)
    n_low = np.array([2, 1], dtype=np.int64)
    keys = np.arange(7, dtype=float)[None, :] / 10.0
    for mod in (kpy, kc):
        s, w = mod.permuted_group_sums(scores, weights, starts, n_low, keys)
        assert s[0] == scores[0] + scores[1] + scores[3]
        assert w[0] == 3.0
