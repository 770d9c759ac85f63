import math

import numpy as np
import pytest

from clustassoc import (
    ClusterDataError,
    RandomStream,
    bivariate_normal,
    logistic,
    normal_cdf,
    normal_quantile,
)


def bisect_quantile(p, lo=-40.0, hi=40.0, iters=200):
    """Independent oracle: bisection on normal_cdf."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if normal_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class TestNormalCdf:
    def test_zero_is_half(self):
        assert normal_cdf(0.0) == 0.5

    def test_against_high_precision_erf(self):
        # mpmath:  0.5 * erfc(-1.959964 / sqrt(2)) to 30 digits
        import mpmath

        mpmath.mp.dps = 30
        expected = float(0.5 * mpmath.erfc(-mpmath.mpf("1.959964") / mpmath.sqrt(2)))
        assert abs(normal_cdf(1.959964) - expected) < 1e-15
        assert abs(normal_cdf(1.959964) - 0.975) < 1e-8

    def test_symmetry(self):
        assert abs(normal_cdf(-1.959964) - 0.025) < 1e-8
        for z in (0.3, 1.7, 4.2):
            assert abs(normal_cdf(z) + normal_cdf(-z) - 1.0) < 1e-15

    def test_monotone_and_saturating(self):
        zs = np.linspace(-45, 45, 2001)
        vals = [normal_cdf(z) for z in zs]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
        assert normal_cdf(-50.0) == 0.0
        assert normal_cdf(50.0) == 1.0


class TestNormalQuantile:
    def test_median(self):
        assert normal_quantile(0.5) == 0.0

    @pytest.mark.parametrize("p", [0.975, 0.2])
    def test_against_bisection_oracle(self, p):
        assert abs(normal_quantile(p) - bisect_quantile(p)) < 1e-9

    def test_reference_values(self):
        assert abs(normal_quantile(0.975) - 1.959964) < 1e-6
        assert abs(normal_quantile(0.2) - (-0.841621)) < 1e-6

    def test_round_trip(self, rng):
        ps = rng.uniform(1e-15, 1 - 1e-15, size=1000)
        for p in ps:
            assert abs(normal_cdf(normal_quantile(p)) - p) < 1e-9

    def test_extreme_tails(self):
        for p in (1e-15, 1e-9, 1 - 1e-9, 1 - 1e-15):
            assert abs(normal_cdf(normal_quantile(p)) - p) < 1e-9

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.3, 1.5])
    def test_domain_error(self, p):
        with pytest.raises(ClusterDataError):
            normal_quantile(p)


class TestLogistic:
    def test_values(self):
        assert logistic(0.0) == 0.5
        assert abs(logistic(3.0) - 0.952574) < 1e-6
        assert abs(logistic(-3.0) - 0.047426) < 1e-6

    def test_complement_identity(self):
        for t in np.linspace(-30, 30, 601):
            assert abs(logistic(t) + logistic(-t) - 1.0) <= 1e-15

    def test_array_matches_scalar(self, rng):
        t = rng.normal(scale=10, size=200)
        arr = logistic(t)
        for i, ti in enumerate(t):
            assert arr[i] == pytest.approx(logistic(float(ti)), rel=1e-14)

    def test_monotone(self):
        t = np.linspace(-20, 20, 401)
        assert np.all(np.diff(logistic(t)) > 0)


class TestRandomStream:
    def test_reproducible(self):
        a = RandomStream(42, (1, 2, 3)).generator().random(64)
        b = RandomStream(42, (1, 2, 3)).generator().random(64)
        assert np.array_equal(a, b)

    def test_child_paths(self):
        s = RandomStream(7)
        assert s.child(3, 1).path == (3, 1)
        assert s.child(3).child(1).path == (3, 1)
        a = s.child(3, 1).generator().random(16)
        b = s.child(3).child(1).generator().random(16)
        assert np.array_equal(a, b)

    def test_distinct_paths_look_independent(self):
        n = 20_000
        draws = [RandomStream(11).child(i).generator().random(n) for i in range(4)]
        for i in range(4):
            for j in range(i + 1, 4):
                r = np.corrcoef(draws[i], draws[j])[0, 1]
                assert abs(r) < 0.03
        for d in draws:
            # uniformity smoke test
            assert abs(d.mean() - 0.5) < 0.01
            assert abs(np.quantile(d, 0.25) - 0.25) < 0.01

    def test_validation(self):
        with pytest.raises(ClusterDataError):
            RandomStream(-1)
        with pytest.raises(ClusterDataError):
            RandomStream(1, (-2,))


class TestBivariateNormal:
    def test_degenerate_corr_one(self):
        x, y = bivariate_normal((0.0, 0.0), (1.0, 1.0), 1.0, RandomStream(0), size=1000)
        assert np.allclose(x, y, atol=1e-12)

    def test_zero_corr_moments(self):
        x, y = bivariate_normal((0.0, 0.0), (1.0, 1.0), 0.0, RandomStream(1), size=1_000_000)
        assert abs(np.corrcoef(x, y)[0, 1]) < 0.005

    def test_general_moments(self):
        x, y = bivariate_normal((2.0, -1.0), (3.0, 0.5), 0.5, RandomStream(2), size=1_000_000)
        assert abs(x.mean() - 2.0) < 0.01
        assert abs(y.mean() + 1.0) < 0.01
        assert abs(np.corrcoef(x, y)[0, 1] - 0.5) < 0.005

    def test_scalar_mode(self):
        x, y = bivariate_normal((0.0, 0.0), (1.0, 1.0), 0.3, RandomStream(3))
        assert isinstance(x, float) and isinstance(y, float)

    def test_validation(self):
        with pytest.raises(ClusterDataError):
            bivariate_normal((0, 0), (0.0, 1.0), 0.0, RandomStream(0))
        with pytest.raises(ClusterDataError):
            bivariate_normal((0, 0), (1.0, 1.0), 1.5, RandomStream(0))
