import numpy as np
import pytest

from clustassoc import (
    ClusterDataError,
    ClusteredDataset,
    DegenerateVarianceError,
    EstimationError,
    MomentVector,
    WeightScheme,
    categorize_labels,
    correlation_functional,
    correlation_gradient,
    delta_se,
    pearson,
    phi,
    spearman,
    weighted_moments,
)
from clustassoc.association import Z_975

from conftest import median_categorized, random_categorized, random_dataset


def classical_spearman(x, y):
    """Textbook Spearman on untied data: 1 - 6*sum(d^2) / (n(n^2-1))."""
    n = len(x)
    rx = np.argsort(np.argsort(x)) + 1
    ry = np.argsort(np.argsort(y)) + 1
    d = rx - ry
    return 1.0 - 6.0 * float(d @ d) / (n * (n * n - 1))


def moments_of(data, weights=None):
    w = np.ones(data.n_units) if weights is None else weights
    return weighted_moments(data.x, data.y, w, data.cluster_index())


def random_moment_vector(rng):
    """Nondegenerate moment vector realized by actual data."""
    n = int(rng.integers(5, 40))
    a = rng.normal(size=n)
    b = 0.3 * a + rng.normal(size=n)
    w = rng.uniform(0.2, 2.0, size=n)
    ws = w.sum()
    return MomentVector(
        float(w @ a / ws),
        float(w @ b / ws),
        float(w @ (a * b) / ws),
        float(w @ (a * a) / ws),
        float(w @ (b * b) / ws),
    )


class TestWeightedMoments:
    def test_single_unit(self):
        m, cov = weighted_moments([2.0], [3.0], [1.0], ["c"])
        np.testing.assert_allclose(m.as_array(), [2, 3, 6, 4, 9])
        np.testing.assert_allclose(cov, np.zeros((5, 5)), atol=1e-14)

    def test_three_unit_hand_oracle(self):
        m, _ = weighted_moments([1, 2, 3], [1, 2, 3], [1, 1, 1], ["a", "b", "c"])
        np.testing.assert_allclose(m.as_array(), [2, 2, 14 / 3, 14 / 3, 14 / 3], rtol=1e-15)

    def test_doubling_weights_is_exactly_invariant(self, rng):
        data = random_dataset(rng)
        w = rng.uniform(0.5, 1.5, size=data.n_units)
        m1, c1 = moments_of(data, w)
        m2, c2 = moments_of(data, 2.0 * w)
        assert m1 == m2
        np.testing.assert_array_equal(c1, c2)

    def test_unsorted_cluster_labels(self, rng):
        # arbitrary interleaved labels give the same result as grouped data
        a = rng.normal(size=8)
        b = rng.normal(size=8)
        w = rng.uniform(0.5, 2.0, size=8)
        labels = np.array(["z", "q", "z", "q", "z", "q", "z", "q"])
        m1, c1 = weighted_moments(a, b, w, labels)
        order = np.argsort(labels, kind="stable")
        m2, c2 = weighted_moments(a[order], b[order], w[order], labels[order])
        np.testing.assert_allclose(m1.as_array(), m2.as_array(), rtol=1e-14)
        np.testing.assert_allclose(c1, c2, rtol=1e-12, atol=1e-16)

    def test_sandwich_matches_direct_formula(self, rng):
        # cov = sum_i S_i S_i^T / (sum w)^2, from the definitions
        data = random_dataset(rng, n_clusters=6, max_size=5, min_size=2)
        w = rng.uniform(0.2, 2.0, size=data.n_units)
        m, cov = moments_of(data, w)
        cidx = data.cluster_index()
        feats = np.stack(
            [data.x, data.y, data.x * data.y, data.x**2, data.y**2], axis=1
        )
        direct = np.zeros((5, 5))
        for c in range(data.n_clusters):
            sel = cidx == c
            s_i = (w[sel, None] * (feats[sel] - m.as_array())).sum(axis=0)
            direct += np.outer(s_i, s_i)
        direct /= w.sum() ** 2
        np.testing.assert_allclose(cov, direct, rtol=1e-10, atol=1e-14)

    def test_rejects_bad_weights(self):
        with pytest.raises(ClusterDataError):
            weighted_moments([1.0], [1.0], [0.0], ["a"])
        with pytest.raises(ClusterDataError):
            weighted_moments([1.0], [1.0], [-1.0], ["a"])


class TestCorrelationFunctional:
    def test_reference_values(self):
        assert correlation_functional(MomentVector(0, 0, 1, 1, 1)) == 1.0
        assert correlation_functional(MomentVector(0, 0, 0, 1, 1)) == 0.0
        m = MomentVector(2, 2, 14 / 3, 14 / 3, 14 / 3)
        assert correlation_functional(m) == pytest.approx(1.0, abs=1e-12)

    def test_degenerate_margin_raises(self):
        with pytest.raises(DegenerateVarianceError):
            correlation_functional(MomentVector(1, 0, 0, 1, 1))  # vx = 0
        with pytest.raises(DegenerateVarianceError):
            correlation_functional(MomentVector(0, 2, 0, 1, 4))  # vy = 0

    def test_small_overshoot_clamped_large_raises(self):
        m = MomentVector(0, 0, 1.0 + 1e-10, 1, 1)
        assert correlation_functional(m) == 1.0
        with pytest.raises(EstimationError):
            correlation_functional(MomentVector(0, 0, 1.1, 1, 1))


class TestDeltaMethod:
    def test_zero_covariance(self):
        m = MomentVector(0.1, -0.2, 0.3, 1.5, 2.0)
        assert delta_se(m, np.zeros((5, 5))) == 0.0

    def test_identity_cov_standardized_point(self):
        m = MomentVector(0, 0, 0, 1, 1)
        assert delta_se(m, np.eye(5)) == pytest.approx(1.0, rel=1e-12)

    def test_gradient_matches_finite_differences(self, rng):
        h = 1e-6
        for _ in range(100):
            m = random_moment_vector(rng)
            grad = correlation_gradient(m)
            arr = m.as_array()
            fd = np.empty(5)
            for i in range(5):
                up = arr.copy()
                dn = arr.copy()
                up[i] += h
                dn[i] -= h
                fd[i] = (
                    correlation_functional(MomentVector.from_array(up))
                    - correlation_functional(MomentVector.from_array(dn))
                ) / (2 * h)
            np.testing.assert_allclose(grad, fd, rtol=1e-6, atol=1e-8)

    def test_se_matches_finite_difference_delta(self, rng):
        h = 1e-6
        for _ in range(25):
            m = random_moment_vector(rng)
            a = rng.normal(size=(5, 5))
            cov = a @ a.T / 25.0
            arr = m.as_array()
            fd = np.empty(5)
            for i in range(5):
                up = arr.copy()
                dn = arr.copy()
                up[i] += h
                dn[i] -= h
                fd[i] = (
                    correlation_functional(MomentVector.from_array(up))
                    - correlation_functional(MomentVector.from_array(dn))
                ) / (2 * h)
            se_fd = np.sqrt(fd @ cov @ fd)
            assert delta_se(m, cov) == pytest.approx(se_fd, rel=1e-6)


class TestPearson:
    def test_collinear_single_cluster(self):
        ds = ClusteredDataset.from_clusters([("a", [1, 2, 3], [1, 2, 3]), ("b", [0, 5], [0, 5])])
        est = pearson(ds, WeightScheme.NONE)
        assert est.rho_hat == pytest.approx(1.0, abs=1e-12)

    def test_textbook_oracle_unweighted(self, rng):
        for _ in range(20):
            n = int(rng.integers(3, 30))
            x = rng.normal(size=n)
            y = rng.normal(size=n)
            ds = ClusteredDataset.from_clusters([("a", x[: n // 2 + 1], y[: n // 2 + 1]), ("b", x[n // 2 + 1 :], y[n // 2 + 1 :])])
            est = pearson(ds, WeightScheme.NONE, min_cluster_size=1)
            assert est.rho_hat == pytest.approx(np.corrcoef(x, y)[0, 1], abs=1e-12)

    def test_cw_equals_ppw_when_pairs_shared(self):
        # both clusters have a single paired category, so ppw weights
        # coincide with cw weights and so do the estimates
        ds = ClusteredDataset.from_clusters(
            [("a", [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]), ("b", [1.0], [1.0])]
        )
        cd = categorize_labels(ds, [1, 1, 1, 2], [1, 1, 1, 2])
        cw = pearson(cd, WeightScheme.CW, min_cluster_size=1)
        ppw = pearson(cd, WeightScheme.PPW, min_cluster_size=1)
        assert cw.rho_hat == ppw.rho_hat
        assert cw.se == ppw.se

    def test_ci_and_counts(self, rng):
        data = random_dataset(rng, n_clusters=8, min_size=2, corr=0.5)
        est = pearson(data, WeightScheme.CW)
        assert est.ci_low == pytest.approx(est.rho_hat - Z_975 * est.se)
        assert est.ci_high == pytest.approx(est.rho_hat + Z_975 * est.se)
        assert est.ci_low <= est.rho_hat <= est.ci_high
        assert est.n_clusters_used == 8
        assert est.n_units_used == data.n_units

    def test_min_cluster_size_filter(self):
        ds = ClusteredDataset.from_clusters(
            [("a", [1.0], [1.0]), ("b", [1.0, 2.0, 3.0], [2.0, 1.0, 3.0]), ("c", [0.0, 4.0], [1.0, 5.0])]
        )
        est = pearson(ds, WeightScheme.CW, min_cluster_size=2)
        assert est.n_clusters_used == 2
        assert est.n_units_used == 5

    def test_too_few_clusters_raises(self):
        ds = ClusteredDataset.from_clusters([("a", [1.0, 2.0], [1.0, 2.0])])
        with pytest.raises(EstimationError):
            pearson(ds, WeightScheme.CW)

    def test_constant_margin_raises(self):
        ds = ClusteredDataset.from_clusters([("a", [1.0, 1.0], [1.0, 2.0]), ("b", [1.0, 1.0], [0.0, 3.0])])
        with pytest.raises(DegenerateVarianceError):
            pearson(ds, WeightScheme.CW)


class TestSpearman:
    def test_perfect_inverse(self):
        ds = ClusteredDataset.from_clusters([("a", [1, 2, 3], [5, 4, 3]), ("b", [4, 5], [2, 1])])
        est = spearman(ds, WeightScheme.NONE)
        assert est.rho_hat == pytest.approx(-1.0, abs=1e-12)

    def test_matches_classical_on_untied(self, rng):
        for _ in range(30):
            n = int(rng.integers(6, 40))
            x = rng.permutation(n) + rng.uniform(-0.01, 0.01, size=n)
            y = rng.permutation(n) + rng.uniform(-0.01, 0.01, size=n)
            half = n // 2
            ds = ClusteredDataset.from_clusters([("a", x[:half], y[:half]), ("b", x[half:], y[half:])])
            est = spearman(ds, WeightScheme.NONE, min_cluster_size=1)
            assert est.rho_hat == pytest.approx(classical_spearman(x, y), abs=1e-12)

    def test_monotone_transform_invariance(self, rng):
        for _ in range(10):
            data = random_dataset(rng, n_clusters=6, min_size=2, corr=0.4)
            cd = median_categorized(data)
            for scheme in (WeightScheme.CW, WeightScheme.PPW):
                base = spearman(cd, scheme)
                warped = ClusteredDataset(
                    data.cluster_ids, np.exp(data.x), np.asarray(data.y), data.starts
                )
                cd2 = categorize_labels(warped, cd.x_cat, cd.y_cat)
                est = spearman(cd2, scheme)
                assert est.rho_hat == pytest.approx(base.rho_hat, abs=1e-12)
                assert est.se == pytest.approx(base.se, abs=1e-12)


class TestPhi:
    def test_perfect_agreement(self):
        ds = ClusteredDataset.from_clusters(
            [("a", [0.0, 1.0], [0.0, 1.0]), ("b", [0.0, 1.0], [0.0, 1.0])]
        )
        est = phi(ds, WeightScheme.NONE, 0.5, 0.5)
        assert est.rho_hat == pytest.approx(1.0, abs=1e-12)

    def test_independence_table(self):
        # cell mass equals the product of the margins, so phi is zero
        ds = ClusteredDataset.from_clusters(
            [("a", [0.0, 0.0, 1.0, 1.0], [0.0, 1.0, 0.0, 1.0]), ("b", [0.0, 0.0, 1.0, 1.0], [0.0, 1.0, 0.0, 1.0])]
        )
        est = phi(ds, WeightScheme.NONE, 0.5, 0.5)
        assert est.rho_hat == pytest.approx(0.0, abs=1e-14)

    def test_equals_pearson_on_indicators(self, rng):
        for _ in range(40):
            data = random_dataset(rng, n_clusters=6, min_size=2, corr=0.3)
            cd = median_categorized(data)
            tx = float(np.median(data.x))
            ty = float(np.median(data.y))
            for scheme in (WeightScheme.NONE, WeightScheme.CW, WeightScheme.PPW):
                try:
                    est = phi(cd, scheme, tx, ty)
                except DegenerateVarianceError:
                    continue
                ind = ClusteredDataset(
                    data.cluster_ids,
                    (data.x >= tx).astype(float),
                    (data.y >= ty).astype(float),
                    data.starts,
                )
                ind_cd = categorize_labels(ind, cd.x_cat, cd.y_cat)
                ref = pearson(ind_cd, scheme)
                assert est.rho_hat == pytest.approx(ref.rho_hat, abs=1e-12)
                assert est.se == pytest.approx(ref.se, abs=1e-12)

    def test_single_level_margin_raises(self):
        ds = ClusteredDataset.from_clusters(
            [("a", [1.0, 2.0], [0.0, 1.0]), ("b", [3.0, 4.0], [1.0, 0.0])]
        )
        with pytest.raises(DegenerateVarianceError):
            phi(ds, WeightScheme.NONE, 0.0, 0.5)  # every x >= 0


class TestCrossCuttingProperties:
    def test_weight_scale_invariance(self, rng):
        for _ in range(20):
            data = random_dataset(rng, n_clusters=7, min_size=2, corr=0.3)
            w = rng.uniform(0.3, 3.0, size=data.n_units)
            c = float(rng.uniform(0.01, 100.0))
            m1, c1 = moments_of(data, w)
            m2, c2 = moments_of(data, c * w)
            np.testing.assert_allclose(m1.as_array(), m2.as_array(), rtol=1e-12, atol=1e-14)
            rho1 = correlation_functional(m1)
            rho2 = correlation_functional(m2)
            assert rho2 == pytest.approx(rho1, abs=1e-12)
            assert delta_se(m2, c2) == pytest.approx(delta_se(m1, c1), rel=1e-10, abs=1e-13)

    def test_symmetry_in_margins(self, rng):
        for _ in range(10):
            data = random_dataset(rng, n_clusters=6, min_size=2, corr=0.4)
            swapped = ClusteredDataset(
                data.cluster_ids, np.asarray(data.y), np.asarray(data.x), data.starts
            )
            for fn in (pearson, spearman):
                a = fn(data, WeightScheme.CW)
                b = fn(swapped, WeightScheme.CW)
                assert a.rho_hat == pytest.approx(b.rho_hat, abs=1e-12)
                assert a.se == pytest.approx(b.se, abs=1e-12)
            pa = phi(data, WeightScheme.CW, 0.1, -0.1)
            pb = phi(swapped, WeightScheme.CW, -0.1, 0.1)
            assert pa.rho_hat == pytest.approx(pb.rho_hat, abs=1e-12)
            assert pa.se == pytest.approx(pb.se, abs=1e-12)

    def test_estimates_in_range(self, rng):
        for _ in range(30):
            data = random_dataset(rng, n_clusters=5, min_size=2, corr=float(rng.uniform(-0.9, 0.9)))
            cd = median_categorized(data)
            for scheme in WeightScheme:
                try:
                    est = pearson(cd, scheme)
                except EstimationError:
                    continue
                assert -1.0 <= est.rho_hat <= 1.0
                assert est.se >= 0.0
