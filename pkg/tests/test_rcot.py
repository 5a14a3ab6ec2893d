import numpy as np
import pytest
from scipy.stats import chi2

from propaudit.dataset import standardize
from propaudit.errors import InsufficientDataError
from propaudit.rcot import (
    RcotConfig,
    hbe_pvalue,
    random_fourier_features,
    rcot_statistic,
    rcot_test,
    residualize,
)

from conftest import gaussian_pair


class TestRandomFourierFeatures:
    def test_deterministic(self):
        pts = np.random.default_rng(0).standard_normal((20, 2))
        a = random_fourier_features(pts, 1.0, 10, seed=5)
        b = random_fourier_features(pts, 1.0, 10, seed=5)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.frequencies, b.frequencies)

    def test_matches_formula(self):
        pts = np.random.default_rng(1).standard_normal((15, 3))
        fm = random_fourier_features(pts, 0.8, 7, seed=2)
        expected = np.sqrt(2.0 / 7) * np.cos(pts @ fm.frequencies.T / 0.8 + fm.phases)
        np.testing.assert_allclose(fm.features, expected, atol=1e-12)

    def test_huge_bandwidth_nearly_constant_columns(self):
        pts = np.random.default_rng(2).standard_normal((30, 1))
        fm = random_fourier_features(pts, 1e9, 5, seed=0)
        assert np.all(fm.features.std(axis=0) < 1e-6)

    def test_approximates_rbf_gram(self):
        from propaudit.kernels import rbf_gram

        pts = np.random.default_rng(3).standard_normal((40, 2))
        bw = 1.2
        exact = rbf_gram(pts, bw).entries
        approx_terms = []
        for seed in range(20):
            F = random_fourier_features(pts, bw, 100, seed=seed).features
            approx_terms.append(F @ F.T)
        approx = np.mean(approx_terms, axis=0)
        assert np.mean(np.abs(approx - exact)) <= 0.05

    def test_bad_args(self):
        with pytest.raises(ValueError):
            random_fourier_features([[0.0]], 0.0, 5, seed=0)
        with pytest.raises(ValueError):
            random_fourier_features([[0.0]], 1.0, 0, seed=0)


class TestResidualize:
    def test_no_conditioning_just_centers(self):
        F = np.random.default_rng(4).standard_normal((25, 3)) + 2.0
        R = residualize(F, None, ridge=1e-5)
        np.testing.assert_allclose(R.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(R, F - F.mean(axis=0), atol=1e-12)

    def test_exact_fit_leaves_tiny_residual(self):
        rng = np.random.default_rng(5)
        Fc = rng.standard_normal((50, 4))
        beta = rng.standard_normal((4, 2))
        Ft = Fc @ beta
        R = residualize(Ft, Fc, ridge=1e-10)
        assert np.max(np.abs(R)) < 1e-6

    def test_residuals_orthogonal_to_conditioner(self):
        rng = np.random.default_rng(6)
        Fc = rng.standard_normal((60, 5))
        Ft = rng.standard_normal((60, 3))
        R = residualize(Ft, Fc, ridge=1e-8)
        Fcc = Fc - Fc.mean(axis=0)
        assert np.max(np.abs(Fcc.T @ R)) < 1e-4

    def test_row_count_mismatch(self):
        with pytest.raises(ValueError):
            residualize(np.zeros((5, 2)), np.zeros((6, 2)), ridge=1e-5)


class TestRcotStatistic:
    def test_zero_for_zero_input(self):
        assert rcot_statistic(np.zeros((10, 3)), np.ones((10, 2))) == 0.0

    def test_joint_row_permutation_invariance(self):
        rng = np.random.default_rng(7)
        Rx = rng.standard_normal((30, 4))
        Ry = rng.standard_normal((30, 3))
        perm = rng.permutation(30)
        assert rcot_statistic(Rx[perm], Ry[perm]) == pytest.approx(
            rcot_statistic(Rx, Ry), rel=1e-12
        )

    def test_small_case_brute_force(self):
        Rx = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        Ry = np.array([[2.0], [1.0], [0.0]])
        n = 3
        cross = Rx.T @ Ry / n
        expected = n * float(np.sum(cross**2))
        assert rcot_statistic(Rx, Ry) == pytest.approx(expected, abs=1e-14)


class TestHbePvalue:
    def test_single_weight_is_scaled_chi_square(self):
        w = 2.5
        for stat in (0.5, 2.0, 7.0):
            assert hbe_pvalue([w], stat) == pytest.approx(
                chi2.sf(stat / w, df=1), abs=1e-6
            )

    def test_equal_weights_match_chi_square_df(self):
        d = 10
        for stat in (d / 2, float(d), 2.0 * d):
            assert hbe_pvalue(np.ones(d), stat) == pytest.approx(
                chi2.sf(stat, df=d), abs=2e-2
            )

    def test_nonpositive_statistic(self):
        assert hbe_pvalue([1.0, 2.0], 0.0) == 1.0
        assert hbe_pvalue([1.0], -3.0) == 1.0

    def test_monotone_in_statistic(self):
        w = [0.5, 1.5, 3.0]
        ps = [hbe_pvalue(w, s) for s in np.linspace(0.1, 30, 40)]
        assert all(a >= b for a, b in zip(ps, ps[1:]))

    def test_no_positive_weights(self):
        with pytest.raises(ValueError):
            hbe_pvalue([0.0, -1.0], 2.0)


class TestRcotTest:
    def test_deterministic(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal(150)
        y = rng.standard_normal(150)
        z = rng.standard_normal(150)
        cfg = RcotConfig(seed=9)
        assert rcot_test(x, y, z, cfg) == rcot_test(x, y, z, cfg)

    def test_affine_invariance_after_standardizing(self):
        rng = np.random.default_rng(10)
        x = rng.standard_normal(120)
        y = rng.standard_normal(120)
        z = rng.standard_normal(120)
        a = rcot_test(standardize(x).values, y, z, RcotConfig(seed=1))
        b = rcot_test(standardize(3.0 * x + 7.0).values, y, z, RcotConfig(seed=1))
        assert a.p_value == pytest.approx(b.p_value, abs=1e-12)
        assert a.statistic == pytest.approx(b.statistic, rel=1e-9)

    def test_small_n_uses_permutation_fallback(self):
        rng = np.random.default_rng(11)
        out = rcot_test(
            rng.standard_normal(50), rng.standard_normal(50), rng.standard_normal(50),
            RcotConfig(B=49, seed=2),
        )
        assert "permutation" in out.config_echo

    def test_large_n_uses_hbe(self):
        rng = np.random.default_rng(12)
        out = rcot_test(
            rng.standard_normal(200), rng.standard_normal(200), rng.standard_normal(200),
            RcotConfig(seed=3),
        )
        assert "hbe" in out.config_echo

    def test_detects_dependence(self):
        rng = np.random.default_rng(13)
        z = rng.standard_normal(300)
        x = np.tanh(z) + rng.standard_normal(300)
        y = z**2 / 2 + rng.standard_normal(300) + 1.0 * x
        out = rcot_test(
            standardize(x).values, standardize(y).values, standardize(z).values,
            RcotConfig(seed=4),
        )
        assert out.p_value <= 0.01

    def test_too_few_samples(self):
        with pytest.raises(InsufficientDataError):
            rcot_test(np.arange(3.0), np.arange(3.0))
