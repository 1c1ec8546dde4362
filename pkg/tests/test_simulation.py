import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from nfbm import Grid, HurstOrder
from nfbm.covariance import nfbm_cov_closed, nfbm_var
from nfbm.errors import DomainError, RoughnessError
from nfbm.simulation import (
    Method,
    RngStream,
    SamplePath,
    cholesky_ensemble,
    coarsen_increments,
    differentiate_path,
    fbm_fft_ensemble,
    fft_nfbm_ensemble,
    fgn_autocovariance,
    fgn_ensemble,
    figure_paths,
    integrate_path,
    jittered_cholesky,
    max_abs_increment,
    simulate,
    simulate_cholesky,
    simulate_fgn_fft,
    simulate_volterra,
    trapezoid_cumulative,
    volterra_ensemble,
    volterra_from_increments,
)

from .conftest import three_se


def var_se(x):
    """Sample variance and its standard error for roughly Gaussian data."""
    v = x.var(ddof=1)
    return v, v * math.sqrt(2.0 / (x.size - 1))


def cov_within_3se(X, C):
    """Entrywise check of the sample covariance of centred rows ``X`` against ``C``."""
    N = X.shape[0]
    S = X.T @ X / N
    var = np.diag(C)
    se = np.sqrt((np.outer(var, var) + C**2) / N)
    return np.abs(S - C) <= 3 * se


class TestRng:
    def test_deterministic(self):
        a = RngStream(7, 3).normal(10)
        b = RngStream(7, 3).normal(10)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ(self):
        assert not np.allclose(RngStream(7, 0).normal(5), RngStream(7, 1).normal(5))
        assert RngStream(7).substream(0) != RngStream(7).substream(1)

    @pytest.mark.parametrize("bad", [(-1, 0), (1.5, 0), (0, 2**64)])
    def test_invalid(self, bad):
        with pytest.raises(DomainError):
            RngStream(*bad)

    def test_substreams_uncorrelated(self):
        a = RngStream(1).substream(0).normal(20000)
        b = RngStream(1).substream(1).normal(20000)
        assert abs(np.corrcoef(a, b)[0, 1]) < 3 / math.sqrt(20000)


class TestSamplePath:
    def test_must_start_at_zero(self):
        with pytest.raises(DomainError):
            SamplePath(Grid(1.0, 2), np.array([1.0, 0.0, 0.0]), HurstOrder(1, 0.5), Method.DERIVED)

    def test_length(self):
        with pytest.raises(DomainError):
            SamplePath(Grid(1.0, 2), np.zeros(4), HurstOrder(1, 0.5), Method.DERIVED)

    @pytest.mark.parametrize("method", ["volterra", "cholesky", "fft"])
    def test_contract(self, method):
        p = simulate(HurstOrder(2, 1.3), Grid(1.0, 32), RngStream(3), method)
        assert p.values.shape == (33,) and p.values[0] == 0.0
        assert p.method is Method(method)


class TestVolterra:
    def test_brownian_is_cumsum(self):
        p = simulate_volterra(HurstOrder(1, 0.5), Grid(1.0, 64), RngStream(4))
        np.testing.assert_allclose(p.values, p.brownian(), atol=1e-14)

    def test_integrated_brownian_variance(self):
        vals, _ = volterra_ensemble(HurstOrder(2, 1.5), Grid(1.0, 1024), RngStream(9), 10_000)
        v, se = var_se(vals[:, -1])
        assert abs(v - 1 / 3) < 3 * se

    @pytest.mark.parametrize("method", ["volterra", "cholesky", "fft"])
    def test_determinism(self, method):
        ho, g = HurstOrder(2, 1.25), Grid(1.0, 64)
        a = simulate(ho, g, RngStream(123, 5), method)
        b = simulate(ho, g, RngStream(123, 5), method)
        np.testing.assert_array_equal(a.values, b.values)

    def test_from_increments(self):
        p = simulate_volterra(HurstOrder(2, 1.3), Grid(1.0, 16), RngStream(2))
        q = volterra_from_increments(p.ho, p.grid, p.stored_increments, p.seed)
        np.testing.assert_array_equal(p.values, q.values)

    def test_coarsen(self):
        dW = np.arange(8.0)
        np.testing.assert_array_equal(coarsen_increments(dW, 4), [6.0, 22.0])
        with pytest.raises(DomainError):
            coarsen_increments(dW, 3)


class TestCholesky:
    def test_brownian_two_points(self):
        g = Grid(1.0, 2)
        X = cholesky_ensemble(HurstOrder(1, 0.5), g, RngStream(5), 100_000)[:, 1:]
        C = g.dt * np.array([[1.0, 1.0], [1.0, 2.0]])
        assert np.all(cov_within_3se(X, C))

    def test_integrated_brownian_cross_covariance(self):
        X = cholesky_ensemble(HurstOrder(2, 1.5), Grid(1.0, 2), RngStream(6), 100_000)
        prod = X[:, 2] * X[:, 1]
        assert abs(prod.mean() - 5 / 48) < three_se(prod)

    def test_normal_marginal(self):
        x = cholesky_ensemble(HurstOrder(2, 1.25), Grid(1.0, 4), RngStream(8), 50_000)[:, -1]
        N = x.size
        assert abs(stats.skew(x)) < 3 * math.sqrt(6 / N)
        assert abs(stats.kurtosis(x)) < 3 * math.sqrt(24 / N)

    def test_jitter(self):
        C = np.ones((3, 3))  # rank one
        L = jittered_cholesky(C)
        np.testing.assert_allclose(L @ L.T, C, atol=1e-6)

    def test_jitter_gives_up(self):
        from nfbm.errors import ConditioningError

        with pytest.raises(ConditioningError):
            jittered_cholesky(np.diag([1.0, -1.0]))

    def test_single_path(self):
        p = simulate_cholesky(HurstOrder(1, 0.3), Grid(1.0, 8), RngStream(1))
        assert p.stored_increments is None and p.method is Method.CHOLESKY


@pytest.mark.parametrize("ho", [(1, 0.75), (2, 1.25)])
def test_method_agreement(ho):
    g = Grid(1.0, 8)
    t = g.points[1:]
    C = nfbm_cov_closed(ho, t[:, None], t[None, :])
    V, _ = volterra_ensemble(ho, g, RngStream(21), 100_000)
    X = cholesky_ensemble(ho, g, RngStream(22), 100_000)
    assert np.all(cov_within_3se(X[:, 1:], C))
    # the Volterra matrix is a discretisation, so its exact Gram product is the target
    from nfbm.kernels import kernel_matrix

    G = kernel_matrix(HurstOrder(*ho), g).gram()
    assert np.all(cov_within_3se(V[:, 1:], G))
    SX = X[:, 1:].T @ X[:, 1:] / X.shape[0]
    SV = V[:, 1:].T @ V[:, 1:] / V.shape[0]
    se = np.sqrt(2 * (np.outer(np.diag(C), np.diag(C)) + C**2) / X.shape[0])
    assert np.all(np.abs(SX - SV) <= 3 * se + np.abs(G - C))


class TestFft:
    def test_autocovariance(self):
        assert fgn_autocovariance(0.75, 1) == pytest.approx((2**1.5 - 2) / 2, rel=1e-14)
        assert fgn_autocovariance(0.5, np.arange(1, 5)) == pytest.approx(np.zeros(4), abs=1e-15)

    @pytest.mark.parametrize("H, rho", [(0.5, 0.0), (0.75, (2**1.5 - 2) / 2), (0.25, (2**0.5 - 2) / 2)])
    def test_lag_one_correlation(self, H, rho):
        noise = fgn_ensemble(H, Grid(1.0, 64), RngStream(31), 20_000)
        prod = noise[:, :-1] * noise[:, 1:] / (1 / 64) ** (2 * H)
        x = prod[:, 10]
        assert abs(x.mean() - rho) < three_se(x)

    def test_unit_variance(self):
        vals = fbm_fft_ensemble(0.3, Grid(1.0, 256), RngStream(4), 20_000)
        v, se = var_se(vals[:, -1])
        assert abs(v - 1.0) < 3 * se

    @pytest.mark.parametrize("ho", [(2, 1.25), (3, 2.7)])
    def test_integrated_variance_close(self, ho):
        # trapezoid integration of exact fBm: variance within O(dt^2) of the closed form
        vals = fft_nfbm_ensemble(ho, Grid(1.0, 256), RngStream(5), 20_000)
        v, se = var_se(vals[:, -1])
        assert abs(v - nfbm_var(ho, 1.0)) < 3 * se + 1e-4

    def test_single_path(self):
        p = simulate_fgn_fft(0.7, Grid(2.0, 128), RngStream(1))
        assert p.ho == HurstOrder(1, 0.7) and p.values[0] == 0.0


class TestCalculus:
    def test_trapezoid_constant(self):
        np.testing.assert_allclose(trapezoid_cumulative(np.ones(11), 0.1), np.linspace(0, 1, 11), atol=1e-15)

    def test_integrate_raises_order(self):
        g = Grid(1.0, 10)
        p = SamplePath(g, g.points.copy(), HurstOrder(1, 0.5), Method.DERIVED)
        q = integrate_path(p)
        assert q.ho == HurstOrder(2, 1.5)
        np.testing.assert_allclose(q.values, g.points**2 / 2, atol=1e-15)

    def test_integrated_brownian_variance(self):
        g = Grid(1.0, 512)
        dW = RngStream(3).normal((10_000, g.m)) * math.sqrt(g.dt)
        W = np.concatenate([np.zeros((10_000, 1)), np.cumsum(dW, axis=1)], axis=1)
        v, se = var_se(trapezoid_cumulative(W, g.dt)[:, -1])
        assert abs(v - 1 / 3) < 3 * se

    def test_derivative_of_square(self):
        g = Grid(1.0, 100)
        p = SamplePath(g, g.points**2, HurstOrder(2, 1.5), Method.DERIVED)
        d = differentiate_path(p, 1)
        np.testing.assert_allclose(d.values[1:-1], 2 * g.points[1:-1], atol=1e-10)
        assert d.ho == HurstOrder(1, 0.5)

    def test_integrate_then_differentiate(self):
        errs = []
        for m in (128, 512):
            g = Grid(1.0, m)
            x = np.sin(3 * g.points)
            p = SamplePath(g, x, HurstOrder(1, 0.5), Method.DERIVED)
            d = differentiate_path(integrate_path(p), 1)
            errs.append(np.max(np.abs(d.values[1:-1] - x[1:-1])))
        assert errs[1] < errs[0] / 10

    def test_k_zero_identity(self):
        p = simulate_volterra(HurstOrder(2, 1.3), Grid(1.0, 8), RngStream(1))
        assert differentiate_path(p, 0) is p

    def test_too_rough(self):
        p = simulate_volterra(HurstOrder(2, 1.3), Grid(1.0, 8), RngStream(1))
        with pytest.raises(RoughnessError):
            differentiate_path(p, 2)
        with pytest.raises(DomainError):
            differentiate_path(p, -1)

    def test_derivative_of_integrated_brownian_is_w(self):
        fine = Grid(1.0, 1024)
        dW = RngStream(17).normal(fine.m) * math.sqrt(fine.dt)
        errs = []
        for m in (256, 1024):
            g = Grid(1.0, m)
            p = volterra_from_increments(HurstOrder(2, 1.5), g, coarsen_increments(dW, fine.m // m))
            errs.append(np.max(np.abs(differentiate_path(p).values - p.brownian())))
        assert errs[1] < errs[0]

    @pytest.mark.parametrize("n, H", [(2, 1.5), (2, 1.25), (3, 2.5)])
    def test_derivative_relation_single_path(self, n, H):
        ho = HurstOrder(n, H)
        fine = Grid(1.0, 1024)
        dW = RngStream(99).normal(fine.m) * math.sqrt(fine.dt)
        errs = []
        for m in (256, 1024):
            g = Grid(1.0, m)
            inc = coarsen_increments(dW, fine.m // m)
            d = differentiate_path(volterra_from_increments(ho, g, inc))
            lower = volterra_from_increments(ho.lower(), g, inc)
            errs.append(np.max(np.abs(d.values - lower.values)))
        assert errs[1] < errs[0]


class TestSmoothness:
    @pytest.mark.parametrize("ho", [(2, 1.5), (2, 1.25), (3, 2.3)])
    def test_first_difference_scales_like_dt(self, ho):
        stats_ = []
        for m in (2**8, 2**10, 2**12):
            vals = fft_nfbm_ensemble(ho, Grid(1.0, m), RngStream(12), 20)
            stats_.append(np.mean(max_abs_increment(vals)))
        slopes = -np.diff(np.log(stats_)) / np.log(4)
        assert np.all(slopes > 0.9)

    def test_brownian_differences_scale_like_root_dt(self):
        stats_ = []
        for m in (2**8, 2**12):
            vals = fft_nfbm_ensemble((1, 0.5), Grid(1.0, m), RngStream(12), 20)
            stats_.append(np.mean(max_abs_increment(vals)))
        slope = -math.log(stats_[1] / stats_[0]) / math.log(16)
        assert slope < 0.5

    def test_figure_paths_share_noise(self):
        paths = figure_paths(0.3, Grid(1.0, 256), RngStream(1))
        assert [p.ho.n for p in paths] == [1, 2, 3, 4]
        # central differences of a trapezoid integral are the 1-2-1 average
        x = paths[0].values
        np.testing.assert_allclose(
            differentiate_path(paths[1]).values[1:-1], (x[:-2] + 2 * x[1:-1] + x[2:]) / 4, atol=1e-12
        )
        assert max_abs_increment(paths[3].values) < max_abs_increment(paths[0].values)


@given(st.integers(0, 2**32), st.integers(0, 100))
@settings(max_examples=20, deadline=None)
def test_values_start_at_zero_property(seed, stream):
    p = simulate(HurstOrder(2, 1.4), Grid(1.0, 16), RngStream(seed, stream), "fft")
    assert p.values[0] == 0.0 and np.all(np.isfinite(p.values))
