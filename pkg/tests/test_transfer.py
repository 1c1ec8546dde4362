import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad as squad

from nfbm import Grid, HurstOrder, StepFunction
from nfbm.covariance import kernel_product_integral, nfbm_cov_closed, nfbm_var
from nfbm.errors import DomainError, PreconditionError, UnsupportedOrderError
from nfbm.kernels import kernel_matrix, mg_kernel, nfbm_kernel
from nfbm.simulation import RngStream, simulate_cholesky, simulate_volterra, volterra_ensemble
from nfbm.transfer import (
    dual_operator,
    dual_operator_fbm,
    dual_operator_nfbm,
    embedding_constant,
    inner_product_H,
    inner_product_L2,
    l2_norm_sq,
    wiener_integral_nfbm,
    wiener_weights,
)

from .conftest import random_step, three_se


class TestStepFunction:
    def test_evaluation(self):
        f = StepFunction([0.0, 0.5, 1.0], [2.0, -1.0])
        np.testing.assert_array_equal(f(np.array([0.0, 0.25, 0.5, 0.75, 1.0, 1.5])), [0, 2, 2, -1, -1, 0])

    def test_indicator(self):
        f = StepFunction.indicator(0.4)
        assert f(0.3) == 1.0 and f(0.5) == 0.0

    @pytest.mark.parametrize("b, a", [([0.0], []), ([0.1, 1.0], [1.0]), ([0.0, 0.5, 0.5], [1, 2]), ([0.0, 1.0], [1, 2])])
    def test_invalid(self, b, a):
        with pytest.raises(DomainError):
            StepFunction(b, a)

    def test_combine_and_norm(self):
        f = StepFunction([0.0, 0.5, 1.0], [1.0, 2.0])
        g = StepFunction([0.0, 0.25, 1.0], [3.0, 0.0])
        h = f.combine(g, 2.0, -1.0)
        u = np.array([0.1, 0.3, 0.7])
        np.testing.assert_allclose(h(u), 2 * f(u) - g(u))
        assert f.l2_norm_sq() == pytest.approx(0.5 + 2.0)


class TestDualFbm:
    def test_brownian_identity(self, rng):
        f = random_step(rng)
        u = np.linspace(0.01, 0.99, 37)
        np.testing.assert_allclose(dual_operator_fbm(f, 0.5, 1.0)(u), f(u), atol=1e-14)

    @pytest.mark.parametrize("H", [0.3, 0.75])
    def test_indicator_gives_kernel(self, H):
        F = dual_operator_fbm(StepFunction.indicator(0.6), H, 1.0)
        u = np.array([0.1, 0.3, 0.59])
        np.testing.assert_allclose(F(u), mg_kernel(H, 0.6, u), rtol=1e-13)
        np.testing.assert_array_equal(F(np.array([0.6, 0.8])), 0.0)

    @pytest.mark.parametrize("H", [0.25, 0.75])
    def test_norm_of_constant_is_variance(self, H):
        f = StepFunction([0.0, 1.0], [1.0])
        assert l2_norm_sq(dual_operator_fbm(f, H, 1.0), HurstOrder(1, H)) == pytest.approx(1.0, rel=1e-4)

    def test_simplified_matches_general(self, rng):
        for _ in range(5):
            f = random_step(rng, pieces=5)
            u = rng.uniform(0.01, 0.99, 20)
            G = dual_operator_fbm(f, 0.7, 1.0)(u)
            S = dual_operator_fbm(f, 0.7, 1.0, form="simplified")(u)
            np.testing.assert_allclose(S, G, rtol=1e-6, atol=1e-10)

    def test_simplified_needs_smooth_base(self):
        with pytest.raises(DomainError):
            dual_operator_fbm(StepFunction.indicator(1.0), 0.3, 1.0, form="simplified")

    @pytest.mark.parametrize("u", [0.0, 1.0, -0.1])
    def test_domain(self, u):
        with pytest.raises(DomainError):
            dual_operator_fbm(StepFunction.indicator(0.5), 0.3, 1.0)(u)

    def test_support_beyond_horizon(self):
        with pytest.raises(DomainError):
            dual_operator_fbm(StepFunction.indicator(2.0), 0.3, 1.0)


class TestDualNfbm:
    def test_order_one_rejected(self):
        with pytest.raises(UnsupportedOrderError):
            dual_operator_nfbm(StepFunction.indicator(1.0), (1, 0.4), 1.0)

    def test_integrated_brownian(self):
        F = dual_operator_nfbm(StepFunction([0.0, 2.0], [1.0]), (2, 1.5), 2.0)
        u = np.linspace(0.05, 1.95, 9)
        np.testing.assert_allclose(F(u), 2.0 - u, atol=1e-14)
        assert l2_norm_sq(F, HurstOrder(2, 1.5)) == pytest.approx(8 / 3, rel=1e-10)

    @pytest.mark.parametrize("ho", [(2, 1.25), (3, 2.6)])
    def test_indicator_gives_kernel(self, ho):
        F = dual_operator_nfbm(StepFunction.indicator(0.7), ho, 1.0)
        for u in (0.05, 0.4, 0.69):
            assert F(u) == pytest.approx(nfbm_kernel(HurstOrder(*ho), 0.7, u), rel=1e-6)

    def test_against_defining_integral(self, rng):
        # u -> int_u^T f(t) k^(n-1)(t, u) dt by plain adaptive quadrature
        ho = HurstOrder(2, 1.3)
        low = ho.lower()
        f = random_step(rng)
        F = dual_operator_nfbm(f, ho, 1.0)
        g = 1.0 / (low.H + 0.5)  # t = u + x^g removes the (t - u)^(H - 1/2) factor

        def piece(u, a, b):
            if a > u:
                return squad(lambda t: f(t) * mg_kernel(low.H, t, u), a, b, epsabs=0, epsrel=1e-11, limit=200)[0]
            return squad(
                lambda x: f(u + x**g) * mg_kernel(low.H, u + x**g, u) * g * x ** (g - 1),
                0.0, (b - u) ** (low.H + 0.5), epsabs=0, epsrel=1e-11, limit=200,
            )[0]

        for u in (0.1, 0.5, 0.8):
            pts = [u] + [b for b in f.breakpoints if b > u]
            direct = sum(piece(u, a, b) for a, b in zip(pts[:-1], pts[1:]))
            assert F(u) == pytest.approx(direct, rel=1e-7, abs=1e-12)

    @given(st.floats(-3, 3), st.floats(-3, 3))
    @settings(max_examples=15, deadline=None)
    def test_linearity(self, alpha, beta):
        rng = np.random.default_rng(5)
        ho = HurstOrder(2, 1.7)
        f, g = random_step(rng), random_step(rng)
        u = np.linspace(0.03, 0.97, 10)
        lhs = dual_operator(f.combine(g, alpha, beta), ho, 1.0)(u)
        rhs = alpha * dual_operator(f, ho, 1.0)(u) + beta * dual_operator(g, ho, 1.0)(u)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)


class TestInnerProducts:
    @pytest.mark.parametrize("ho", [(1, 0.3), (2, 1.25), (3, 2.5)])
    def test_indicators(self, ho):
        t, s = 0.8, 0.35
        assert inner_product_H(StepFunction.indicator(t), StepFunction.indicator(t), ho) == pytest.approx(
            nfbm_var(ho, t), rel=1e-13
        )
        assert inner_product_H(StepFunction.indicator(t), StepFunction.indicator(s), ho) == pytest.approx(
            nfbm_cov_closed(ho, t, s), rel=1e-13
        )

    @pytest.mark.parametrize("ho", [(2, 1.25), (2, 1.75), (3, 2.5)])
    def test_isometry(self, ho):
        rng = np.random.default_rng(hash(ho) % 2**32)
        for _ in range(5):
            f = random_step(rng, pieces=4)
            lhs = inner_product_H(f, f, ho)
            rhs = l2_norm_sq(dual_operator(f, ho, 1.0), HurstOrder(*ho))
            assert abs(lhs - rhs) <= 1e-4 * lhs

    def test_polarised_isometry(self, rng):
        ho = HurstOrder(2, 1.25)
        f, g = random_step(rng), random_step(rng)
        F, G = dual_operator(f, ho, 1.0), dual_operator(g, ho, 1.0)
        assert inner_product_L2(F, G, ho) == pytest.approx(inner_product_H(f, g, ho), rel=1e-4, abs=1e-10)

    @pytest.mark.parametrize("ho", [(2, 1.25), (2, 1.75), (3, 2.5)])
    def test_embedding_constant_against_quadrature(self, ho):
        # C^2 = int_0^T int_0^t k^(n-1)(t, u)^2 du dt
        low = HurstOrder(*ho).lower()
        inner = lambda t: float(kernel_product_integral(low, t, t, t))
        C2, _ = squad(inner, 0.0, 1.0, epsabs=0, epsrel=1e-8)
        assert embedding_constant(ho, 1.0) ** 2 == pytest.approx(C2, rel=1e-6)

    @pytest.mark.parametrize("ho", [(2, 1.25), (2, 1.75), (3, 2.5)])
    def test_embedding_inequality(self, ho, rng):
        C = embedding_constant(ho, 1.0)
        for _ in range(20):
            f = random_step(rng, pieces=int(rng.integers(1, 8)))
            assert math.sqrt(inner_product_H(f, f, ho)) <= C * math.sqrt(f.l2_norm_sq())

    def test_embedding_needs_higher_order(self):
        with pytest.raises(UnsupportedOrderError):
            embedding_constant((1, 0.7), 1.0)


class TestWienerIntegral:
    @pytest.mark.parametrize("ho", [(1, 0.3), (2, 1.25), (3, 2.4)])
    def test_indicator_reproduces_path(self, ho):
        g = Grid(1.0, 64)
        path = simulate_volterra(ho, g, RngStream(2))
        for i in (5, 32, 64):
            f = StepFunction.indicator(g.points[i])
            assert wiener_integral_nfbm(f, path) == pytest.approx(path.values[i], rel=1e-10, abs=1e-13)

    def test_weights_equal_kernel_row(self):
        ho, g = HurstOrder(2, 1.3), Grid(1.0, 32)
        w = wiener_weights(StepFunction.indicator(g.points[20]), ho, g)
        K = kernel_matrix(ho, g).entries
        np.testing.assert_allclose(w[:20], K[19, :20], rtol=1e-12)
        np.testing.assert_array_equal(w[20:], 0.0)

    def test_zero_function(self):
        path = simulate_volterra((2, 1.3), Grid(1.0, 16), RngStream(2))
        assert wiener_integral_nfbm(StepFunction([0.0, 1.0], [0.0]), path) == 0.0

    def test_needs_increments(self):
        path = simulate_cholesky((2, 1.3), Grid(1.0, 16), RngStream(2))
        with pytest.raises(PreconditionError):
            wiener_integral_nfbm(StepFunction.indicator(0.5), path)

    @pytest.mark.parametrize("ho", [(2, 1.25), (3, 2.5)])
    def test_monte_carlo_variance(self, ho, rng):
        g = Grid(1.0, 256)
        f = random_step(rng, pieces=4)
        w = wiener_weights(f, ho, g)
        _, dW = volterra_ensemble(ho, g, RngStream(77), 10_000)
        x = dW @ w
        target = inner_product_H(f, f, ho)
        assert abs(np.mean(x**2) - target) < three_se(x**2)
