"""Dual operator k*, the H-inner product and Wiener integrals of step functions.

For a step function ``f = sum_k a_k 1_(b_{k-1}, b_k]`` both forms of the
dual operator telescope into kernel differences,

    (k* f)(u) = sum_k a_k [k(b_k, u) - k(max(b_{k-1}, u), u)],   k(u, u) := 0,

with ``k = k_H`` for order 1 (by integrating the t-derivative cell by cell)
and ``k = k^(n)`` for ``n >= 2`` (because ``k^(n)`` is the running integral of
``k^(n-1)`` in its first argument).  No derivative singularity is ever
integrated numerically on this path.
"""

from dataclasses import dataclass

import numpy as np

from . import quadrature as quad
from .covariance import NormalizationMode, nfbm_cov_closed, nfbm_var
from .errors import DomainError, PreconditionError, UnsupportedOrderError
from .kernels import HurstOrder, cell_averages, kernel_values, mg_kernel_dt


@dataclass(frozen=True, eq=False)
class StepFunction:
    """``f(u) = values[k]`` on ``(breakpoints[k], breakpoints[k+1]]``, 0 elsewhere."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        a = np.asarray(self.values, dtype=float)
        if b.ndim != 1 or b.size < 2:
            raise DomainError("a step function needs at least one interval")
        if a.shape != (b.size - 1,):
            raise DomainError("need one value per interval")
        if b[0] != 0.0 or np.any(np.diff(b) <= 0):
            raise DomainError("breakpoints must start at 0 and increase strictly")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", a)

    @classmethod
    def indicator(cls, t):
        """``1_[0, t)``."""
        return cls([0.0, t], [1.0])

    @property
    def support_end(self):
        return self.breakpoints[-1]

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        k = np.searchsorted(self.breakpoints, u, side="left") - 1
        inside = (k >= 0) & (k < self.values.size) & (u > 0)
        return np.where(inside, self.values[np.clip(k, 0, self.values.size - 1)], 0.0)

    def combine(self, other, alpha=1.0, beta=1.0):
        """``alpha * self + beta * other`` on the merged breakpoints."""
        b = np.union1d(self.breakpoints, other.breakpoints)
        mids = 0.5 * (b[1:] + b[:-1])
        return StepFunction(b, alpha * self(mids) + beta * other(mids))

    def l2_norm_sq(self):
        return float(np.sum(self.values**2 * np.diff(self.breakpoints)))


def _check_support(f, T):
    if f.support_end > T * (1 + 1e-12):
        raise DomainError(f"step function extends beyond the horizon T={T}")


class DualImage:
    """``u -> (k* f)(u)`` on ``(0, T)`` for a step function ``f``."""

    def __init__(self, f, kernel, T, breakpoints=None):
        self.f = f
        self.T = float(T)
        self._kernel = kernel
        self.breakpoints = np.asarray(breakpoints if breakpoints is not None else f.breakpoints)

    def values(self, u, anchor=None, off=None):
        """Vectorised evaluation without the domain check (0 outside the support).

        When ``u = anchor - off`` with ``anchor`` a breakpoint, passing both
        keeps the distance to that breakpoint exact.
        """
        u = np.asarray(u, dtype=float)
        b, a = self.f.breakpoints, self.f.values
        out = np.zeros(u.shape)

        def k(t):
            gap = t - u
            if anchor is not None:
                gap = np.where(anchor == t, off, gap)
            return self._kernel(t, u, gap)

        for j in range(a.size):
            if a[j] == 0.0:
                continue
            out += a[j] * (k(b[j + 1]) - k(b[j]))
        return out

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(u <= 0) or np.any(u >= self.T):
            raise DomainError(f"dual operator is evaluated on (0, {self.T})")
        out = self.values(u)
        return out if out.ndim else float(out)


def _total_kernel(ho):
    def k(t, u, gap=None):
        return kernel_values(ho, np.broadcast_to(t, np.shape(u)), u, gap=gap)

    return k


def dual_operator_fbm(f, H, T, form="general"):
    """``k_H^* f`` for the order-1 kernel.

    ``form="general"`` evaluates ``k_H(T, u) f(u) + int_u^T (f(v) - f(u)) dk_H(v, u)``,
    which for step functions telescopes exactly.  ``form="simplified"`` is
    ``int_u^T f(v) dk_H(v, u)/dv dv`` (valid for ``H > 1/2`` only), done by
    Gauss-Jacobi quadrature of the analytic derivative.
    """
    if not 0.0 < H < 1.0:
        raise DomainError(f"H must lie in (0, 1), got {H}")
    _check_support(f, T)
    ho = HurstOrder(1, H)
    if form == "general":
        return DualImage(f, _total_kernel(ho), T)
    if form != "simplified":
        raise DomainError(f"unknown form {form!r}")
    if H <= 0.5:
        raise DomainError("the simplified form needs H > 1/2")
    return _SimplifiedFbm(f, H, T)


class _SimplifiedFbm(DualImage):
    def __init__(self, f, H, T, p=32):
        super().__init__(f, None, T)
        self.H = H
        self.p = p

    def values(self, u, anchor=None, off=None):
        u = np.asarray(u, dtype=float)
        shape = u.shape
        uf = u.ravel()
        b, a = self.f.breakpoints, self.f.values
        out = np.zeros(uf.size)
        H = self.H
        for k in range(a.size):
            lo = np.maximum(b[k], uf)
            hi = np.full(uf.size, b[k + 1])
            live = hi > lo
            if not np.any(live) or a[k] == 0.0:
                continue
            uu = uf[live]
            own = lo[live] == uu  # cell contains u: weight (v - u)**(H - 3/2)

            def g_own(v, idx, off):
                w = uu_own[idx][:, None]
                return mg_kernel_dt(H, v, w) / off ** (H - 1.5)

            def g_far(v, idx, off):
                return mg_kernel_dt(H, v, uu_far[idx][:, None])

            res = np.zeros(uu.size)
            if np.any(own):
                uu_own = uu[own]
                res[own] = quad.integrate_from_left(g_own, uu_own, hi[live][own], H - 1.5, 1, p=self.p)
            far = ~own
            if np.any(far):
                uu_far = uu[far]
                lo_far = lo[live][far]
                lv = quad.levels_for(hi[live][far] - lo_far, lo_far - uu_far)
                res[far] = quad.integrate_from_left(g_far, lo_far, hi[live][far], 0.0, lv, p=self.p)
            out[live] += a[k] * res
        return out.reshape(shape)


def dual_operator_nfbm(f, ho, T):
    """``u -> int_u^T f(t) k^(n-1)_{H-1}(t, u) dt`` for ``n >= 2``.

    Equal to the telescoped ``k^(n)`` differences of the module docstring.
    Order 1 raises :class:`UnsupportedOrderError`; use :func:`dual_operator_fbm`.
    """
    ho = ho if isinstance(ho, HurstOrder) else HurstOrder(*ho)
    if ho.n == 1:
        raise UnsupportedOrderError("for n = 1 use dual_operator_fbm; the n >= 2 form does not hold there")
    _check_support(f, T)
    return DualImage(f, _total_kernel(ho), T)


def dual_operator(f, ho, T):
    """Order-agnostic ``k^(n)*f``."""
    ho = ho if isinstance(ho, HurstOrder) else HurstOrder(*ho)
    if ho.n == 1:
        return dual_operator_fbm(f, ho.H, T)
    return dual_operator_nfbm(f, ho, T)


def inner_product_L2(F, G, ho, tol=1e-10):
    """``int_0^T F(u) G(u) du`` for two dual images of the same order.

    Integrated cell by cell between the merged breakpoints.  Each cell is
    split in half: the left half is graded towards its left end (where the
    first cell carries the ``u**(-|2h-1|)`` behaviour at 0), the right half
    towards the breakpoint, where ``k^(n)(b, u)`` has the exponent
    ``n - 1 + h - 1/2``.
    """
    ho = ho if isinstance(ho, HurstOrder) else HurstOrder(*ho)
    edges = np.union1d(F.breakpoints, G.breakpoints)
    edges = edges[edges <= max(F.T, G.T)]
    lo, hi = edges[:-1], edges[1:]
    mid = 0.5 * (lo + hi)
    h = ho.base
    a0 = -abs(2 * h - 1)

    def prod(u, anchor=None, off=None):
        return F.values(u, anchor, off) * G.values(u, anchor, off)

    def g_left0(v, idx, off):
        return prod(v) / off**a0

    beta = ho.n - 1 + h - 0.5
    aR = 2 * beta if beta < 0 else 0.0  # only the order-1, h < 1/2 case is unbounded

    def g(v, idx, off):
        return prod(v)

    def g_right(v, idx, off):
        return prod(v, hi[idx][:, None], off) / off**aR

    def run(p):
        total = 0.0
        first = lo == 0.0
        total += np.sum(quad.integrate_from_left(g_left0, lo[first], mid[first], a0, 20, p=p))
        total += np.sum(quad.integrate_from_left(g, lo[~first], mid[~first], 0.0, 1, p=p))
        total += np.sum(quad.integrate_from_right(g_right, mid, hi, aR, 20, p=p))
        return np.array([total])

    return float(quad.adaptive(run, p0=16, tol=tol, max_nodes=256)[0])


def l2_norm_sq(F, ho):
    """``||k* f||^2`` in ``L^2(0, T)``."""
    return inner_product_L2(F, F, ho)


def inner_product_H(f, g, ho, mode=NormalizationMode.MG_UNIT):
    """``<f, g>_H`` by bilinear expansion in indicators, ``<1_t, 1_s> = r(t, s)``."""
    ho = ho if isinstance(ho, HurstOrder) else HurstOrder(*ho)
    bf, af = f.breakpoints, f.values
    bg, ag = g.breakpoints, g.values
    # F(t, s) = r(t, s) on the breakpoint lattice, zero at the origin
    R = nfbm_cov_closed(ho, bf[:, None], bg[None, :], mode)
    cell = R[1:, 1:] - R[1:, :-1] - R[:-1, 1:] + R[:-1, :-1]
    return float(af @ cell @ ag)


def embedding_constant(ho, T):
    """``C`` with ``||f||_H <= C ||f||_L2`` for ``n >= 2``.

    Cauchy-Schwarz on ``k* f(u) = int f(t) k^(n-1)(t, u) dt`` gives
    ``C^2 = int_0^T int_0^t k^(n-1)(t, u)^2 du dt``, the time integral of the
    order ``n - 1`` variance.
    """
    ho = ho if isinstance(ho, HurstOrder) else HurstOrder(*ho)
    if ho.n == 1:
        raise UnsupportedOrderError("the L2 embedding holds for n >= 2")
    lower = ho.lower()
    v1 = nfbm_var(lower, 1.0)
    return float(np.sqrt(v1 * T ** (2 * lower.H + 1) / (2 * lower.H + 1)))


def wiener_weights(f, ho, grid):
    """Weights ``w_j`` with ``int f dB = sum_j w_j dW_j`` on ``grid``.

    ``w_j`` is the exact average of ``k* f`` over cell ``j``; for
    ``f = 1_[0, t_i)`` this reproduces the kernel matrix row and hence
    ``B(t_i)`` exactly.
    """
    ho = ho if isinstance(ho, HurstOrder) else HurstOrder(*ho)
    _check_support(f, grid.T)
    edges = grid.points
    w = np.zeros(grid.m)
    b, a = f.breakpoints, f.values
    for k in range(a.size):
        if a[k] == 0.0:
            continue
        w += a[k] * cell_averages(ho, b[k + 1], edges)
        if b[k] > 0:
            w -= a[k] * cell_averages(ho, b[k], edges)
    return w


def wiener_integral_nfbm(f, path):
    """``int f dB^(n) = int (k* f) dW`` discretised with exact cell averages of ``k* f``."""
    if path.stored_increments is None:
        raise PreconditionError("the path does not carry its driving increments")
    return float(wiener_weights(f, path.ho, path.grid) @ path.stored_increments)
