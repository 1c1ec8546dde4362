"""Sample paths by Volterra discretisation, exact Cholesky and FFT plus integration.

Randomness comes from :class:`RngStream`: Philox (counter based) keyed by
``(seed, stream)`` through :class:`numpy.random.SeedSequence`, with normal
variates from numpy's ziggurat sampler.  Identical ``(seed, stream)``
therefore give bit-identical draws on every platform numpy supports.
"""

import enum
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.linalg import cholesky, LinAlgError

from .covariance import NormalizationMode, cov_matrix
from .errors import ConditioningError, DomainError, EmbeddingError, RoughnessError
from .kernels import Grid, HurstOrder, kernel_matrix


class Method(enum.Enum):
    VOLTERRA = "volterra"
    CHOLESKY = "cholesky"
    FFT_INTEGRATED = "fft"
    DERIVED = "derived"


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream identified by ``(seed, stream)``."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        for name in ("seed", "stream"):
            v = getattr(self, name)
            if int(v) != v or not 0 <= v < 2**64:
                raise DomainError(f"{name} must be an unsigned 64-bit integer, got {v}")

    def generator(self):
        """A fresh generator positioned at the start of the stream."""
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.Philox(ss))

    def normal(self, size):
        return self.generator().standard_normal(size)

    def substream(self, k):
        """Independent child stream number ``k``."""
        return RngStream(self.seed, (self.stream * 1_000_003 + k + 1) % 2**64)


@dataclass(frozen=True, eq=False)
class SamplePath:
    """Process values on a grid, ``values[0] = 0``."""

    grid: Grid
    values: np.ndarray = field(repr=False)
    ho: HurstOrder
    method: Method
    seed: int = 0
    stored_increments: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.m + 1,):
            raise DomainError(f"expected {self.grid.m + 1} values, got shape {v.shape}")
        if v[0] != 0.0:
            raise DomainError("a sample path must start at 0")
        object.__setattr__(self, "values", v)
        if self.stored_increments is not None:
            dW = np.asarray(self.stored_increments, dtype=float)
            if dW.shape != (self.grid.m,):
                raise DomainError("stored increments must have length m")
            object.__setattr__(self, "stored_increments", dW)

    @property
    def times(self):
        return self.grid.points

    def brownian(self):
        """Partial sums of the stored increments (the driving W path)."""
        if self.stored_increments is None:
            return None
        return np.concatenate([[0.0], np.cumsum(self.stored_increments)])


def _increments(grid, rng, paths=None):
    size = grid.m if paths is None else (paths, grid.m)
    return rng.normal(size) * math.sqrt(grid.dt)


def simulate_volterra(ho, grid, rng):
    """``B(t_i) = sum_{j <= i} K[i, j] dW_j`` with i.i.d. ``dW_j ~ N(0, dt)``."""
    return volterra_from_increments(ho, grid, _increments(grid, rng), rng.seed)


def volterra_from_increments(ho, grid, dW, seed=0):
    """Volterra path driven by the given increments."""
    ho = ho if isinstance(ho, HurstOrder) else HurstOrder(*ho)
    values = kernel_matrix(ho, grid).apply(dW)
    return SamplePath(grid, values, ho, Method.VOLTERRA, seed, dW)


def coarsen_increments(dW, factor):
    """Sum consecutive blocks of ``factor`` increments (same W on a coarser grid)."""
    dW = np.asarray(dW, dtype=float)
    if dW.shape[-1] % factor:
        raise DomainError("grid size is not a multiple of the coarsening factor")
    return dW.reshape(dW.shape[:-1] + (-1, factor)).sum(axis=-1)


def volterra_ensemble(ho, grid, rng, paths):
    """``(values, increments)`` for ``paths`` Volterra paths, arrays of shape ``(paths, m+1)`` and ``(paths, m)``."""
    ho = ho if isinstance(ho, HurstOrder) else HurstOrder(*ho)
    dW = _increments(grid, rng, paths)
    return kernel_matrix(ho, grid).apply(dW), dW


def jittered_cholesky(C, start=1e-14, stop=1e-8):
    """Lower Cholesky factor of ``C``, adding ``eps * I`` if needed.

    ``eps`` starts at ``start * trace / m`` and grows tenfold up to
    ``stop * trace / m``; beyond that :class:`ConditioningError` is raised.
    """
    C = np.asarray(C, dtype=float)
    m = C.shape[0]
    try:
        return cholesky(C, lower=True, check_finite=False)
    except LinAlgError:
        pass
    scale = np.trace(C) / m
    if not scale > 0:
        raise ConditioningError("matrix with non-positive trace is not a covariance")
    eps = start * scale
    while eps <= stop * scale * (1 + 1e-9):
        try:
            return cholesky(C + eps * np.eye(m), lower=True, check_finite=False)
        except LinAlgError:
            eps *= 10
    raise ConditioningError(f"Cholesky failed even with jitter {stop:g} * trace/m")


@lru_cache(maxsize=32)
def _cov_factor(ho, grid, mode):
    L = jittered_cholesky(cov_matrix(ho, grid.points[1:], mode))
    L.flags.writeable = False
    return L


def cholesky_ensemble(ho, grid, rng, paths, mode=NormalizationMode.MG_UNIT):
    """Exact Gaussian samples at the grid points, shape ``(paths, m+1)``."""
    ho = ho if isinstance(ho, HurstOrder) else HurstOrder(*ho)
    L = _cov_factor(ho, grid, NormalizationMode.parse(mode))
    z = rng.normal((paths, grid.m))
    vals = z @ L.T
    return np.concatenate([np.zeros((paths, 1)), vals], axis=1)


def simulate_cholesky(ho, grid, rng, mode=NormalizationMode.MG_UNIT):
    """Exact sampling from the closed-form covariance: ``values = L z``."""
    ho = ho if isinstance(ho, HurstOrder) else HurstOrder(*ho)
    values = cholesky_ensemble(ho, grid, rng, 1, mode)[0]
    return SamplePath(grid, values, ho, Method.CHOLESKY, rng.seed)


def fgn_autocovariance(H, k, dt=1.0):
    """``gamma(k) = (|k+1|^2H - 2|k|^2H + |k-1|^2H) / 2 * dt^2H``."""
    k = np.abs(np.asarray(k, dtype=float))
    return 0.5 * ((k + 1) ** (2 * H) - 2 * k ** (2 * H) + np.abs(k - 1) ** (2 * H)) * dt ** (2 * H)


@lru_cache(maxsize=32)
def _embedding_sqrt(H, m):
    gamma = fgn_autocovariance(H, np.arange(m + 1))
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    lam = np.fft.fft(row).real
    if lam.min() < -1e-10 * lam.max():
        raise EmbeddingError(f"circulant embedding has a negative eigenvalue {lam.min():.3e}")
    out = np.sqrt(np.clip(lam, 0.0, None) / row.size)
    out.flags.writeable = False
    return out


def fgn_ensemble(H, grid, rng, paths):
    """Fractional Gaussian noise by circulant embedding (Davies-Harte), shape ``(paths, m)``."""
    if not 0.0 < H < 1.0:
        raise DomainError(f"H must lie in (0, 1), got {H}")
    m = grid.m
    sq = _embedding_sqrt(float(H), m)
    z = rng.normal((paths, 2, 2 * m))
    w = np.fft.fft(sq * (z[:, 0] + 1j * z[:, 1]), axis=-1)
    return w.real[:, :m] * grid.dt**H


def fbm_fft_ensemble(H, grid, rng, paths):
    """fBm values ``(paths, m+1)`` as cumulative sums of FFT noise."""
    noise = fgn_ensemble(H, grid, rng, paths)
    return np.concatenate([np.zeros((paths, 1)), np.cumsum(noise, axis=1)], axis=1)


def simulate_fgn_fft(H, grid, rng):
    """Standard fBm path (order 1) via circulant embedding of its increments."""
    values = fbm_fft_ensemble(H, grid, rng, 1)[0]
    return SamplePath(grid, values, HurstOrder(1, H), Method.FFT_INTEGRATED, rng.seed)


def trapezoid_cumulative(values, dt):
    """Cumulative trapezoidal integral along the last axis, starting at 0."""
    v = np.asarray(values, dtype=float)
    inc = 0.5 * dt * (v[..., 1:] + v[..., :-1])
    zero = np.zeros(v.shape[:-1] + (1,))
    return np.concatenate([zero, np.cumsum(inc, axis=-1)], axis=-1)


def fft_nfbm_ensemble(ho, grid, rng, paths):
    """Base fBm by FFT then ``n - 1`` trapezoidal integrations."""
    ho = ho if isinstance(ho, HurstOrder) else HurstOrder(*ho)
    vals = fbm_fft_ensemble(ho.base, grid, rng, paths)
    for _ in range(ho.n - 1):
        vals = trapezoid_cumulative(vals, grid.dt)
    return vals


def simulate_fft(ho, grid, rng):
    """One FFT-integrated path of order ``ho``."""
    ho = ho if isinstance(ho, HurstOrder) else HurstOrder(*ho)
    values = fft_nfbm_ensemble(ho, grid, rng, 1)[0]
    return SamplePath(grid, values, ho, Method.FFT_INTEGRATED, rng.seed)


def simulate(ho, grid, rng, method="fft", mode=NormalizationMode.MG_UNIT):
    """Dispatch on ``method`` in ``{"volterra", "cholesky", "fft"}``."""
    method = Method(method) if not isinstance(method, Method) else method
    if method is Method.VOLTERRA:
        return simulate_volterra(ho, grid, rng)
    if method is Method.CHOLESKY:
        return simulate_cholesky(ho, grid, rng, mode)
    if method is Method.FFT_INTEGRATED:
        return simulate_fft(ho, grid, rng)
    raise DomainError(f"cannot simulate with method {method}")


def integrate_path(path):
    """Cumulative trapezoid integral; raises the order to ``(n+1, H+1)``."""
    values = trapezoid_cumulative(path.values, path.grid.dt)
    return replace(path, values=values, ho=path.ho.raised())


def differentiate_path(path, k=1):
    """``k``-fold central differences (one-sided at the ends); lowers the order by ``k``.

    ``k >= n`` asks for a derivative that is not a function and raises
    :class:`RoughnessError`.  The value at ``t = 0`` is pinned to 0.
    """
    if int(k) != k or k < 0:
        raise DomainError(f"k must be a non-negative integer, got {k}")
    if k == 0:
        return path
    if k >= path.ho.n:
        raise RoughnessError(f"an order-{path.ho.n} path is only {path.ho.n - 1} times differentiable")
    v = path.values
    for _ in range(k):
        v = np.gradient(v, path.grid.dt)
    v[0] = 0.0  # the lower-order process also starts at 0
    ho = HurstOrder(path.ho.n - k, path.ho.H - k)
    return replace(path, values=v, ho=ho, method=Method.DERIVED)


def figure_paths(H, grid, rng, orders=4):
    """Orders ``1..orders`` built from one FFT fBm path of base index ``H``.

    Each order is the trapezoidal integral of the previous one, so all panels
    share the same driving noise.
    """
    base = simulate_fgn_fft(H, grid, rng)
    out = [base]
    for _ in range(orders - 1):
        out.append(integrate_path(out[-1]))
    return out


def max_abs_increment(values):
    """Smoothness proxy ``max_i |x_{i+1} - x_i|`` (along the last axis)."""
    return np.max(np.abs(np.diff(values, axis=-1)), axis=-1)
