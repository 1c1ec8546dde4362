"""Molchan-Golosov kernel, the recursive nth-order kernels and their grid discretisation.

Conventions
-----------
``h = H - n + 1`` is the base index in (0, 1).  The base kernel is
homogeneous of degree ``h - 1/2``, so everything reduces to functions of the
ratio ``x = s / t`` on (0, 1):

    k_h(t, s) = t**(h - 1/2) * psi(s / t)

``psi`` and its antiderivative ``Psi(y) = int_0^y psi`` have closed forms in
regularised incomplete beta functions.  Those closed forms are what make a
1024-point kernel matrix cheap.  Functions taking ``(y, yc)`` expect
``yc = 1 - y`` computed by the caller without cancellation.

Higher orders use the repeated-integration form

    k_H^(n)(t, u) = int_u^t (t - s)**(n-2) / (n-2)! * k_h(s, u) ds,   n >= 2,

which follows from the one-step recursion by Fubini.
"""

import math
import os
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import betainc

from . import quadrature as quad
from .errors import ConditioningError, DomainError, SingularMatrixError
from .special import beta_fn, mg_constant


@dataclass(frozen=True)
class HurstOrder:
    """Order ``n >= 1`` and Hurst index ``H`` in ``(n - 1, n)``."""

    n: int
    H: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"order n must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "H", float(self.H))
        if not self.n - 1 < self.H < self.n:
            raise DomainError(
                f"H={self.H} is outside the valid interval ({self.n - 1}, {self.n}) for order n={self.n}"
            )

    @property
    def base(self):
        """Base Hurst index ``H - n + 1`` of the underlying fBm."""
        return self.H - self.n + 1

    def lower(self):
        """The order of the derivative process, ``(n - 1, H - 1)``."""
        if self.n == 1:
            raise DomainError("order 1 has no lower order")
        return HurstOrder(self.n - 1, self.H - 1)

    def raised(self):
        return HurstOrder(self.n + 1, self.H + 1)


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``t_i = i T / m``, ``i = 0..m``."""

    T: float
    m: int

    def __post_init__(self):
        if not self.T > 0:
            raise DomainError(f"horizon T must be positive, got {self.T}")
        if int(self.m) != self.m or self.m < 1:
            raise DomainError(f"number of steps m must be a positive integer, got {self.m}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "m", int(self.m))

    @property
    def dt(self):
        return self.T / self.m

    @property
    def points(self):
        return np.arange(self.m + 1) * self.dt

    def index_of(self, t, tol=1e-9):
        """Index of grid point ``t``; raises if ``t`` is not on the grid."""
        i = int(round(t / self.dt))
        if i < 0 or i > self.m or abs(i * self.dt - t) > tol * max(self.T, 1.0):
            raise DomainError(f"t={t} is not a grid point of {self}")
        return i


# --------------------------------------------------------------------------
# closed forms for the base kernel in the ratio variable
# --------------------------------------------------------------------------

def _yJ(h, y, yc, power):
    """``y**power * int_y^1 w**(-2h) (1-w)**(h-1/2) dw``.

    For ``h > 1/2`` the first beta parameter is negative; one integration by
    parts moves it into the valid range.
    """
    a = 1.0 - 2.0 * h
    b = h + 0.5
    if h < 0.5:
        return y**power * (beta_fn(a, b) * betainc(b, a, yc))
    with np.errstate(divide="ignore", invalid="ignore"):
        first = np.where(y > 0, -(y ** (power + a)) * yc ** (b - 1.0) / a, 0.0)
    return first + (b - 1.0) / a * beta_fn(a + 1.0, b - 1.0) * y**power * betainc(b - 1.0, a + 1.0, yc)


def psi(h, x, xc):
    """``k_h(1, x)`` for ``x`` in (0, 1)."""
    x = np.asarray(x, dtype=float)
    xc = np.asarray(xc, dtype=float)
    if h == 0.5:
        return np.ones(np.broadcast_shapes(x.shape, xc.shape))
    d = mg_constant(h)
    return d * (x ** (0.5 - h) * xc ** (h - 0.5) - (h - 0.5) * _yJ(h, x, xc, h - 0.5))


def psi_reduced(h, x, xc):
    """``psi(x) / (1 - x)**(h - 1/2)``; smooth up to ``x = 1``."""
    x = np.asarray(x, dtype=float)
    xc = np.asarray(xc, dtype=float)
    if h == 0.5:
        return np.ones(np.broadcast_shapes(x.shape, xc.shape))
    d = mg_constant(h)
    return d * (x ** (0.5 - h) - (h - 0.5) * _yJ(h, x, xc, h - 0.5) / xc ** (h - 0.5))


def Psi(h, y, yc):
    """``int_0^y psi``."""
    y = np.asarray(y, dtype=float)
    if h == 0.5:
        return y + 0.0 * np.asarray(yc)
    p, q = 1.5 - h, h + 0.5
    d = mg_constant(h)
    return d / q * (beta_fn(p, q) * betainc(p, q, y) - (h - 0.5) * _yJ(h, y, yc, q))


def Psi_tail(h, y, yc):
    """``int_y^1 psi``, accurate as ``y -> 1``."""
    yc = np.asarray(yc, dtype=float)
    if h == 0.5:
        return yc + 0.0 * np.asarray(y)
    p, q = 1.5 - h, h + 0.5
    d = mg_constant(h)
    return d / q * (beta_fn(p, q) * betainc(q, p, yc) + (h - 0.5) * _yJ(h, y, yc, q))


def Psi_tail_reduced(h, y, yc):
    """``Psi_tail(y) / (1 - y)**(h + 1/2)``; smooth up to ``y = 1``."""
    yc = np.asarray(yc, dtype=float)
    return Psi_tail(h, y, yc) / yc ** (h + 0.5)


def Psi_total(h):
    """``int_0^1 psi``."""
    p, q = 1.5 - h, h + 0.5
    return mg_constant(h) * beta_fn(p, q) / q


def _Psi_diff(h, lo, lo_c, hi, hi_c):
    """``Psi(hi) - Psi(lo)`` choosing head or tail form to avoid cancellation."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    upper = lo > 0.5
    out = np.empty(np.broadcast_shapes(lo.shape, hi.shape))
    lo_b, lo_cb, hi_b, hi_cb = np.broadcast_arrays(lo, lo_c, hi, hi_c)
    if np.any(upper):
        out[upper] = Psi_tail(h, lo_b[upper], lo_cb[upper]) - Psi_tail(h, hi_b[upper], hi_cb[upper])
    low = ~upper
    if np.any(low):
        out[low] = Psi(h, hi_b[low], hi_cb[low]) - Psi(h, lo_b[low], lo_cb[low])
    return out


# --------------------------------------------------------------------------
# pointwise kernels
# --------------------------------------------------------------------------

def _check_base(H):
    if not 0.0 < H < 1.0:
        raise DomainError(f"H must lie in (0, 1), got {H}")


def _check_volterra(t, s):
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0) or np.any(s >= t):
        raise DomainError("kernel arguments must satisfy 0 < s < t")
    return t, s


def mg_kernel(H, t, s):
    r"""Molchan-Golosov kernel ``k_H(t, s)``, ``0 < s < t``.

    .. math::
        k_H(t,s) = d_H\Big[(t/s)^{H-1/2}(t-s)^{H-1/2}
            - (H-\tfrac12) s^{1/2-H}\int_s^t z^{H-3/2}(z-s)^{H-1/2}dz\Big]

    The inner integral is evaluated in closed form (incomplete beta).
    Vectorised in ``t`` and ``s``.
    """
    _check_base(H)
    t, s = _check_volterra(t, s)
    return _mg_values(H, t, s)


def _mg_values(h, t, s):
    return t ** (h - 0.5) * psi(h, s / t, (t - s) / t)


def mg_kernel_dt(H, t, s):
    """Partial derivative of ``k_H(t, s)`` in ``t``.

    ``d_H (H - 1/2) (t/s)**(H - 1/2) (t - s)**(H - 3/2)``
    """
    _check_base(H)
    t, s = _check_volterra(t, s)
    return mg_constant(H) * (H - 0.5) * (t / s) ** (H - 0.5) * (t - s) ** (H - 1.5)


def _cauchy_weight(n, t, s):
    r = n - 2
    return (t - s) ** r / math.factorial(r)


def _nfbm_values(ho, t, u, p=16, gap=None):
    """``k^(n)(t, u)`` for ``0 < u < t`` (flat arrays), fixed rule with ``p`` nodes per panel.

    ``gap`` is ``t - u`` when the caller knows it more accurately than the
    rounded difference.
    """
    h = ho.base
    if ho.n == 1:
        gap = t - u if gap is None else gap
        return t ** (h - 0.5) * psi(h, u / t, gap / t)

    def g(s, idx, off):
        tt = t[idx][:, None]
        uu = u[idx][:, None]
        return _cauchy_weight(ho.n, tt, s) * psi_reduced(h, uu / s, off / s)

    levels = quad.levels_for(t - u, u)
    return quad.integrate_from_left(g, u, t, h - 0.5, levels, p=p)


def nfbm_kernel(ho, t, u, tol=1e-8):
    """Volterra kernel ``k_H^(n)(t, u)`` of the nth-order fBm, ``0 < u < t``.

    Order 1 is :func:`mg_kernel`.  For ``n >= 2`` a single quadrature over
    ``s`` in ``(u, t)`` with weight ``(s - u)**(h - 1/2)``, panels graded
    towards ``u`` and the node count doubled until the relative change drops
    below ``tol``.
    """
    if not isinstance(ho, HurstOrder):
        ho = HurstOrder(*ho)
    t, u = _check_volterra(t, u)
    shape = np.broadcast_shapes(t.shape, u.shape)
    tf = np.broadcast_to(t, shape).ravel()
    uf = np.broadcast_to(u, shape).ravel()
    if ho.n == 1:
        return _mg_values(ho.base, tf, uf).reshape(shape)
    out = quad.adaptive(lambda p: _nfbm_values(ho, tf, uf, p), p0=16, tol=tol)
    return out.reshape(shape)


def kernel_values(ho, t, u, p=24, gap=None):
    """Like :func:`nfbm_kernel` but total: returns 0 where ``u >= t`` or ``u <= 0``.

    ``gap`` optionally supplies ``t - u`` exactly (see :func:`_nfbm_values`).
    """
    t, u = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(u, dtype=float))
    gap = t - u if gap is None else np.broadcast_to(np.asarray(gap, dtype=float), t.shape)
    out = np.zeros(t.shape)
    ok = (u > 0) & (gap > 0)
    if np.any(ok):
        out[ok] = _nfbm_values(ho, t[ok], u[ok], p=p, gap=gap[ok])
    return out


# --------------------------------------------------------------------------
# cell integrals  int_a^b k^(n)(t, u) du
# --------------------------------------------------------------------------

def cell_integral(ho, t, a, b, p=16):
    """``int_a^b k^(n)(t, u) du`` for ``0 <= a < b <= t`` (vectorised).

    Order 1 is exact.  For ``n >= 2`` the u-integral is done in closed form
    and the remaining s-integral by graded Gauss-Jacobi quadrature, split at
    ``b`` and at ``2b - a`` to keep every piece either smooth or of the form
    ``(s - c)**alpha * smooth``.
    """
    if not isinstance(ho, HurstOrder):
        ho = HurstOrder(*ho)
    t, a, b = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (t, a, b)))
    shape = t.shape
    t, a, b = t.ravel(), a.ravel(), b.ravel()
    if np.any(a < 0) or np.any(b <= a) or np.any(b > t * (1 + 1e-12)):
        raise DomainError("cell integral needs 0 <= a < b <= t")
    b = np.minimum(b, t)
    h = ho.base
    if ho.n == 1:
        out = t ** (h + 0.5) * _Psi_diff(h, a / t, (t - a) / t, b / t, (t - b) / t)
        return out.reshape(shape)

    n = ho.n
    alpha = h + 0.5

    # s in (a, b): integrand w(s) * s**alpha * Psi_tail(a / s)
    def g1(s, idx, off):
        aa = a[idx][:, None]
        return _cauchy_weight(n, t[idx][:, None], s) * Psi_tail_reduced(h, aa / s, off / s)

    dist = np.where(a > 0, a, np.inf)
    out = quad.integrate_from_left(g1, a, b, alpha, quad.levels_for(b - a, dist), p=p)

    e = np.minimum(t, 2.0 * b - a)

    # s in (b, e): smooth part minus the (s - b)**alpha part
    def g2(s, idx, off):
        aa = a[idx][:, None]
        return _cauchy_weight(n, t[idx][:, None], s) * s**alpha * Psi_tail(h, aa / s, (s - aa) / s)

    def g3(s, idx, off):
        bb = b[idx][:, None]
        return _cauchy_weight(n, t[idx][:, None], s) * Psi_tail_reduced(h, bb / s, off / s)

    out += quad.integrate_from_left(g2, b, e, 0.0, 1, p=p)
    out -= quad.integrate_from_left(g3, b, e, alpha, 1, p=p)

    # s in (e, t): smooth, graded away from the singularity at b
    def g4(s, idx, off):
        aa = a[idx][:, None]
        bb = b[idx][:, None]
        return (
            _cauchy_weight(n, t[idx][:, None], s)
            * s**alpha
            * _Psi_diff(h, aa / s, (s - aa) / s, bb / s, (s - bb) / s)
        )

    out += quad.integrate_from_left(g4, e, t, 0.0, quad.levels_for(t - e, b - a), p=p)
    return out.reshape(shape)


def cell_averages(ho, t, edges):
    """Averages of ``k^(n)(t, .)`` over the cells ``[edges[j], edges[j+1]]`` below ``t``.

    Cells extending past ``t`` are truncated at ``t`` (and averaged over the full
    cell width); cells entirely above ``t`` give 0.
    """
    edges = np.asarray(edges, dtype=float)
    lo, hi = edges[:-1], edges[1:]
    width = hi - lo
    out = np.zeros(lo.size)
    live = lo < t
    if np.any(live):
        out[live] = cell_integral(ho, t, lo[live], np.minimum(hi[live], t)) / width[live]
    return out


# --------------------------------------------------------------------------
# kernel matrices
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Cell-averaged kernel on a grid: ``B(t_i) = sum_j K[i, j] dW_j``.

    ``entries[i-1, j-1]`` is the average of ``k^(n)(t_i, .)`` over cell
    ``(t_{j-1}, t_j]``; the array is lower triangular and read-only.
    """

    ho: HurstOrder
    grid: Grid
    entries: np.ndarray = field(repr=False)

    def apply(self, increments):
        """Process values (with the leading 0) driven by ``increments``; batches along axis 0."""
        dW = np.asarray(increments, dtype=float)
        vals = dW @ self.entries.T
        zero = np.zeros(vals.shape[:-1] + (1,))
        return np.concatenate([zero, vals], axis=-1)

    def gram(self):
        """``K K^T dt``, the covariance of the discretised process at t_1..t_m."""
        return self.entries @ self.entries.T * self.grid.dt


def _unit_diag_adjacent(h, m, qmax, p=24):
    """Moments of the diagonal and first sub-diagonal cells on the unit grid.

    Returns arrays ``D[q, j-1]`` (cell j against itself) and ``A[q, j-1]``
    (cell j+1 against cell j), with the moment weight ``(l - s)**q / q!``.
    """
    alpha = h + 0.5
    j = np.arange(1, m + 1, dtype=float)
    xj, wj = quad.jacobi_rule(p, alpha)
    xl, wl = quad.legendre_rule(p)

    # diagonal: s in (j-1, j), integrand (s - j + 1)**alpha * Psi_tail_reduced((j-1)/s)
    s = (j - 1)[:, None] + xj[None, :]
    base_d = Psi_tail_reduced(h, (j - 1)[:, None] / s, xj[None, :] / s)
    # adjacent: s in (j, j+1)
    s2 = j[:, None] + xl[None, :]
    smooth = s2**alpha * Psi_tail(h, (j - 1)[:, None] / s2, (s2 - j[:, None] + 1) / s2)
    s3 = j[:, None] + xj[None, :]
    sing = Psi_tail_reduced(h, j[:, None] / s3, xj[None, :] / s3)

    D = np.empty((qmax + 1, m))
    A = np.empty((qmax + 1, m))
    for q in range(qmax + 1):
        f = math.factorial(q)
        D[q] = ((j[:, None] - s) ** q / f * base_d) @ wj
        A[q] = ((j[:, None] + 1 - s2) ** q / f * smooth) @ wl - ((j[:, None] + 1 - s3) ** q / f * sing) @ wj
    return D, A


@lru_cache(maxsize=32)
def _unit_moments(h, m, qmax, p=10):
    """``M[q][l-1, j-1] = int_{cell l} (l - s)^q / q! * C1(s; cell j) ds`` on the unit grid.

    ``C1(s; cell j)`` is the order-1 kernel integrated over the part of cell j
    below s.  Cells two or more apart use plain Gauss-Legendre; the two
    nearest diagonals use the singular rules of :func:`_unit_diag_adjacent`.
    """
    alpha = h + 0.5
    M = np.zeros((qmax + 1, m, m))
    D, A = _unit_diag_adjacent(h, m, qmax)
    idx = np.arange(m)
    for q in range(qmax + 1):
        M[q, idx, idx] = D[q]
        M[q, idx[1:], idx[:-1]] = A[q, :-1]
    xl, wl = quad.legendre_rule(p)
    facts = [math.factorial(q) for q in range(qmax + 1)]
    Psi1 = Psi_total(h)
    for l in range(3, m + 1):
        s = (l - 1) + xl  # (p,)
        c = np.arange(0, l - 1, dtype=float)  # cell edges 0 .. l-2
        y = c[None, :] / s[:, None]
        yc = (s[:, None] - c[None, :]) / s[:, None]
        head = y <= 0.5
        F = np.empty_like(y)
        F[head] = Psi(h, y[head], yc[head])
        F[~head] = Psi1 - Psi_tail(h, y[~head], yc[~head])
        G = s[:, None] ** alpha * np.diff(F, axis=1)  # (p, l-2): cells 1..l-2
        for q in range(qmax + 1):
            wq = wl * (l - s) ** q / facts[q]
            M[q, l - 1, : l - 2] = wq @ G
    return M


def _toeplitz_power(m, r):
    k = np.arange(m)
    diff = k[:, None] - k[None, :]
    T = np.where(diff >= 0, np.maximum(diff, 0).astype(float) ** r / math.factorial(r), 0.0)
    return T


@lru_cache(maxsize=16)
def _unit_kernel_matrix(n, h, m):
    if n == 1:
        i = np.arange(1, m + 1, dtype=float)[:, None]
        j = np.arange(1, m + 1, dtype=float)[None, :]
        mask = j <= i
        ii, jj = np.broadcast_arrays(i, j)
        ii, jj = ii[mask], jj[mask]
        K = np.zeros((m, m))
        K[mask] = ii ** (h + 0.5) * _Psi_diff(h, (jj - 1) / ii, (ii - jj + 1) / ii, jj / ii, (ii - jj) / ii)
        return K
    M = _unit_moments(h, m, n - 2)
    K = np.zeros((m, m))
    for q in range(n - 1):
        K += _toeplitz_power(m, n - 2 - q) @ M[q]
    return K


_MAGIC = b"NFBMKMAT"
_VERSION = 1


def save_kernel_matrix(K, path):
    """Write ``K`` in the versioned binary cache format.

    Layout (little endian): 8 magic bytes, uint32 version, float64 n, H, T, m,
    then the lower triangle row by row as float64.
    """
    m = K.grid.m
    tri = K.entries[np.tril_indices(m)]
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<4d", K.ho.n, K.ho.H, K.grid.T, m))
        fh.write(tri.astype("<f8").tobytes())


def load_kernel_matrix(path):
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError(f"{path}: not a kernel matrix cache file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported cache version {version}")
        n, H, T, m = struct.unpack("<4d", fh.read(32))
        m = int(m)
        tri = np.frombuffer(fh.read(), dtype="<f8")
    if tri.size != m * (m + 1) // 2:
        raise ValueError(f"{path}: truncated payload")
    entries = np.zeros((m, m))
    entries[np.tril_indices(m)] = tri
    entries.flags.writeable = False
    return KernelMatrix(HurstOrder(int(n), H), Grid(T, m), entries)


def _cache_name(ho, grid):
    return f"kmat_n{ho.n}_H{ho.H!r}_T{grid.T!r}_m{grid.m}.bin"


def kernel_matrix(ho, grid, cache_dir=None):
    """Cell-averaged lower-triangular discretisation of ``k^(n)`` on ``grid``.

    ``K[i, j] = (1/dt) int_{t_{j-1}}^{t_j} k^(n)(t_i, s) ds``.  By homogeneity
    the matrix is ``dt**(H - 1/2)`` times a unit-grid matrix that is memoised
    per ``(n, h, m)``.  With ``cache_dir`` (or ``NFBM_KERNEL_CACHE``) the
    result is also stored on disk.
    """
    if not isinstance(ho, HurstOrder):
        ho = HurstOrder(*ho)
    cache_dir = cache_dir or os.environ.get("NFBM_KERNEL_CACHE")
    if cache_dir:
        path = Path(cache_dir) / _cache_name(ho, grid)
        if path.exists():
            K = load_kernel_matrix(path)
            if K.ho == ho and K.grid == grid:
                return K
    entries = _unit_kernel_matrix(ho.n, ho.base, grid.m) * grid.dt ** (ho.H - 0.5)
    entries.flags.writeable = False
    K = KernelMatrix(ho, grid, entries)
    if cache_dir:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
        save_kernel_matrix(K, Path(cache_dir) / _cache_name(ho, grid))
    return K


def invert_kernel_matrix(K, path):
    """Recover the driving increments from process values by forward substitution.

    ``path`` is a :class:`~nfbm.simulation.SamplePath` (or an array of the
    ``m + 1`` values starting at 0).  One step of iterative refinement with
    an extended-precision residual follows the solve.

    The cell-averaged matrix is well conditioned for n = 1 and for
    ``(2, H)`` with ``H <= 3/2``.  For ``(2, H > 3/2)`` and ``n >= 3`` its
    inverse grows geometrically along the rows, so rounding in the values
    is amplified by a factor that is exponential in m; no solver avoids
    this.  A non-finite result raises :class:`ConditioningError`.
    """
    values = np.asarray(getattr(path, "values", path), dtype=float)
    if values.shape[-1] == K.grid.m + 1:
        values = values[..., 1:]
    if values.shape[-1] != K.grid.m:
        raise DomainError("path length does not match the kernel grid")
    E = K.entries
    diag = np.abs(np.diag(E))
    scale = np.max(np.abs(E), axis=1)
    bad = diag < 1e-14 * scale
    if np.any(bad) or not np.all(np.isfinite(diag)):
        raise SingularMatrixError(f"near-zero diagonal entry at row {int(np.argmax(bad)) + 1}")
    rhs = values.T
    with np.errstate(over="ignore", invalid="ignore"):
        x = solve_triangular(E, rhs, lower=True, check_finite=False)
        if np.all(np.isfinite(x)):
            r = rhs.astype(np.longdouble) - E.astype(np.longdouble) @ x.astype(np.longdouble)
            x = x + solve_triangular(E, r.astype(float), lower=True, check_finite=False)
    if not np.all(np.isfinite(x)):
        raise ConditioningError(f"forward substitution overflowed for {K.ho} at m = {K.grid.m}")
    return x.T
