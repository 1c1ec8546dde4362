"""Processes equivalent in law to B^(n): Hitsuda transform, resolvent, likelihood.

Everything runs on grid tables.  A :class:`DriftModel` is sampled once at
left points: ``a[l] = a(t_l)`` and ``B[l, j] = b(t_l, t_j)`` for ``j < l``
(0-based cells, ``t_l`` the left end of cell ``l``), so every sum is
non-anticipating.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ConvergenceError, DomainError, UnsupportedOrderError
from .kernels import HurstOrder, kernel_matrix
from .simulation import Method, SamplePath


@dataclass(frozen=True, eq=False)
class DriftModel:
    """Drift table ``a`` (length m) and strictly lower-triangular kernel table ``B`` (m x m)."""

    a: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    dt: float

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        B = np.asarray(self.B, dtype=float)
        m = a.size
        if B.shape != (m, m):
            raise DomainError("kernel table must be m x m")
        if np.any(np.triu(B) != 0):
            raise DomainError("kernel table must be strictly lower triangular (b(s, u) for u < s only)")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(B))):
            raise DomainError("drift model tables must be finite")
        a.flags.writeable = False
        B.flags.writeable = False
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "B", B)

    @classmethod
    def on_grid(cls, grid, a=None, b=None):
        """Sample callables (or constants) ``a(t)`` and ``b(s, u)`` at left points."""
        m = grid.m
        t = grid.points[:-1]
        if a is None:
            a_tab = np.zeros(m)
        elif callable(a):
            a_tab = np.broadcast_to(np.asarray(a(t), dtype=float), (m,)).copy()
        else:
            a_tab = np.broadcast_to(np.asarray(a, dtype=float), (m,)).copy()
        S, U = np.meshgrid(t, t, indexing="ij")
        lower = np.tril(np.ones((m, m), dtype=bool), -1)
        B = np.zeros((m, m))
        if b is not None:
            vals = b(S[lower], U[lower]) if callable(b) else b
            B[lower] = np.broadcast_to(np.asarray(vals, dtype=float), (int(lower.sum()),))
        return cls(a_tab, B, grid.dt)

    @classmethod
    def zero(cls, grid):
        return cls.on_grid(grid)

    @property
    def m(self):
        return self.a.size

    def l2_norms(self):
        """Discretised ``(||a||_L2, ||b||_L2)``."""
        return math.sqrt(np.sum(self.a**2) * self.dt), math.sqrt(np.sum(self.B**2) * self.dt**2)

    def observation_form(self):
        """The same law written as ``dX = theta dt + dW`` with ``theta = a' + B' dX``.

        Inverting ``dW~ = dW + (a - B dW) dt`` gives ``a' = a - dt B* a`` and
        ``B' = B*`` with ``B*`` the resolvent.
        """
        Bs = resolvent(self.B, self.dt)
        return DriftModel(self.a - self.dt * Bs @ self.a, Bs, self.dt)

    def inverse(self):
        """Model whose Hitsuda transform undoes this one."""
        obs = self.observation_form()
        return DriftModel(-obs.a, obs.B, self.dt)


def _check_model(model, grid):
    if model.m != grid.m or not math.isclose(model.dt, grid.dt, rel_tol=1e-12):
        raise DomainError("drift model was sampled on a different grid")


def hitsuda_increments(dW, model):
    """``dW~_l = dW_l + (a_l - sum_{j<l} B[l, j] dW_j) dt``; batches along axis 0."""
    dW = np.asarray(dW, dtype=float)
    return dW + (model.a - dW @ model.B.T) * model.dt


def hitsuda_transform(W_path, model):
    """``W~(t) = W(t) - int_0^t int_0^s b(s, u) dW(u) ds + int_0^t a(s) ds`` on the grid."""
    if W_path.stored_increments is None:
        raise DomainError("the Brownian path must carry its increments")
    _check_model(model, W_path.grid)
    dWt = hitsuda_increments(W_path.stored_increments, model)
    values = np.concatenate([[0.0], np.cumsum(dWt)])
    return SamplePath(W_path.grid, values, HurstOrder(1, 0.5), Method.DERIVED, W_path.seed, dWt)


def nfbm_equivalent_path(W_path, model, ho):
    """``B~(t_i) = sum_j K[i, j] dW~_j`` with ``dW~`` from :func:`hitsuda_transform`."""
    ho = ho if isinstance(ho, HurstOrder) else HurstOrder(*ho)
    tilde = hitsuda_transform(W_path, model)
    values = kernel_matrix(ho, W_path.grid).apply(tilde.stored_increments)
    return replace(tilde, values=values, ho=ho)


def drift_shift(model, ho, grid):
    """Deterministic shift ``A(t_i) = sum_j K[i, j] a_j dt``."""
    _check_model(model, grid)
    return kernel_matrix(ho, grid).apply(model.a * grid.dt)


def resolvent(B, dt, method="solve", tol=1e-12):
    """Resolvent table ``B*`` with ``B* + B = dt B B* = dt B* B``.

    ``method="solve"`` computes ``-(I - dt B)^{-1} B`` by a triangular
    solve.  ``method="neumann"`` sums ``-sum_{k>=1} dt^(k-1) B^k`` until the
    next term is below ``tol``; for a strictly lower-triangular table the
    series stops after at most ``m`` terms.
    """
    B = np.asarray(B, dtype=float)
    m = B.shape[0]
    if method == "solve":
        out = -solve_triangular(np.eye(m) - dt * B, B, lower=True, unit_diagonal=True)
    elif method == "neumann":
        term = B.copy()
        out = -term
        for _ in range(10 * m):
            term = dt * (B @ term)
            if np.max(np.abs(term), initial=0.0) < tol:
                break
            out -= term
        else:
            raise ConvergenceError("Neumann series did not converge")
    else:
        raise DomainError(f"unknown resolvent method {method!r}")
    return np.tril(out, -1)


def resolvent_residual(B, Bs, dt):
    """Largest entry of ``B* + B - dt B B*``."""
    return float(np.max(np.abs(Bs + B - dt * B @ Bs)))


def loglik_curves(dX, model):
    """``l(t_i)``, ``i = 0..m``, for a batch of increment rows ``dX``.

    ``theta_l = a_l + sum_{j<l} B[l, j] dX_j`` and
    ``l = sum theta dX - (1/2) sum theta^2 dt``; this is the exact log density
    of ``dX_l ~ N(theta_l dt, dt)`` relative to Brownian increments.
    """
    dX = np.asarray(dX, dtype=float)
    theta = model.a + dX @ model.B.T
    inc = theta * dX - 0.5 * theta**2 * model.dt
    zero = np.zeros(dX.shape[:-1] + (1,))
    return np.concatenate([zero, np.cumsum(inc, axis=-1)], axis=-1)


def log_likelihood(W_path, model, t=None):
    """Log-likelihood ratio ``l(t)`` of ``model`` against Wiener measure on ``[0, t]``."""
    if W_path.stored_increments is None:
        raise DomainError("the path must carry its increments")
    _check_model(model, W_path.grid)
    i = W_path.grid.m if t is None else W_path.grid.index_of(t)
    dX = W_path.stored_increments[:i]
    sub = DriftModel(model.a[:i], model.B[:i, :i], model.dt)
    return float(loglik_curves(dX, sub)[-1])


def recover_drift(path, window=None):
    """Slope at 0 of ``path`` by least squares through the origin over the first ``window`` points.

    For ``n >= 2`` the process is differentiable with derivative 0 at the
    origin, so a linear drift ``alpha t`` is identified by this slope.
    """
    if path.ho.n < 2:
        raise UnsupportedOrderError("the drift is not identified from the derivative at 0 when n = 1")
    m = path.grid.m
    window = math.ceil(math.sqrt(m)) if window is None else int(window)
    if not 1 <= window <= m:
        raise DomainError(f"window must lie in [1, {m}]")
    t = path.grid.points[1 : window + 1]
    x = path.values[1 : window + 1]
    return float(t @ x / (t @ t))
