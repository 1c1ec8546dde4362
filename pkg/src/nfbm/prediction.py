"""Conditional law of B^(n) given its past, and a Schur-complement oracle.

Conditioning is on the driving increments ``dW_1 .. dW_u`` (equivalently on
the discretised path, since the kernel matrix is invertible).  With
``Kt[i, j]`` the average of ``k^(n)(target_i, .)`` over cell ``j`` the
conditional law is Gaussian with

    mean_i = sum_{j <= u} Kt[i, j] dW_j
    cov_ik = r(t_i, t_k) - sum_{j <= u} Kt[i, j] Kt[k, j] dt

which is exactly what the Schur complement gives for the joint vector
``(B(targets), dW_1 .. dW_u)``.  The continuous-observation covariance
``r - int_0^u k k`` is available as ``covariance="quadrature"``.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.linalg import cho_solve

from .covariance import NormalizationMode, cov_matrix, kernel_product_integral
from .errors import ConditioningError, DomainError
from .kernels import HurstOrder, cell_averages, kernel_matrix, invert_kernel_matrix
from .simulation import jittered_cholesky


@dataclass(frozen=True, eq=False)
class ConditionalLaw:
    """Gaussian law of ``B(targets)`` given the path up to ``u``."""

    ho: HurstOrder
    u: float
    targets: np.ndarray
    mean: np.ndarray
    covariance: np.ndarray = field(repr=False)

    @property
    def variance(self):
        return np.diag(self.covariance).copy()

    def band(self, z=1.96):
        sd = np.sqrt(np.clip(self.variance, 0.0, None))
        return self.mean - z * sd, self.mean + z * sd


def prediction_weights(ho, grid, u_index, targets):
    """``Kt[i, j]``: cell averages of ``k(target_i, .)`` over the first ``u_index`` cells."""
    edges = grid.points[: u_index + 1]
    return np.array([cell_averages(ho, t, edges) for t in targets]).reshape(len(targets), u_index)


def conditional_covariance(ho, grid, u, targets, covariance="discrete"):
    """Deterministic part of :func:`predict`; depends only on ``(ho, u, targets)``."""
    ho = ho if isinstance(ho, HurstOrder) else HurstOrder(*ho)
    targets = np.asarray(targets, dtype=float)
    R = cov_matrix(ho, targets, NormalizationMode.MG_UNIT)
    if u == 0:
        return R
    if covariance == "discrete":
        iu = grid.index_of(u)
        Kt = prediction_weights(ho, grid, iu, targets)
        C = R - Kt @ Kt.T * grid.dt
    elif covariance == "quadrature":
        T1, T2 = np.meshgrid(targets, targets, indexing="ij")
        C = R - kernel_product_integral(ho, T1, T2, u)
    else:
        raise DomainError(f"unknown covariance method {covariance!r}")
    return (C + C.T) / 2


def predict(ho, path, u, targets, covariance="discrete"):
    """Conditional law of ``B(targets)`` given the path on ``[0, u]``.

    Increments come from ``path.stored_increments`` or, when absent, from
    :func:`~nfbm.kernels.invert_kernel_matrix`.  ``u = 0`` returns the
    unconditional law.
    """
    ho = ho if isinstance(ho, HurstOrder) else HurstOrder(*ho)
    grid = path.grid
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    if np.any(targets <= u) or np.any(targets > grid.T * (1 + 1e-12)):
        raise DomainError("targets must lie in (u, T]")
    if np.any(np.diff(targets) <= 0):
        raise DomainError("targets must be increasing")
    cov = conditional_covariance(ho, grid, u, targets, covariance)
    if u == 0:
        return ConditionalLaw(ho, 0.0, targets, np.zeros(targets.size), cov)
    iu = grid.index_of(u)
    dW = path.stored_increments
    if dW is None:
        dW = invert_kernel_matrix(kernel_matrix(ho, grid), path)
    Kt = prediction_weights(ho, grid, iu, targets)
    mean = Kt @ dW[:iu]
    return ConditionalLaw(ho, float(u), targets, mean, cov)


def gaussian_conditioning_oracle(joint_cov, observed_idx, observed_vals, target_idx):
    """Conditional mean and covariance of a centred Gaussian vector via Schur complement."""
    S = np.asarray(joint_cov, dtype=float)
    o = np.asarray(observed_idx, dtype=int)
    t = np.asarray(target_idx, dtype=int)
    y = np.asarray(observed_vals, dtype=float)
    Soo = (S[np.ix_(o, o)] + S[np.ix_(o, o)].T) / 2
    Sto = S[np.ix_(t, o)]
    Stt = S[np.ix_(t, t)]
    try:
        L = jittered_cholesky(Soo)
    except ConditioningError as exc:
        raise ConditioningError(f"observed block is singular: {exc}") from exc
    mean = Sto @ cho_solve((L, True), y)
    cov = Stt - Sto @ cho_solve((L, True), Sto.T)
    return mean, (cov + cov.T) / 2


_GH_NODES = 64


def _hermite(p):
    x, w = hermegauss(p)
    return x, w / math.sqrt(2 * math.pi)


def predict_functional(law, f, target_index, nodes=_GH_NODES):
    """``E[f(B(t_i)) | past]`` by Gauss-Hermite quadrature with 64 nodes."""
    mu = float(law.mean[target_index])
    var = float(law.covariance[target_index, target_index])
    if var <= 0:
        return float(f(mu))
    x, w = _hermite(nodes)
    vals = np.asarray(f(mu + math.sqrt(var) * x), dtype=float)
    return float(vals @ w)


class MonteCarloEstimate(NamedTuple):
    value: float
    stderr: float


def predict_functional_multi(law, f, rng, samples):
    """Monte Carlo ``E[f(B(targets)) | past]`` with its standard error.

    ``f`` maps an array of shape ``(samples, k)`` to ``(samples,)``; a
    function of a single vector is applied row by row instead.
    """
    L = jittered_cholesky(law.covariance)
    z = rng.normal((samples, law.targets.size))
    X = law.mean + z @ L.T
    try:
        vals = np.asarray(f(X), dtype=float)
        if vals.shape != (samples,):
            raise ValueError
    except (ValueError, TypeError, IndexError):
        vals = np.array([f(row) for row in X], dtype=float)
    return MonteCarloEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples)))
