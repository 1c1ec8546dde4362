"""Gauss-Jacobi / graded Gauss-Legendre rules for endpoint-singular integrands.

Every rule here integrates ``x**alpha * g(x)`` over ``[0, 1]`` with ``g``
smooth on the first panel.  The graded composite rule places geometrically
shrinking panels at ``x = 0`` so that a second singularity sitting just
outside the interval (at distance comparable to the first panel) does not
spoil convergence.  All integrators are vectorised over an array of
intervals.
"""

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .errors import AccuracyError

GRADING_RATIO = 0.2
MAX_LEVELS = 60


@lru_cache(maxsize=None)
def jacobi_rule(p, alpha):
    """Nodes/weights on [0, 1] for the weight ``x**alpha`` (alpha > -1)."""
    if alpha == 0.0:
        return legendre_rule(p)
    x, w = roots_jacobi(p, 0.0, alpha)
    return (x + 1.0) / 2.0, w * 2.0 ** (-alpha - 1.0)


@lru_cache(maxsize=None)
def legendre_rule(p):
    x, w = roots_legendre(p)
    return (x + 1.0) / 2.0, w / 2.0


@lru_cache(maxsize=None)
def graded_rule(p, alpha, levels, ratio=GRADING_RATIO):
    """Composite rule for ``int_0^1 x**alpha g(x) dx``.

    Panels are ``[0, r**(L-1)], [r**(L-1), r**(L-2)], ..., [r, 1]``.  The
    innermost panel uses Gauss-Jacobi so the algebraic factor is integrated
    exactly; the others fold ``x**alpha`` into Gauss-Legendre weights.
    """
    levels = max(int(levels), 1)
    edges = np.concatenate([[0.0], ratio ** np.arange(levels - 1, -1, -1.0)])
    xj, wj = jacobi_rule(p, float(alpha))
    c = edges[1]
    nodes = [c * xj]
    weights = [c ** (alpha + 1.0) * wj]
    xl, wl = legendre_rule(p)
    for lo, hi in zip(edges[1:-1], edges[2:]):
        x = lo + (hi - lo) * xl
        nodes.append(x)
        weights.append((hi - lo) * wl * x**alpha)
    return np.concatenate(nodes), np.concatenate(weights)


def levels_for(length, distance, ratio=GRADING_RATIO):
    """Number of grading levels so the first panel is no longer than ``distance``."""
    length = np.asarray(length, dtype=float)
    distance = np.asarray(distance, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        lv = 1 + np.ceil(np.log(length / distance) / np.log(1.0 / ratio))
    lv = np.where(np.isfinite(lv), lv, MAX_LEVELS)
    return np.clip(lv, 1, MAX_LEVELS).astype(int)


def integrate_from_left(func, a, b, alpha, levels, p=16):
    r"""Vectorised ``\int_a^b (s-a)^alpha g(s) ds`` for arrays ``a < b``.

    ``func(s, idx, off)`` receives nodes ``s`` with shape ``(len(idx), K)``,
    the flat indices ``idx`` of the intervals they belong to and the exact
    offsets ``off = s - a`` (free of cancellation); it returns ``g(s)``.
    Intervals are grouped by their number of grading levels.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    shape = np.broadcast_shapes(a.shape, b.shape)
    a = np.broadcast_to(a, shape).ravel()
    b = np.broadcast_to(b, shape).ravel()
    levels = np.broadcast_to(np.asarray(levels, dtype=int), shape).ravel()
    out = np.zeros(a.size)
    live = b > a
    for lv in np.unique(levels[live]):
        idx = np.flatnonzero(live & (levels == lv))
        x, w = graded_rule(p, float(alpha), int(lv))
        L = (b[idx] - a[idx])[:, None]
        off = L * x[None, :]
        g = func(a[idx][:, None] + off, idx, off)
        out[idx] = (L[:, 0] ** (alpha + 1.0)) * (g @ w)
    return out.reshape(shape)


def integrate_from_right(func, a, b, alpha, levels, p=16):
    r"""Mirror of :func:`integrate_from_left`: ``\int_a^b (b-s)^alpha g(s) ds``, ``off = b - s``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    shape = np.broadcast_shapes(a.shape, b.shape)
    a = np.broadcast_to(a, shape).ravel()
    b = np.broadcast_to(b, shape).ravel()
    levels = np.broadcast_to(np.asarray(levels, dtype=int), shape).ravel()
    out = np.zeros(a.size)
    live = b > a
    for lv in np.unique(levels[live]):
        idx = np.flatnonzero(live & (levels == lv))
        x, w = graded_rule(p, float(alpha), int(lv))
        L = (b[idx] - a[idx])[:, None]
        off = L * x[None, :]
        g = func(b[idx][:, None] - off, idx, off)
        out[idx] = (L[:, 0] ** (alpha + 1.0)) * (g @ w)
    return out.reshape(shape)


def adaptive(integrator, p0=16, tol=1e-8, max_nodes=4096):
    """Double the per-panel node count until successive results agree.

    ``integrator(p)`` must return an array.  Raises :class:`AccuracyError`
    when ``max_nodes`` is reached first.
    """
    p = p0
    prev = integrator(p)
    while True:
        p *= 2
        cur = integrator(p)
        scale = np.maximum(np.abs(cur), np.finfo(float).tiny)
        err = np.max(np.abs(cur - prev) / scale) if np.size(cur) else 0.0
        if err < tol or np.max(np.abs(cur - prev)) < 1e-300:
            return cur
        if p >= max_nodes:
            raise AccuracyError(f"quadrature stalled at relative change {err:.2e}", achieved=err)
        prev = cur
