"""Gamma-family functions and the normalising constants used throughout."""

import math

import numpy as np

from .errors import DomainError


def gamma_fn(x):
    """Gamma function for real ``x`` away from the poles 0, -1, -2, ...

    Backed by :func:`math.gamma` (correctly rounded to a few ulp on the range
    the library uses).  Poles raise :class:`DomainError`.
    """
    x = float(x)
    if x <= 0 and x == math.floor(x):
        raise DomainError(f"gamma has a pole at x={x:g}")
    return math.gamma(x)


def beta_fn(a, b):
    """Beta function B(a, b) = Gamma(a) Gamma(b) / Gamma(a + b)."""
    return gamma_fn(a) * gamma_fn(b) / gamma_fn(a + b)


def gen_binom(alpha, j):
    """Generalised binomial coefficient alpha (alpha-1) ... (alpha-j+1) / j!.

    Computed as a running product so negative-integer ``alpha`` is harmless.
    """
    j = int(j)
    if j < 0:
        raise DomainError("j must be non-negative")
    out = 1.0
    for i in range(j):
        out *= (alpha - i) / (i + 1)
    return out


def mg_constant(H):
    r"""Normalising constant d_H of the Molchan-Golosov kernel.

    .. math:: d_H = \sqrt{2H\,\Gamma(3/2-H) / (\Gamma(H+1/2)\,\Gamma(2-2H))}

    Chosen so that the represented fBm has unit variance at t = 1.
    """
    if not 0.0 < H < 1.0:
        raise DomainError(f"H must lie in (0, 1), got {H}")
    return math.sqrt(2.0 * H * gamma_fn(1.5 - H) / (gamma_fn(H + 0.5) * gamma_fn(2.0 - 2.0 * H)))


def perrin_constant(H):
    """C_H = 1 / (Gamma(2H + 1) |sin(pi H)|).

    The constant depends only on H (not on the order n).  Integer H makes the
    sine vanish and is rejected.
    """
    if H <= 0:
        raise DomainError(f"H must be positive, got {H}")
    if H == round(H):
        raise DomainError(f"sin(pi H) vanishes for integer H={H}")
    return 1.0 / (gamma_fn(2.0 * H + 1.0) * abs(math.sin(math.pi * H)))


def binom_row(alpha, n):
    """Array of gen_binom(alpha, j) for j = 0 .. n-1."""
    return np.array([gen_binom(alpha, j) for j in range(n)])
