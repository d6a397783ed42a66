"""Smoothed L^p term: the function psi_eps, G_eps, its gradient and the
pairing bounds used by the stationarity diagnostics.

For ``eps > 0``::

    psi_eps(t) = (p/2) t / eps^(2-p) + (1 - p/2) eps^p    if t < eps^2
               = t^(p/2)                                  otherwise

and ``psi_0(u^2) = |u|^p``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid, check_function, integrate, lp_pseudonorm

__all__ = ["PsiParams", "psi", "psi_prime", "g_eps", "g_eps_grad", "pairing_bound"]


@dataclass(frozen=True)
class PsiParams:
    p: float
    eps: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError("p must lie in (0,1)")
        if not self.eps >= 0.0:
            raise ValueError("eps must be non-negative")


def _power(t: np.ndarray, e: float) -> np.ndarray:
    # t**e for t >= 0 with an exact zero shortcut
    out = np.zeros_like(t)
    nz = t > 0
    out[nz] = np.exp(e * np.log(t[nz]))
    return out


def psi(params: PsiParams, t):
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("psi is defined for t >= 0 only")
    p, eps = params.p, params.eps
    t1 = np.atleast_1d(t_arr)
    out = _power(t1, 0.5 * p)
    if eps > 0:
        low = t1 < eps * eps
        out[low] = 0.5 * p * t1[low] * eps ** (p - 2.0) + (1.0 - 0.5 * p) * eps ** p
    return out.reshape(t_arr.shape) if t_arr.ndim else float(out[0])


def psi_prime(params: PsiParams, t):
    """``(p/2) * min(eps^(p-2), t^((p-2)/2))``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("psi_prime is defined for t >= 0 only")
    p, eps = params.p, params.eps
    t1 = np.atleast_1d(t_arr)
    if eps == 0 and np.any(t1 == 0):
        raise ValueError("psi_prime is unbounded at t = 0 when eps = 0")
    out = np.empty_like(t1)
    if eps > 0:
        cap = eps ** (p - 2.0)
        low = t1 < eps * eps
        out[low] = cap
        hi = ~low
    else:
        hi = np.ones_like(t1, dtype=bool)
    out[hi] = np.exp(0.5 * (p - 2.0) * np.log(t1[hi]))
    out *= 0.5 * p
    return out.reshape(t_arr.shape) if t_arr.ndim else float(out[0])


def g_eps(grid: Grid, u, params: PsiParams) -> float:
    u = check_function(grid, u)
    return integrate(grid, psi(params, u * u))


def g_eps_grad(grid: Grid, u, params: PsiParams) -> np.ndarray:
    """L^2-Riesz representative ``2 u psi'(u^2)`` of the derivative of G_eps."""
    if params.eps <= 0:
        raise ValueError("g_eps_grad requires eps > 0")
    u = check_function(grid, u)
    return 2.0 * u * psi_prime(params, u * u)


def pairing_bound(grid: Grid, u, params: PsiParams) -> tuple[float, float]:
    """Return ``(p * int min(eps^(p-2), |u|^(p-2)) u^2, p * int |u|^p)``.

    The first value is the pairing of ``g_eps_grad(u)`` with ``u``; it never
    exceeds the second.
    """
    if params.eps <= 0:
        raise ValueError("pairing_bound requires eps > 0")
    u = check_function(grid, u)
    lower = integrate(grid, 2.0 * psi_prime(params, u * u) * u * u)
    upper = params.p * lp_pseudonorm(grid, u, params.p)
    return lower, upper
