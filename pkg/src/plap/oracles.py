"""Independent one-dimensional reference solutions.

These never touch the finite-element code: they integrate ODEs or first
integrals on an interval ``(0, L)`` and serve as test oracles.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy import integrate, optimize

__all__ = [
    "eigenvalue_closed_form",
    "eigenvalue_shooting",
    "dirichlet_max_time_map",
    "inverse_sqrt_max",
]


def _phi(x: float, q: float) -> float:
    return math.copysign(abs(x) ** (q - 1), x)


def eigenvalue_closed_form(p: float, length: float = 1.0) -> float:
    r"""First Dirichlet eigenvalue of the 1D p-Laplacian on ``(0, length)``.

    :math:`\lambda_1 = (\pi_p / L)^p` with
    :math:`\pi_p = 2\pi (p-1)^{1/p} / (p \sin(\pi/p))`.
    """
    pi_p = 2 * math.pi * (p - 1) ** (1 / p) / (p * math.sin(math.pi / p))
    return (pi_p / length) ** p


def _half_period_defect(lam: float, p: float, half: float) -> float:
    # u' = phi_{p'}(w), w' = -lam phi_p(u); w vanishes at the midpoint for the first mode
    q = p / (p - 1)

    def rhs(_x, y):
        return [_phi(y[1], q), -lam * _phi(y[0], p)]

    sol = integrate.solve_ivp(
        rhs, (0.0, half), [0.0, 1.0], method="DOP853", rtol=1e-12, atol=1e-14
    )
    return float(sol.y[1, -1])


def eigenvalue_shooting(p: float, length: float = 1.0) -> float:
    """First eigenvalue by shooting from ``x = 0`` to the symmetry point.

    Integrates with an adaptive eighth-order Runge-Kutta method and locates
    the eigenvalue with Brent's method; it does not use the closed form.
    """
    if not p > 1:
        raise ValueError("p must be > 1")
    half = length / 2
    lo, hi = 1e-3, 1.0
    while _half_period_defect(hi, p, half) > 0:
        lo, hi = hi, 2 * hi
    return optimize.brentq(_half_period_defect, lo, hi, args=(p, half), xtol=1e-13, rtol=1e-13)


def dirichlet_max_time_map(
    F: Callable[[float], float], p: float, length: float = 1.0
) -> float:
    r"""Maximum of the positive solution of :math:`-(\phi_p(u'))' = f(u)` on ``(0, L)``.

    ``F`` is the primitive of ``f`` with ``F(0) = 0``, and ``f > 0``.  The
    first integral :math:`\frac{p-1}{p}|u'|^p + F(u) = F(m)` gives the time map

    .. math:: \frac{L}{2} = \int_0^m \Big(\frac{p}{p-1}(F(m) - F(u))\Big)^{-1/p} du,

    solved for the maximum ``m``; the substitution ``u = m(1 - t^p)`` removes
    the endpoint singularity.
    """
    c = p / (p - 1)

    def half_length(m: float) -> float:
        Fm = F(m)

        def integrand(t: float) -> float:
            if t == 0.0:
                return 0.0
            u = m * (1 - t**p)
            return m * p * t ** (p - 1) / (c * (Fm - F(u))) ** (1 / p)

        val, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-14, epsrel=1e-12, limit=200)
        return val

    target = length / 2
    lo, hi = 1e-12, 1.0
    while half_length(hi) < target:
        lo, hi = hi, 2 * hi
    while half_length(lo) > target:
        lo /= 2
    return optimize.brentq(lambda m: half_length(m) - target, lo, hi, xtol=1e-14, rtol=1e-12)


def inverse_sqrt_max(length: float = 1.0) -> float:
    """Closed-form maximum for ``-u'' = u^{-1/2}`` on ``(0, L)``.

    The first integral ``u'^2/2 + 2 sqrt(u) = 2 sqrt(m)`` integrates to
    ``m^{3/4} (4/3) = L/2``.
    """
    return (3 * length / 8) ** (4 / 3)


def _selfcheck() -> dict[str, float]:  # pragma: no cover - handy from a REPL
    return {
        "shoot_p2": eigenvalue_shooting(2.0),
        "closed_p2": eigenvalue_closed_form(2.0),
        "time_map": dirichlet_max_time_map(lambda u: 2 * np.sqrt(u), 2.0),
        "closed": inverse_sqrt_max(),
    }
