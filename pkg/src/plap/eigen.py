"""First Dirichlet eigenpair of the p-Laplacian by Rayleigh-quotient descent."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .mesh import FeFunction, Mesh, apply_Ap, norm_Lq, norm_W1p, operator_matrix

__all__ = ["Eigenpair", "EigenFailure", "rayleigh_quotient", "first_eigenpair"]

log = logging.getLogger(__name__)


class EigenFailure(RuntimeError):
    """The descent lost positivity or failed to converge."""


@dataclass
class Eigenpair:
    lambda1: float
    phi1: FeFunction
    p: float
    residual: float
    iterations: int = 0
    history: list[float] = field(default_factory=list)


def rayleigh_quotient(u: FeFunction, p: float) -> float:
    r""":math:`\|\nabla u\|_p^p / \|u\|_p^p`."""
    return (norm_W1p(u, p) / norm_Lq(u, p)) ** p


def _power_load(mesh: Mesh, u: np.ndarray, p: float) -> np.ndarray:
    uq = mesh.at_quadrature(u)
    return mesh.load_vector(np.abs(uq) ** (p - 2) * uq if p != 2 else uq)


def _normalize(mesh: Mesh, u: np.ndarray, p: float) -> np.ndarray:
    return u / norm_Lq(FeFunction(mesh, u), p)


def first_eigenpair(
    mesh: Mesh, p: float, tol: float = 1e-9, max_iter: int = 500
) -> Eigenpair:
    """Minimise the Rayleigh quotient over positive zero-trace P1 functions.

    The search direction is the quotient gradient preconditioned by the
    lagged-diffusivity stiffness matrix (smoothing ``eta = sqrt(tol)``), so a
    unit step is one sweep of nonlinear inverse iteration.  Steps are
    backtracked (Armijo) and clamped so every interior nodal value stays
    positive; the iterate is renormalised to unit ``L^p`` norm after each step.
    """
    if not p > 1:
        raise ValueError(f"p must be > 1, got {p}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    eta = tol**0.5
    inner = ~mesh.boundary

    u = _normalize(mesh, np.where(inner, mesh.distance, 0.0), p)
    R = rayleigh_quotient(FeFunction(mesh, u), p)
    history = [R]
    residual = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        grad = apply_Ap(mesh, u, p) - R * _power_load(mesh, u, p)
        K = operator_matrix(mesh, u, p, eta)[inner][:, inner].tocsc()
        d = np.zeros_like(u)
        d[inner] = -spla.spsolve(K, grad[inner])
        slope = float(grad[inner] @ d[inner])
        residual = float(np.sqrt(max(-slope, 0.0)))
        if slope >= 0:
            break

        # nodal positivity clamp
        neg = inner & (d < 0)
        alpha = 1.0
        if np.any(neg):
            alpha = min(1.0, 0.9 * float(np.min(-u[neg] / d[neg])))
        # the quotient is 0-homogeneous: its gradient in u is p grad / ||u||_p^p
        while True:
            trial = u + alpha * d
            R_trial = rayleigh_quotient(FeFunction(mesh, trial), p)
            if R_trial <= R + 1e-4 * alpha * p * slope or alpha < 1e-12:
                break
            alpha *= 0.5
        if R_trial > R:
            break
        u = _normalize(mesh, trial, p)
        change = (R - R_trial) / R
        R = R_trial
        history.append(R)
        log.debug("eigen iter %d: lambda=%.12g change=%.3e step=%.3g", it, R, change, alpha)
        if change < tol:
            break

    if np.any(u[inner] <= 0):
        raise EigenFailure("eigenfunction iterate changed sign at an interior node")
    return Eigenpair(R, FeFunction(mesh, u), float(p), residual, it, history)
