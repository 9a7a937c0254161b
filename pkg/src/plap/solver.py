"""Sub-solution, regularised energy minimisation and the epsilon continuation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .eigen import Eigenpair
from .mesh import (
    FeFunction,
    Mesh,
    apply_Ap,
    norm_W1p,
    operator_matrix,
    weighted_mass,
)
from .reaction import HypothesisReport, MollifiedReaction, Reaction, eval_f

__all__ = [
    "Subsolution",
    "SubsolutionFailure",
    "MinimizationStagnation",
    "MinimizationResult",
    "ContinuationResult",
    "ContinuationFailure",
    "build_subsolution",
    "energy",
    "minimize_Jeps",
    "continuation",
    "residual_v",
    "geometric_schedule",
]

log = logging.getLogger(__name__)


class SubsolutionFailure(RuntimeError):
    pass


class MinimizationStagnation(RuntimeError):
    """Line search shrank below the minimum step; carries the energy trace."""

    def __init__(self, message: str, energies: list[float]):
        super().__init__(message)
        self.energies = energies


class ContinuationFailure(RuntimeError):
    def __init__(self, message: str, eps: float):
        super().__init__(message)
        self.eps = eps


@dataclass
class Subsolution:
    ubar: FeFunction
    k: float
    delta: float
    lambda1: float
    p: float
    halvings: int = 0
    margin: float = math.nan


@dataclass
class MinimizationResult:
    u: FeFunction
    energies: list[float]
    residuals: list[float]
    steps: list[float]
    iterations: int

    # callers usually want the nodal array
    @property
    def values(self) -> np.ndarray:
        return self.u.values


@dataclass
class ContinuationResult:
    epsilons: list[float]
    solutions: list[FeFunction]
    w1p_norms: list[float]
    limit: FeFunction
    residual_field: FeFunction
    increments: list[float]
    diagnostics: dict = field(default_factory=dict)

    @property
    def L(self) -> float:
        return max(self.w1p_norms)


# {{{ sub-solution


def _interior_mask(mesh: Mesh) -> np.ndarray:
    return ~mesh.boundary


def subsolution_defect(mesh: Mesh, r: Reaction, ubar: np.ndarray, p: float) -> np.ndarray:
    """``A_p(ubar)_i - int f(ubar) psi_i`` at every node (boundary rows zeroed)."""
    uq = mesh.at_quadrature(ubar)
    fq = eval_f(r, np.maximum(uq, np.finfo(float).tiny))
    out = apply_Ap(mesh, ubar, p) - mesh.load_vector(fq)
    out[mesh.boundary] = 0.0
    return out


def build_subsolution(
    mesh: Mesh,
    eig: Eigenpair,
    r: Reaction,
    report: HypothesisReport | None = None,
    *,
    delta: float | None = None,
    tol: float = 1e-8,
    max_halvings: int = 20,
) -> Subsolution:
    """``ubar = k phi1`` with ``||ubar||_inf < delta/2`` and a verified discrete inequality.

    ``k`` starts just below ``delta / (2 ||phi1||_inf)`` and is halved while
    some interior node violates ``A_p(ubar)_i <= int f(ubar) psi_i + tol``.
    """
    if delta is None:
        if report is None or not report.holds_iii or report.delta is None:
            raise SubsolutionFailure("hypothesis (iii) must hold to provide a delta witness")
        delta = report.delta
    if not delta > 0:
        raise ValueError("delta must be positive")
    phi = eig.phi1.values
    sup = float(np.max(np.abs(phi)))
    k = (1 - 2.0**-20) * delta / (2 * sup)
    for halvings in range(max_halvings + 1):
        ubar = k * phi
        defect = subsolution_defect(mesh, r, ubar, eig.p)
        worst = float(np.max(defect))
        if worst <= tol:
            return Subsolution(FeFunction(mesh, ubar), k, delta, eig.lambda1, eig.p,
                               halvings, -worst)
        log.info("sub-solution defect %.3e at k=%.4g; halving", worst, k)
        k /= 2
    raise SubsolutionFailure(
        f"no verified discrete sub-solution down to k = {2 * k:.3e} (delta = {delta:g})"
    )


# }}}


# {{{ energy and minimisation


def _mollified(r: Reaction, eps: float, cache: dict | None = None) -> MollifiedReaction:
    if cache is None:
        return MollifiedReaction(r, eps)
    key = (id(r), eps)
    if key not in cache:
        table = next((m.table for m in cache.values() if m.r is r), None)
        cache[key] = MollifiedReaction(r, eps, table=table)
    return cache[key]


def _gradient_energy(mesh: Mesh, u: np.ndarray, p: float, eta: float) -> float:
    s2 = np.sum(mesh.gradient(u) ** 2, axis=1)
    dens = (s2 + eta**2) ** (p / 2) - eta**p
    return float(np.sum(mesh.volumes * dens) / p)


def energy(
    mesh: Mesh,
    r: Reaction,
    ubar: Subsolution,
    u: FeFunction,
    eps: float,
    eta: float = 0.0,
    *,
    mollified: MollifiedReaction | None = None,
) -> float:
    r""":math:`J_\varepsilon(u) = \frac1p\int |\nabla u|^p - \int G_\varepsilon(\underline u, u)`.

    With ``eta > 0`` the gradient term is the smoothed density
    :math:`((|\nabla u|^2 + \eta^2)^{p/2} - \eta^p)/p`, whose derivative is
    exactly :func:`~plap.mesh.apply_Ap` with the same ``eta``.
    """
    m = mollified or MollifiedReaction(r, eps)
    uq = mesh.at_quadrature(u)
    ubq = mesh.at_quadrature(ubar.ubar)
    G = m.G(ubq, uq)
    return _gradient_energy(mesh, u.values, ubar.p, eta) - mesh.integrate(G)


def minimize_Jeps(
    mesh: Mesh,
    r: Reaction,
    ubar: Subsolution,
    eps: float,
    eta: float,
    init: FeFunction,
    tol: float = 1e-9,
    *,
    max_iter: int = 200,
    mollified: MollifiedReaction | None = None,
    newton: bool = True,
) -> MinimizationResult:
    """Damped descent on the discrete regularised energy.

    Each step solves ``H d = -(A_p(u) - b(u))`` on interior nodes, where
    ``b_i = int g_eps(ubar, u) psi_i`` and ``H`` is the exact Jacobian of
    the smoothed operator (the lagged-diffusivity stiffness with
    ``newton=False``, which is much slower for p > 2) plus the mass
    matrix weighted by the positive part of ``-d g_eps/ds``.  The step is
    backtracked until the Armijo condition holds.  Iteration stops when the
    dual norm ``sqrt(F . H^-1 F)`` of the Euler-Lagrange residual is below
    ``tol``, or once the predicted decrease ``F . H^-1 F`` is at the roundoff
    level of the energy itself.
    """
    p = ubar.p
    if p != 2 and not eta > 0:
        raise ValueError("eta must be positive for p != 2")
    if not init.is_zero_trace:
        raise ValueError("init must have zero trace")
    m = mollified or MollifiedReaction(r, eps)
    inner = _interior_mask(mesh)
    ubq = mesh.at_quadrature(ubar.ubar)

    def evaluate(u: np.ndarray):
        uq = mesh.at_quadrature(u)
        g, G = m.g_and_G(ubq, uq)
        J = _gradient_energy(mesh, u, p, eta) - mesh.integrate(G)
        return J, g

    u = init.values.copy()
    J, g = evaluate(u)
    energies, residuals, steps = [J], [], []
    for it in range(max_iter):
        F = apply_Ap(mesh, u, p, eta) - mesh.load_vector(g)
        dg = m.dg(ubq, mesh.at_quadrature(u))
        H = operator_matrix(mesh, u, p, eta, newton=newton) + weighted_mass(
            mesh, np.maximum(-dg, 0.0)
        )
        Hi = H[inner][:, inner].tocsc()
        d = np.zeros_like(u)
        d[inner] = -spla.spsolve(Hi, F[inner])
        slope = float(F[inner] @ d[inner])
        dual = math.sqrt(max(-slope, 0.0))
        residuals.append(dual)
        # below this the energy cannot resolve the predicted decrease
        roundoff = -slope <= 1e3 * np.finfo(float).eps * max(abs(J), 1.0)
        if dual < tol or roundoff:
            return MinimizationResult(FeFunction(mesh, u), energies, residuals, steps, it)

        alpha = 1.0
        while True:
            trial = u + alpha * d
            J_trial, g_trial = evaluate(trial)
            if J_trial <= J + 1e-4 * alpha * slope:
                break
            alpha *= 0.5
            if alpha < 1e-14:
                raise MinimizationStagnation(
                    f"line search stagnated at eps={eps:g} (dual residual {dual:.3e})",
                    energies,
                )
        if not J_trial < J:
            raise MinimizationStagnation(
                f"accepted step did not decrease the energy at eps={eps:g}", energies
            )
        u, J, g = trial, J_trial, g_trial
        energies.append(J)
        steps.append(alpha)
        log.debug("eps=%.4g it=%d J=%.12g dual=%.3e step=%.3g", eps, it, J, dual, alpha)

    raise MinimizationStagnation(
        f"no convergence in {max_iter} iterations at eps={eps:g}", energies
    )


# }}}


# {{{ continuation and residual


def geometric_schedule(n_start: int, n_end: int, geometric: bool = True) -> list[int]:
    if n_start < 2 or n_end < n_start:
        raise ValueError("schedule needs 2 <= n_start <= n_end")
    if not geometric:
        return list(range(n_start, n_end + 1))
    out = [n_start]
    while out[-1] * 2 <= n_end:
        out.append(out[-1] * 2)
    return out


def residual_v(mesh: Mesh, u: FeFunction, p: float, eta: float = 0.0) -> FeFunction:
    """Nodal representative of ``-Delta_p u`` through the lumped mass matrix.

    Interior values solve the diagonal system ``m_i v_i = A_p(u)_i``; the
    equation says nothing on the boundary, where each node takes the mean of
    its interior neighbours.
    """
    act = apply_Ap(mesh, u, p, eta)
    mass = mesh.lumped_mass
    if np.any(mass <= 0):
        raise ArithmeticError("singular lumped mass matrix")
    v = act / mass
    inner = _interior_mask(mesh)
    adj = _adjacency(mesh)
    wts = adj @ inner.astype(float)
    vals = adj @ np.where(inner, v, 0.0)
    bnd = mesh.boundary
    v[bnd] = np.where(wts[bnd] > 0, vals[bnd] / np.maximum(wts[bnd], 1), 0.0)
    return FeFunction(mesh, v)


def _adjacency(mesh: Mesh) -> sp.csr_matrix:
    k = mesh.dim + 1
    rows = np.repeat(mesh.simplices, k, axis=1).ravel()
    cols = np.tile(mesh.simplices, (1, k)).ravel()
    a = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(mesh.n_nodes,) * 2)
    a.data[:] = 1.0
    a.setdiag(0.0)
    a.eliminate_zeros()
    return a


def continuation(
    mesh: Mesh,
    r: Reaction,
    ubar: Subsolution,
    schedule: dict | list[int],
    tol: float = 1e-5,
    *,
    min_tol: float = 1e-9,
    newton: bool = True,
) -> ContinuationResult:
    """Solve the regularised problems for ``eps = 1/n`` along the schedule.

    Each solve starts from the previous solution (the first from ``ubar``);
    the gradient smoothing follows ``eta = eps``.  The loop stops early once
    the relative ``W^{1,p}`` increment falls below ``tol``.
    """
    if isinstance(schedule, dict):
        ns = geometric_schedule(
            int(schedule.get("n_start", 2)),
            int(schedule.get("n_end", 64)),
            bool(schedule.get("geometric", True)),
        )
    else:
        ns = [int(n) for n in schedule]
        if not ns or min(ns) < 2:
            raise ValueError("schedule must be nonempty with n >= 2")
    p = ubar.p
    cache: dict = {}
    u = FeFunction(mesh, np.maximum(ubar.ubar.values, 0.0))
    epsilons, sols, norms, incs = [], [], [], []
    traces, iters = [], []
    prev = None
    for n in ns:
        eps = 1.0 / n
        eta = eps
        try:
            res = minimize_Jeps(
                mesh, r, ubar, eps, eta, u, min_tol,
                mollified=_mollified(r, eps, cache), newton=newton,
            )
        except MinimizationStagnation as exc:
            raise ContinuationFailure(str(exc), eps) from exc
        u = res.u
        epsilons.append(eps)
        sols.append(u)
        norms.append(norm_W1p(u, p))
        traces.append(res.energies)
        iters.append(res.iterations)
        log.info("eps=1/%d: ||u||_1,p=%.8g iterations=%d", n, norms[-1], res.iterations)
        if prev is not None:
            incs.append(norm_W1p(u - prev, p))
            if incs[-1] < tol * norms[-1]:
                break
        prev = u

    eta_last = epsilons[-1] if p != 2 else 0.0
    v = residual_v(mesh, u, p, eta_last)
    last = _mollified(r, epsilons[-1], cache)
    uq = mesh.at_quadrature(u)
    load = mesh.load_vector(last.g(mesh.at_quadrature(ubar.ubar), uq))
    gap = apply_Ap(mesh, u, p, eta_last) - load
    gap[mesh.boundary] = 0.0
    diagnostics = {
        "energies": traces,
        "iterations": iters,
        "n": ns[: len(epsilons)],
        "L": max(norms),
        "k": ubar.k,
        "delta": ubar.delta,
        "lambda1": ubar.lambda1,
        "load_gap_l1": float(np.sum(np.abs(gap))),
    }
    return ContinuationResult(epsilons, sols, norms, u, v, incs, diagnostics)


# }}}
