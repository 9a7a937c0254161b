"""A-posteriori certification of pipeline outputs.

Every check reads its inputs and returns plain numbers; none of them feed back
into the solver.  "Interior quadrature points" are the quadrature points of
elements with no boundary vertex, where the nodal residual field is defined by
the equation at every vertex.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .mesh import (
    FeFunction,
    Mesh,
    graded_rule,
    integrate_distance_power,
    norm_Linf,
    norm_W1p,
)
from .reaction import (
    GrowthConstants,
    Reaction,
    eval_envelopes,
    eval_f,
    growth_constants,
    mollify,
)

__all__ = [
    "InclusionResult",
    "StrongResult",
    "GrowthViolation",
    "VerificationReport",
    "interior_points",
    "check_inclusion",
    "check_subsolution",
    "check_boundary_growth",
    "check_hardy",
    "hardy_ratio",
    "check_strong_solution",
    "check_growth_envelope",
    "check_vbound",
    "check_dist_integrability",
    "verify_run",
]


class GrowthViolation(AssertionError):
    def __init__(self, message: str, witness: tuple[float, float, float]):
        super().__init__(message)
        self.witness = witness


def interior_points(mesh: Mesh) -> np.ndarray:
    """Mask of elements without a boundary vertex."""
    return ~mesh.touches_boundary


def _values_at_interior_points(mesh: Mesh, *fns: FeFunction) -> list[np.ndarray]:
    mask = interior_points(mesh)
    return [mesh.at_quadrature(f)[mask].ravel() for f in fns]


# {{{ inclusion and sub-solution


class InclusionResult(NamedTuple):
    fraction: float
    worst: float
    n_points: int


def check_inclusion(
    u: FeFunction, v: FeFunction, r: Reaction, tol: float = 1e-2, c_slack: float = 1.0
) -> InclusionResult:
    """Share of interior quadrature points with ``f_lo(u) - t <= v <= f_hi(u) + t``.

    ``t = tol + c_slack * h``.  ``worst`` is the largest violation beyond the
    envelopes without the allowance (0 when the sandwich holds exactly).
    """
    mesh = u.mesh
    if np.any(u.values[~mesh.boundary] <= 0):
        raise ValueError("u must be positive at interior nodes")
    uq, vq = _values_at_interior_points(mesh, u, v)
    lo, hi = eval_envelopes(r, uq)
    slack = tol + c_slack * mesh.h
    excess = np.maximum(lo - vq, vq - hi)
    ok = excess <= slack
    return InclusionResult(float(np.mean(ok)), float(max(np.max(excess), 0.0)), int(uq.size))


def check_subsolution(u: FeFunction, ubar) -> float:
    """Minimum nodal value of ``u - ubar``."""
    ub = getattr(ubar, "ubar", ubar)
    return float(np.min(u.values - ub.values))


# }}}


# {{{ distance comparisons


def check_boundary_growth(
    u: FeFunction, mesh: Mesh | None = None, band: float | None = None
) -> tuple[float, float]:
    """``(l_hat, ratio_sup)`` for ``u/d`` on the near-boundary band and everywhere."""
    mesh = mesh or u.mesh
    inner = ~mesh.boundary
    d = mesh.distance
    band = 0.1 * mesh.diameter if band is None else band
    ratio = u.values[inner] / d[inner]
    near = d[inner] < band
    l_hat = float(np.min(ratio[near])) if np.any(near) else math.nan
    return l_hat, float(np.max(ratio))


def hardy_ratio(u: FeFunction, p: float, gamma: float, depth: int = 20) -> float:
    r""":math:`\int d^{-\gamma}|u| / \|\nabla u\|_p` with boundary-graded quadrature."""
    mesh = u.mesh
    rule = graded_rule(mesh, depth)
    w = rule.weights * mesh.distance_at(rule.points) ** (-gamma)
    num = float(np.sum(w * np.abs(rule.evaluate(mesh, u))))
    return num / norm_W1p(u, p)


def _random_smooth(mesh: Mesh, rng: np.random.Generator) -> FeFunction:
    x = mesh.nodes
    a = rng.uniform(0.75, 2.0)
    modes = rng.integers(1, 4, size=(3, mesh.dim))
    phases = rng.uniform(0, 2 * np.pi, size=3)
    coef = rng.uniform(-0.3, 0.3, size=3)
    wave = 1.0 + np.sum(
        coef * np.cos(np.pi * (x @ modes.T) + phases), axis=1
    )
    vals = mesh.distance**a * wave
    vals[mesh.boundary] = 0.0
    return FeFunction(mesh, vals)


def check_hardy(
    mesh: Mesh, p: float, gamma: float, n_samples: int = 32, seed: int = 0
) -> float:
    """Empirical lower estimate of the weighted Hardy constant.

    Maximum of :func:`hardy_ratio` over the distance interpolant and
    ``n_samples`` random smooth positive zero-trace functions
    ``d^a (1 + sum c cos(...))``; the random draws depend only on ``seed``,
    so refinements see the same functions.
    """
    if not (0 < gamma < 1 < p):
        raise ValueError("need 0 < gamma < 1 < p")
    rng = np.random.default_rng(seed)
    d = FeFunction(mesh, np.where(mesh.boundary, 0.0, mesh.distance))
    best = hardy_ratio(d, p, gamma)
    for _ in range(n_samples):
        best = max(best, hardy_ratio(_random_smooth(mesh, rng), p, gamma))
    return best


def check_dist_integrability(
    mesh: Mesh, pairs: list[tuple[float, float]]
) -> list[dict]:
    out = []
    for gamma, q in pairs:
        if abs(gamma * q - 1) < 1e-12:
            out.append({"gamma": gamma, "q": q, "converged": False, "value": math.inf})
            continue
        res = integrate_distance_power(mesh, gamma, q)
        out.append({
            "gamma": gamma, "q": q, "value": res.value, "previous": res.previous,
            "converged": res.converged, "predicted": gamma * q < 1,
        })
    return out


def check_vbound(u: FeFunction, v: FeFunction, gamma: float, mesh: Mesh | None = None) -> float:
    """``max v d^gamma`` over interior quadrature points."""
    mesh = mesh or u.mesh
    mask = interior_points(mesh)
    pts, _ = mesh.quadrature
    d = mesh.distance_at(pts[mask].reshape(-1, mesh.dim))
    (vq,) = _values_at_interior_points(mesh, v)
    return float(np.max(vq * d**gamma))


# }}}


# {{{ strong solution and locality


@dataclass
class StrongResult:
    quantiles: dict[str, float]
    near_fraction: float
    plateau_points: int
    plateau_max_abs_v: float | None
    status: str

    @property
    def vacuous(self) -> bool:
        return self.status == "vacuous"


def check_strong_solution(
    u: FeFunction,
    v: FeFunction,
    r: Reaction,
    band: float = 1e-2,
    tol: float = 5e-2,
    level_band: float | None = None,
    level: float | None = None,
) -> StrongResult:
    """Residual ``|v - f(u)|`` away from jump levels and ``|v|`` on plateaus.

    NEAR points have ``u`` within ``level_band`` (default ``band``) of the
    discontinuity set; among those, plateau points also have ``|grad u| <
    band``.  Passing ``level`` restricts the plateau set to ``|u - level| <
    level_band``.  The status is ``vacuous`` when no plateau point exists, otherwise
    ``passed`` or ``failed`` according to ``max |v| < tol`` there.
    """
    mesh = u.mesh
    if np.any(u.values[~mesh.boundary] <= 0):
        raise ValueError("u must be positive at interior nodes")
    level_band = band if level_band is None else level_band
    mask = interior_points(mesh)
    uq, vq = _values_at_interior_points(mesh, u, v)
    grad = np.linalg.norm(mesh.gradient(u), axis=1)[mask]
    nq = mesh.quadrature[1].shape[1]
    gq = np.repeat(grad, nq)
    near = r.discontinuity_distance(uq) < level_band
    far = ~near
    quant = {}
    if np.any(far):
        res = np.abs(vq[far] - eval_f(r, uq[far]))
        quant = {f"q{k}": float(np.quantile(res, k / 100)) for k in (50, 90, 99)}
    if level is None:
        plateau = near & (gq < band)
    else:
        plateau = (np.abs(uq - level) < level_band) & (gq < band)
    if np.any(plateau):
        vmax = float(np.max(np.abs(vq[plateau])))
        status = "passed" if vmax < tol else "failed"
    else:
        vmax, status = None, "vacuous"
    return StrongResult(quant, float(np.mean(near)), int(np.sum(plateau)), vmax, status)


# }}}


# {{{ growth envelope


def check_growth_envelope(
    r: Reaction,
    ubar,
    p: float,
    lambda1: float,
    n_samples: int = 10_000,
    seed: int = 0,
    constants: GrowthConstants | None = None,
    s_max: float = 100.0,
) -> dict:
    """Sample ``(x_q, s, eps)`` and check the growth bound on ``g_eps``.

    Values of ``g_eps`` come from the reference quadrature in
    :func:`plap.reaction.mollify`, not from the solver's tabulated form.
    Raises :class:`GrowthViolation` with the first offending triple.
    """
    ub = getattr(ubar, "ubar", ubar)
    mesh = ub.mesh
    if constants is None:
        constants = growth_constants(
            r, p, lambda1, ubar_sup=max(float(np.max(ub.values)), 1e-300)
        )
    if not constants.c2 < lambda1:
        raise GrowthViolation("c2 must be strictly below lambda1", (math.nan,) * 3)
    rng = np.random.default_rng(seed)
    ubq = mesh.at_quadrature(ub).ravel()
    ubq = ubq[ubq > 0]
    xs = ubq[rng.integers(0, ubq.size, n_samples)]
    half = n_samples // 2
    mag = np.concatenate([
        10 ** rng.uniform(-6, math.log10(s_max), half),
        rng.uniform(0, s_max, n_samples - half),
    ])
    s = mag * rng.choice([-1.0, 1.0], n_samples)
    eps = rng.choice([0.5, 0.1, 0.01], n_samples)
    worst = 0.0
    for x, si, ei in zip(xs, s, eps):
        g = mollify(r, float(x), float(si), float(ei))
        bound = float(constants.bound(x, si))
        if g < 0 or g > bound * (1 + 1e-12):
            raise GrowthViolation(
                f"growth bound violated: g = {g:g} > {bound:g}", (float(x), float(si), float(ei))
            )
        worst = max(worst, g / bound)
    return {
        "ok": True,
        "n_samples": n_samples,
        "worst_ratio": worst,
        "c1": constants.c1,
        "c2": constants.c2,
        "c3": constants.c3,
        "lambda1": lambda1,
        "c2_below_lambda1": constants.c2 < lambda1,
    }


# }}}


# {{{ report


@dataclass
class VerificationReport:
    inclusion: dict | None = None
    subsolution_margin: float | None = None
    boundary_growth: dict | None = None
    uniform_bound: float | None = None
    hardy_constant: float | None = None
    dist_integrability: list | None = None
    strong_residual: dict | None = None
    locality_diagnostic: dict | None = None
    vbound: float | None = None
    linf: float | None = None
    growth_envelope: dict | None = None
    skipped: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        for name, val in list(out.items()):
            if val is None and name not in self.skipped:
                self.skipped[name] = "not requested"
        out["skipped"] = dict(self.skipped)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=float)


def write_point_csv(path: str | Path, header: list[str], columns: list[np.ndarray]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([repr(float(c)) for c in row])


def verify_run(
    mesh: Mesh,
    r: Reaction,
    u: FeFunction,
    v: FeFunction,
    ubar: FeFunction | None = None,
    *,
    p: float,
    w1p_norms: list[float] | None = None,
    tol: float = 1e-2,
    band: float = 1e-2,
    hardy_samples: int = 16,
    seed: int = 0,
    out_dir: str | Path | None = None,
) -> VerificationReport:
    """Run every applicable check on one solution and optionally write CSVs."""
    rep = VerificationReport()
    inc = check_inclusion(u, v, r, tol)
    rep.inclusion = inc._asdict()
    if ubar is not None:
        rep.subsolution_margin = check_subsolution(u, ubar)
    else:
        rep.skipped["subsolution_margin"] = "no sub-solution supplied"
    l_hat, sup = check_boundary_growth(u, mesh)
    rep.boundary_growth = {"l_hat": l_hat, "ratio_sup": sup}
    if w1p_norms:
        rep.uniform_bound = float(max(w1p_norms))
    else:
        rep.skipped["uniform_bound"] = "no continuation history supplied"
    gamma = r.gamma
    if gamma is not None:
        rep.hardy_constant = check_hardy(mesh, p, gamma, hardy_samples, seed)
        rep.dist_integrability = check_dist_integrability(
            mesh, [(gamma, 1.0), (gamma, 0.5 * (1 + 1 / gamma)), (gamma, 1.5 / gamma)]
        )
        rep.vbound = check_vbound(u, v, gamma, mesh)
    else:
        for k in ("hardy_constant", "dist_integrability", "vbound"):
            rep.skipped[k] = "reaction declares no singular exponent"
    strong = check_strong_solution(u, v, r, band)
    rep.strong_residual = {"quantiles": strong.quantiles, "near_fraction": strong.near_fraction}
    rep.locality_diagnostic = {
        "status": strong.status,
        "plateau_points": strong.plateau_points,
        "max_abs_v": strong.plateau_max_abs_v,
    }
    rep.linf = norm_Linf(u)
    rep.skipped["growth_envelope"] = "run separately (sampling cost)"

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        mask = interior_points(mesh)
        pts, _ = mesh.quadrature
        uq, vq = _values_at_interior_points(mesh, u, v)
        lo, hi = eval_envelopes(r, uq)
        cols = [pts[mask].reshape(-1, mesh.dim)[:, i] for i in range(mesh.dim)]
        names = ["x", "y"][: mesh.dim]
        write_point_csv(out / "inclusion.csv", names + ["u", "v", "f_lower", "f_upper"],
                        cols + [uq, vq, lo, hi])
        inner = ~mesh.boundary
        write_point_csv(out / "boundary_growth.csv", ["d", "u", "ratio"],
                        [mesh.distance[inner], u.values[inner],
                         u.values[inner] / mesh.distance[inner]])
        (out / "report.json").write_text(rep.to_json())
    return rep


# }}}
