import dataclasses
import json
import math

import numpy as np
import pytest

from plap.mesh import FeFunction, build_mesh
from plap.reaction import check_hypotheses, growth_constants, preset
from plap.verify import (
    GrowthViolation,
    check_boundary_growth,
    check_dist_integrability,
    check_growth_envelope,
    check_hardy,
    check_inclusion,
    check_strong_solution,
    check_subsolution,
    check_vbound,
    hardy_ratio,
    interior_points,
    verify_run,
)


@pytest.fixture(scope="module")
def mesh():
    return build_mesh("interval(0,1)", 64)


@pytest.fixture(scope="module")
def quad(mesh):
    return FeFunction.interpolate(mesh, lambda x: x * (1 - x) / 2)


def test_interior_points(mesh):
    mask = interior_points(mesh)
    assert mask.sum() == mesh.n_elements - 2


def test_inclusion_exact(quad):
    one = FeFunction.interpolate(quad.mesh, lambda x: np.ones_like(x))
    res = check_inclusion(quad, one, preset("constant", value=1.0))
    assert res.fraction == 1.0 and res.worst == 0.0


def test_inclusion_detects_shift(quad):
    off = FeFunction.interpolate(quad.mesh, lambda x: np.full_like(x, 1.5))
    res = check_inclusion(quad, off, preset("constant", value=1.0), c_slack=0.0)
    assert res.fraction == 0.0 and res.worst == pytest.approx(0.5)


def test_inclusion_rejects_nonpositive(mesh):
    z = FeFunction.zeros(mesh)
    with pytest.raises(ValueError):
        check_inclusion(z, z, preset("constant", value=1.0))


def test_subsolution_margin(quad):
    assert check_subsolution(quad, quad * 0.5) == 0.0
    assert check_subsolution(quad * 0.5, quad) < 0


def test_boundary_growth(quad):
    l_hat, sup = check_boundary_growth(quad)
    assert 0.4 < l_hat <= 0.5 and sup == pytest.approx(0.5 - 1 / 128)


def test_hardy_distance_interpolant():
    m = build_mesh("interval(0,1)", 128)
    d = FeFunction(m, m.distance)
    assert hardy_ratio(d, 2.0, 0.5) == pytest.approx(math.sqrt(2) / 3, abs=1e-4)
    assert check_hardy(m, 2.0, 0.5, n_samples=4) >= hardy_ratio(d, 2.0, 0.5)
    with pytest.raises(ValueError):
        check_hardy(m, 2.0, 1.5)


def test_dist_integrability(mesh):
    out = check_dist_integrability(mesh, [(0.5, 1.0), (0.5, 2.0), (0.75, 2.0)])
    assert out[0]["converged"] and abs(out[0]["value"] - 2 * math.sqrt(2)) < 1e-3
    assert not out[1]["converged"] and not out[2]["converged"]


def test_vbound(quad):
    one = FeFunction.interpolate(quad.mesh, lambda x: np.ones_like(x))
    assert 0.6 < check_vbound(quad, one, 0.5) <= math.sqrt(0.5)


def test_strong_vacuous_for_continuous(quad):
    one = FeFunction.interpolate(quad.mesh, lambda x: np.ones_like(x))
    res = check_strong_solution(quad, one, preset("constant", value=1.0))
    assert res.vacuous and res.quantiles["q99"] == 0.0


def test_strong_plateau_detected():
    m = build_mesh("interval(0,1)", 64)
    u = FeFunction.interpolate(m, lambda x: np.minimum(1.0, 4 * np.minimum(x, 1 - x)))
    r = preset("plateau_step", sigma=1.0, level=1.0)
    zero = FeFunction.zeros(m)
    res = check_strong_solution(u, zero, r)
    assert res.status == "passed" and res.plateau_points > 0
    bump = FeFunction(m, np.full(m.n_nodes, 0.3))
    assert check_strong_solution(u, bump, r).status == "failed"


def test_growth_envelope_holds(mesh):
    r = preset("paper_singular", gamma=0.5, lam=0.0)
    ub = FeFunction.interpolate(mesh, lambda x: 0.01 * np.sin(np.pi * x))
    out = check_growth_envelope(r, ub, 2.0, math.pi**2, n_samples=200, seed=1)
    assert out["ok"] and out["c2_below_lambda1"] and out["worst_ratio"] <= 1


def test_growth_envelope_violation(mesh):
    r = preset("paper_singular", gamma=0.5, lam=0.0)
    ub = FeFunction.interpolate(mesh, lambda x: 0.01 * np.sin(np.pi * x))
    gc = growth_constants(r, 2.0, math.pi**2, check_hypotheses(r, 2.0, math.pi**2))
    tiny = dataclasses.replace(gc, c1=1e-6, c2=1e-6, c3=1e-6)
    with pytest.raises(GrowthViolation) as info:
        check_growth_envelope(r, ub, 2.0, math.pi**2, n_samples=50, constants=tiny)
    assert len(info.value.witness) == 3


def test_verify_run_writes(tmp_path, quad):
    m = quad.mesh
    one = FeFunction.interpolate(m, lambda x: np.ones_like(x))
    rep = verify_run(m, preset("constant", value=1.0), quad, one, quad * 0.5, p=2.0,
                     out_dir=tmp_path)
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["inclusion"]["fraction"] == 1.0
    assert "hardy_constant" in doc["skipped"]
    assert (tmp_path / "inclusion.csv").read_text().startswith("x,u,v,f_lower,f_upper")
    assert rep.subsolution_margin >= 0
