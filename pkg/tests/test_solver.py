import math

import numpy as np
import pytest

from plap.eigen import first_eigenpair
from plap.mesh import FeFunction, apply_Ap, build_mesh, norm_Linf
from plap.oracles import inverse_sqrt_max
from plap.reaction import MollifiedReaction, check_hypotheses, preset
from plap.solver import (
    SubsolutionFailure,
    build_subsolution,
    continuation,
    energy,
    geometric_schedule,
    minimize_Jeps,
    residual_v,
    subsolution_defect,
)


@pytest.fixture(scope="module")
def interval_128():
    m = build_mesh("interval(0,1)", 128)
    return m, first_eigenpair(m, 2.0)


def _sub(mesh, eig, r):
    return build_subsolution(mesh, eig, r, check_hypotheses(r, eig.p, eig.lambda1))


def test_schedule():
    assert geometric_schedule(2, 64) == [2, 4, 8, 16, 32, 64]
    assert geometric_schedule(2, 5, geometric=False) == [2, 3, 4, 5]
    with pytest.raises(ValueError):
        geometric_schedule(1, 8)


def test_subsolution_verified(interval_128):
    m, eig = interval_128
    r = preset("paper_singular", gamma=0.5, lam=0.0)
    sub = _sub(m, eig, r)
    assert np.max(sub.ubar.values) < sub.delta / 2
    assert sub.k == pytest.approx((1 - 2.0**-20) * sub.delta / (2 * np.max(eig.phi1.values)))
    assert np.max(subsolution_defect(m, r, sub.ubar.values, 2.0)) <= 1e-8


def test_subsolution_needs_delta(interval_128):
    m, eig = interval_128
    r = preset("power", coef=math.pi**2, p=2.0)
    with pytest.raises(SubsolutionFailure):
        build_subsolution(m, eig, r, check_hypotheses(r, 2.0, eig.lambda1))


def test_energy_gradient(interval_128):
    m, eig = interval_128
    r = preset("paper_singular", gamma=0.5, lam=0.0)
    sub = _sub(m, eig, r)
    mol = MollifiedReaction(r, 0.25)
    rng = np.random.default_rng(0)
    u = FeFunction(m, np.where(m.boundary, 0.0, 0.1 + 0.05 * rng.random(m.n_nodes)))
    d = FeFunction(m, np.where(m.boundary, 0.0, rng.standard_normal(m.n_nodes)))
    t = 1e-6
    fd = (energy(m, r, sub, u + d * t, 0.25, mollified=mol)
          - energy(m, r, sub, u - d * t, 0.25, mollified=mol)) / (2 * t)
    ubq, uq = m.at_quadrature(sub.ubar), m.at_quadrature(u)
    grad = apply_Ap(m, u, 2.0) - m.load_vector(mol.g(ubq, uq))
    assert fd == pytest.approx(grad @ d.values, rel=1e-5)


def test_minimize_rejects_bad_init(interval_128):
    m, eig = interval_128
    r = preset("constant", value=1.0)
    sub = _sub(m, eig, r)
    with pytest.raises(ValueError):
        minimize_Jeps(m, r, sub, 0.5, 0.0, FeFunction.interpolate(m, lambda x: 1 + x))


def test_constant_source(interval_128):
    m, eig = interval_128
    r = preset("constant", value=1.0)
    res = continuation(m, r, _sub(m, eig, r), {"n_start": 2, "n_end": 8})
    # P1 is nodally exact for -u'' = 1 in 1D
    assert norm_Linf(res.limit) == pytest.approx(0.125, abs=1e-9)
    for trace in res.diagnostics["energies"]:
        assert np.all(np.diff(trace) <= 0)
    np.testing.assert_allclose(res.residual_field.values[1:-1], 1.0, atol=1e-8)


def test_inverse_sqrt(interval_128):
    m, eig = interval_128
    r = preset("inverse_power", gamma=0.5)
    sub = _sub(m, eig, r)
    res = continuation(m, r, sub, {"n_start": 2, "n_end": 32})
    assert norm_Linf(res.limit) == pytest.approx(inverse_sqrt_max(), rel=1e-2)
    assert np.all(res.limit.values >= sub.ubar.values - 1e-8)


def test_p3_constant_source():
    m = build_mesh("interval(0,1)", 256)
    eig = first_eigenpair(m, 3.0)
    r = preset("constant", value=1.0)
    res = continuation(m, r, _sub(m, eig, r), [2, 64, 1024])
    exact = 2 / 3 * 0.5**1.5
    assert norm_Linf(res.limit) == pytest.approx(exact, rel=1e-2)


def test_residual_v_quadratic():
    m = build_mesh("interval(0,1)", 64)
    u = FeFunction.interpolate(m, lambda x: x * (1 - x) / 2)
    v = residual_v(m, u, 2.0)
    np.testing.assert_allclose(v.values, 1.0, atol=1e-10)
