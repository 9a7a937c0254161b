import math

import numpy as np
import pytest

from plap.eigen import first_eigenpair, rayleigh_quotient
from plap.mesh import FeFunction, build_mesh, norm_Lq
from plap.oracles import eigenvalue_closed_form


def test_interval_linear(eig_512):
    assert eig_512.lambda1 == pytest.approx(math.pi**2, rel=1e-4)
    phi = eig_512.phi1
    assert phi.is_zero_trace
    assert np.all(phi.values[1:-1] > 0)
    assert norm_Lq(phi, 2.0) == pytest.approx(1.0)
    # shape: sin(pi x) up to normalisation
    x = phi.mesh.nodes[:, 0]
    ref = np.sin(np.pi * x) * math.sqrt(2)
    assert np.max(np.abs(phi.values - ref)) < 1e-3


def test_history_monotone(eig_512):
    assert np.all(np.diff(eig_512.history) <= 0)


@pytest.mark.parametrize("p", [1.5, 3.0])
def test_nonlinear_interval(p):
    m = build_mesh("interval(0,1)", 256)
    eig = first_eigenpair(m, p)
    assert eig.lambda1 == pytest.approx(eigenvalue_closed_form(p), rel=2e-4)


def test_square_linear():
    eig = first_eigenpair(build_mesh("unit_square", 16), 2.0)
    assert eig.lambda1 == pytest.approx(2 * math.pi**2, rel=2e-2)
    assert eig.lambda1 > 2 * math.pi**2  # conforming P1 overestimates


def test_rayleigh_upper_bound(eig_512):
    # any other positive trial has a larger quotient
    m = eig_512.phi1.mesh
    trial = FeFunction.interpolate(m, lambda x: x * (1 - x))
    assert rayleigh_quotient(trial, 2.0) > eig_512.lambda1


def test_rejects_bad_p():
    with pytest.raises(ValueError):
        first_eigenpair(build_mesh("interval(0,1)", 8), 1.0)
