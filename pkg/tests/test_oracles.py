import math

import pytest

from plap.oracles import (
    dirichlet_max_time_map,
    eigenvalue_closed_form,
    eigenvalue_shooting,
    inverse_sqrt_max,
)


def test_linear_eigenvalue():
    assert eigenvalue_closed_form(2.0) == pytest.approx(math.pi**2, rel=1e-14)
    assert eigenvalue_closed_form(2.0, 2.0) == pytest.approx(math.pi**2 / 4, rel=1e-14)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0])
def test_shooting_matches_closed_form(p):
    assert eigenvalue_shooting(p) == pytest.approx(eigenvalue_closed_form(p), rel=1e-10)


def test_shooting_scaling():
    # lambda_1(L) = lambda_1(1) / L^p
    assert eigenvalue_shooting(3.0, 0.5) == pytest.approx(8 * eigenvalue_shooting(3.0), rel=1e-9)


def test_time_map_constant_source():
    assert dirichlet_max_time_map(lambda s: s, 2.0) == pytest.approx(0.125, rel=1e-10)


def test_time_map_inverse_sqrt():
    m = dirichlet_max_time_map(lambda s: 2 * math.sqrt(s), 2.0)
    assert m == pytest.approx(inverse_sqrt_max(), rel=1e-10)
    assert inverse_sqrt_max() == pytest.approx(0.2704218, abs=1e-7)


def test_time_map_p_laplacian_constant_source():
    # -(|u'|^{p-2} u')' = 1 on (0,1): max = (p-1)/p * (1/2)^{p/(p-1)}
    p = 3.0
    exact = (p - 1) / p * 0.5 ** (p / (p - 1))
    assert dirichlet_max_time_map(lambda s: s, p) == pytest.approx(exact, rel=1e-9)
