import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plap.mesh import (
    FeFunction,
    apply_Ap,
    build_mesh,
    integrate_distance_power,
    norm_Linf,
    norm_Lq,
    norm_W1p,
    operator_matrix,
    read_mesh,
    write_mesh,
    write_norm_table,
)


def test_interval_distance():
    m = build_mesh("interval(0,1)", 4)
    np.testing.assert_allclose(m.distance, [0, 0.25, 0.5, 0.25, 0])
    assert m.boundary.tolist() == [True, False, False, False, True]


def test_square_counts():
    m = build_mesh("unit_square", 4)
    assert (m.n_nodes, m.n_elements) == (25, 32)
    assert np.all(m.volumes > 0)
    assert math.isclose(m.volumes.sum(), 1.0)


def test_disk_boundary_on_circle():
    m = build_mesh("unit_disk", 4)
    r = np.linalg.norm(m.nodes[m.boundary], axis=1)
    np.testing.assert_allclose(r, 1.0, atol=1e-14)
    np.testing.assert_allclose(m.distance, 1 - np.linalg.norm(m.nodes, axis=1), atol=1e-14)
    assert np.all(m.volumes > 0)


@pytest.mark.parametrize("bad", ["torus", "interval(1,0)", 0])
def test_bad_domain(bad):
    with pytest.raises((ValueError, TypeError)):
        build_mesh(bad, 4)


def test_resolution_too_small():
    with pytest.raises(ValueError):
        build_mesh("unit_square", 1)


def test_stiffness_row_linear_case():
    # two elements of size 1/2: hat at the middle node
    m = build_mesh("interval(0,1)", 2)
    hat = FeFunction(m, [0.0, 1.0, 0.0])
    np.testing.assert_allclose(apply_Ap(m, hat, 2.0), [-2.0, 4.0, -2.0])


def test_apply_Ap_rejects_bad_args():
    m = build_mesh("interval(0,1)", 4)
    u = FeFunction.zeros(m)
    with pytest.raises(ValueError):
        apply_Ap(m, u, 1.0)
    with pytest.raises(ValueError):
        apply_Ap(m, u, 2.0, eta=-1)


def test_newton_matrix_is_jacobian():
    m = build_mesh("unit_square", 6)
    rng = np.random.default_rng(1)
    u = rng.standard_normal(m.n_nodes)
    d = rng.standard_normal(m.n_nodes)
    p, eta, t = 3.0, 0.1, 1e-6
    J = operator_matrix(m, u, p, eta, newton=True)
    fd = (apply_Ap(m, u + t * d, p, eta) - apply_Ap(m, u - t * d, p, eta)) / (2 * t)
    np.testing.assert_allclose(J @ d, fd, rtol=1e-6, atol=1e-8)


def test_norms():
    m = build_mesh("interval(0,1)", 256)
    u = FeFunction.interpolate(m, lambda x: np.sin(np.pi * x))
    assert math.isclose(norm_Lq(u, 2), math.sqrt(0.5), rel_tol=1e-4)
    assert math.isclose(norm_W1p(u, 2), math.pi / math.sqrt(2), rel_tol=1e-4)
    assert norm_Linf(u) == pytest.approx(1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(1.2, 4.0))
def test_monotonicity_property(seed_shift, p):
    # (A(u) - A(w)) . (u - w) >= 0 for the (smoothed) p-Laplacian
    m = build_mesh("unit_square", 5)
    rng = np.random.default_rng(int(seed_shift * 1e6))
    u, w = rng.standard_normal((2, m.n_nodes))
    for eta in (0.0, 0.05):
        gap = (apply_Ap(m, u, p, eta) - apply_Ap(m, w, p, eta)) @ (u - w)
        assert gap >= -1e-12


def test_distance_integral_interval():
    m = build_mesh("interval(0,1)", 64)
    res = integrate_distance_power(m, 0.5, 1.0)
    assert res.converged
    assert abs(res.value - 2 * math.sqrt(2)) < 1e-3


def test_distance_integral_divergence_flagged():
    m = build_mesh("interval(0,1)", 64)
    assert not integrate_distance_power(m, 0.75, 2.0).converged
    with pytest.raises(ValueError):
        integrate_distance_power(m, 0.5, 2.0)


def test_distance_integral_disk_converges():
    m = build_mesh("unit_disk", 8)
    assert integrate_distance_power(m, 0.5, 1.5).converged


def test_mesh_roundtrip(tmp_path):
    m = build_mesh("unit_disk", 3)
    write_mesh(m, tmp_path / "d.plapmesh")
    m2 = read_mesh(tmp_path / "d.plapmesh")
    np.testing.assert_array_equal(m.simplices, m2.simplices)
    np.testing.assert_allclose(m.nodes, m2.nodes)
    np.testing.assert_allclose(m.distance, m2.distance)
    assert (tmp_path / "d.plapmesh").read_text().startswith("plapmesh v1 2 ")


def test_norm_table(tmp_path):
    write_norm_table([("W1p", 2, 1.5), ("Lq", 3, 0.25)], tmp_path / "n.csv")
    lines = (tmp_path / "n.csv").read_text().splitlines()
    assert lines[0] == "quantity,p_or_q,value"
    assert len(lines) == 3


def test_zero_trace_helpers():
    m = build_mesh("interval(0,1)", 8)
    u = FeFunction.interpolate(m, lambda x: 1 + x)
    assert not u.is_zero_trace
    assert u.with_zero_trace().is_zero_trace
    assert ((u * 2) - u).values.tolist() == u.values.tolist()
