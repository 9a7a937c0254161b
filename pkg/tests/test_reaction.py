import json
import math

import numpy as np
import pytest
from scipy import integrate

from plap.reaction import (
    BreakpointGenerator,
    MollifiedReaction,
    Piece,
    Reaction,
    UnrepresentableReaction,
    check_hypotheses,
    compile_formula,
    eval_envelopes,
    eval_f,
    growth_constants,
    mollifier_rho,
    mollify,
    preset,
    primitive_G,
    truncate,
)

PI2 = math.pi**2


@pytest.fixture(scope="module")
def singular():
    return preset("paper_singular", gamma=0.5, lam=0.0)


@pytest.fixture(scope="module")
def inv_sqrt():
    return preset("inverse_power", gamma=0.5)


def step():
    return Reaction((Piece(0, 1, "0"), Piece(1, math.inf, "1")), {1.0: 0.5})


# {{{ evaluation


def test_eval_singular_examples(singular):
    assert eval_f(singular, 0.4) == pytest.approx(math.sqrt(2))
    assert eval_f(singular, 1.5) == 0.0
    assert eval_f(preset("inverse_power", gamma=0.5), 4.0) == pytest.approx(0.5)


def test_eval_rejects_nonpositive(singular):
    for s in (0.0, -1.0):
        with pytest.raises(ValueError):
            eval_f(singular, s)
        with pytest.raises(ValueError):
            eval_envelopes(singular, s)


def test_envelopes_at_breakpoints(singular):
    assert eval_envelopes(singular, 0.5) == pytest.approx((1.0, math.sqrt(2)))
    assert eval_envelopes(singular, 1.0) == pytest.approx((0.0, 1.0))


def test_envelopes_continuous(inv_sqrt):
    s = np.geomspace(1e-3, 1e3, 50)
    lo, hi = eval_envelopes(inv_sqrt, s)
    np.testing.assert_allclose(lo, s**-0.5)
    np.testing.assert_allclose(hi, s**-0.5)


def test_envelope_ordering_and_continuity_points(singular):
    rng = np.random.default_rng(3)
    s = np.concatenate([rng.uniform(1e-3, 3, 10_000), 1 / np.arange(2, 200)])
    lo, hi = eval_envelopes(singular, s)
    assert np.all(lo <= hi)
    cont = singular.discontinuity_distance(s) > 1e-8
    f = eval_f(singular, s[cont])
    np.testing.assert_array_equal(lo[cont], f)
    np.testing.assert_array_equal(hi[cont], f)


def test_point_value_mutation_does_not_move_envelopes():
    base = preset("paper_singular", gamma=0.5, lam=2.0)
    mutated = Reaction(base.pieces, {1.0: 123.0}, base.gamma, base.generators)
    s = np.array([0.5, 1.0, 2.0, 3.0])
    for a, b in zip(eval_envelopes(base, s), eval_envelopes(mutated, s)):
        np.testing.assert_array_equal(a, b)
    assert eval_f(mutated, 1.0) == 123.0 != eval_f(base, 1.0)


def test_formula_compiler():
    f = compile_formula("floor(1/s)^0.5 + chi(0, 1) * 2")
    np.testing.assert_allclose(f(np.array([0.4, 1.5])), [math.sqrt(2) + 2, 0.0])
    for bad in ("__import__('os')", "s.real", "open(1)", "lambda: 1", "'a'"):
        with pytest.raises(ValueError):
            compile_formula(bad)


def test_structural_errors():
    with pytest.raises(ValueError, match="gap"):
        Reaction((Piece(0, 1, "1"), Piece(2, math.inf, "1")), {1.0: 1.0})
    with pytest.raises(ValueError, match="negative"):
        Reaction((Piece(0, math.inf, "s - 1"),), {})
    with pytest.raises(ValueError, match="point value"):
        Reaction((Piece(0, 1, "1"), Piece(1, math.inf, "1")), {})


def test_positive_measure_family_unrepresentable():
    with pytest.raises(UnrepresentableReaction):
        BreakpointGenerator("fat_cantor")
    doc = preset("paper_singular").to_dict()
    doc["breakpoint_generator"] = {"kind": "rationals"}
    with pytest.raises(UnrepresentableReaction):
        Reaction.from_dict(doc)


def test_generator_cutoff(singular):
    b = singular.breakpoints_in(1e-6, 1.0)
    assert b.min() == pytest.approx(1e-4)
    assert 1.0 in b and 0.5 in b


def test_json_roundtrip(singular):
    doc = json.loads(singular.to_json())
    assert set(doc) >= {"pieces", "point_values", "gamma", "breakpoint_generator"}
    back = Reaction.from_json(singular.to_json())
    s = np.geomspace(1e-3, 10, 300)
    np.testing.assert_array_equal(eval_f(back, s), eval_f(singular, s))
    for a, b in zip(eval_envelopes(back, s), eval_envelopes(singular, s)):
        np.testing.assert_array_equal(a, b)


# }}}


# {{{ hypotheses


def test_hypotheses_presets_hold(singular):
    rep = check_hypotheses(singular, 2.0, PI2)
    assert rep.holds_all
    assert rep.delta >= 0.05 and rep.delta_witness["margin"] > 0
    assert rep.sublinear_witness["chat"] < PI2
    nonsing = check_hypotheses(preset("paper_nonsingular", sigma=1.0, g="s"), 2.0, PI2)
    assert nonsing.holds_all


def test_hypotheses_boundary_case_fails():
    rep = check_hypotheses(preset("power", coef=PI2, p=2.0), 2.0, PI2)
    assert not rep.holds_iii


def test_hypotheses_vi_vacuous_for_inverse_power(inv_sqrt):
    rep = check_hypotheses(inv_sqrt, 2.0, PI2)
    assert rep.holds_vi and rep.holds_all


def test_hypotheses_report_json(singular):
    doc = json.loads(check_hypotheses(singular, 2.0, PI2).to_json())
    assert doc["holds_iii"] is True and "gamma" in doc["gamma_witness"]


def test_hypotheses_vi_violation_detected():
    # f_lower(1) = 0 but f(1) = 5
    r = Reaction((Piece(0, 1, "1/s"), Piece(1, math.inf, "0")), {1.0: 5.0}, 0.5)
    assert not check_hypotheses(r, 2.0, PI2).holds_vi


# }}}


# {{{ truncation and mollification


def test_truncate(inv_sqrt):
    assert truncate(inv_sqrt, 0.3, -5) == pytest.approx(1.82574, abs=1e-5)
    assert truncate(inv_sqrt, 0.3, 0.7) == pytest.approx(1.19523, abs=1e-5)
    assert truncate(inv_sqrt, 0.3, -1.0) == truncate(inv_sqrt, 0.3, 0.2)
    with pytest.raises(ValueError):
        truncate(inv_sqrt, 0.0, 1.0)


def test_rho_properties():
    assert mollifier_rho(1.0) == mollifier_rho(-1.0) == mollifier_rho(1.5) == 0.0
    total, _ = integrate.quad(mollifier_rho, -1, 1, epsabs=1e-14, epsrel=1e-13)
    assert abs(total - 1) < 1e-10
    t = np.linspace(-0.99, 0.99, 101)
    np.testing.assert_array_equal(mollifier_rho(t), mollifier_rho(-t))


def test_mollify_step_symmetry():
    assert abs(mollify(step(), 0.1, 1.0, 0.2) - 0.5) < 1e-8


def test_mollify_constant_and_primitive():
    c = preset("constant", value=3.0)
    assert mollify(c, 0.2, 0.7, 0.3) == pytest.approx(3.0)
    assert primitive_G(c, 0.2, 0.0, 0.3) == 0.0
    assert primitive_G(c, 0.2, 1.3, 0.3) == pytest.approx(3.9)
    assert primitive_G(c, 0.2, -1.0, 0.3) == pytest.approx(-3.0)


def test_mollify_rejects_eps(singular):
    for eps in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            mollify(singular, 0.1, 0.5, eps)


def test_primitive_monotone(singular):
    s = np.linspace(-0.5, 2.0, 12)
    G = [primitive_G(singular, 0.05, x, 0.1) for x in s]
    assert np.all(np.diff(G) >= -1e-10)


def test_mollify_converges_away_from_jumps(singular):
    smooth = preset("paper_nonsingular", sigma=1.0, g="s^2")
    errs = [abs(mollify(smooth, 0.05, 0.5, e) - truncate(smooth, 0.05, 0.5))
            for e in (0.1, 0.01, 0.001)]
    assert errs[0] > errs[1] > errs[2]
    # piecewise constant: exact once the window clears the jumps at 1/2 and 1/3
    errs = [abs(mollify(singular, 0.05, 0.45, e) - truncate(singular, 0.05, 0.45))
            for e in (0.1, 0.01, 0.001)]
    assert errs[0] > errs[1] == errs[2] == 0.0


def test_mollified_reaction_matches_reference(singular):
    ub = 0.02
    s = np.array([-0.3, 0.0, 0.01, 0.05, 0.13, 0.27, 0.5, 0.99, 1.2])
    for eps in (0.5, 0.1, 1 / 64):
        m = MollifiedReaction(singular, eps)
        ref = np.array([mollify(singular, ub, x, eps) for x in s])
        np.testing.assert_allclose(m.g(ub, s), ref, atol=1e-4)
        h = 1e-6
        dG = (m.G(ub, s + h) - m.G(ub, s - h)) / (2 * h)
        np.testing.assert_allclose(dG, m.g(ub, s), atol=1e-7)
        np.testing.assert_allclose(
            m.G(ub, np.array([0.27])), primitive_G(singular, ub, 0.27, eps), atol=1e-6
        )
        assert m.G(ub, np.array([0.0]))[0] == 0.0


# }}}


# {{{ growth constants


def test_growth_constants_inverse_sqrt(inv_sqrt):
    gc = growth_constants(inv_sqrt, 2.0, PI2)
    assert gc.c1 == pytest.approx(1.0, rel=1e-6)
    assert gc.c2 < PI2
    assert gc.M == pytest.approx(1.0, rel=1e-6)


def test_growth_constants_constant():
    gc = growth_constants(preset("constant", value=2.0), 2.0, PI2)
    assert gc.c3 >= 2.0 and gc.c2 < PI2


def test_growth_constants_need_hypotheses():
    with pytest.raises(ValueError):
        growth_constants(preset("power", coef=PI2), 2.0, PI2)


# }}}
