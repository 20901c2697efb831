import math

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdsynth.accounting import (DEFAULT_DELTA, DpBudget, InfeasibleBudget, adv_compose, amplify,
                                budget_report, check_delta, max_t_for_delta, model_budget,
                                parameter_budget, seq_compose, solve_per_query, structure_budget,
                                theorem1_params)

mpmath.mp.dps = 40


def mp_adv(eps, count, slack):
    """Independent high-precision evaluation of advanced composition."""
    e = mpmath.mpf(eps)
    return e * mpmath.sqrt(2 * count * mpmath.log(1 / mpmath.mpf(slack))) + count * e * mpmath.expm1(e)


# ---- theorem1_params

def test_theorem1_reference_point():
    b = theorem1_params(50, 4, 1, 10)
    assert b.eps == pytest.approx(1 + math.log(1 + 4 / 10), rel=1e-12)
    assert b.eps == pytest.approx(1.3364722366, rel=1e-9)
    assert b.delta == pytest.approx(float(mpmath.exp(-40)), rel=1e-9)
    assert b.delta == pytest.approx(4.24835425529e-18, rel=1e-9)


def test_theorem1_t_just_below_k():
    assert theorem1_params(7, 2, 1, 6).delta == pytest.approx(math.exp(-1), rel=1e-15)


@pytest.mark.parametrize("k,t", [(5, 0), (5, 5), (5, 7)])
def test_theorem1_rejects_t_out_of_range(k, t):
    with pytest.raises(ValueError):
        theorem1_params(k, 2, 1, t)


def test_theorem1_tradeoff_in_t():
    prev = None
    for t in range(1, 50):
        b = theorem1_params(50, 4, 1, t)
        if prev is not None:
            assert b.eps < prev.eps and b.delta > prev.delta
        prev = b


def test_max_t_for_delta_inversion():
    # delta <= n^-c with n = 1e6, c = 2 needs k - t >= 2 ln(1e6) ~ 27.63
    assert max_t_for_delta(50, 1, 10**6, 2) == 22
    b = theorem1_params(50, 4, 1, 22)
    assert b.delta <= 1e-12
    assert theorem1_params(50, 4, 1, 23).delta > 1e-12


# ---- composition

def test_seq_compose_sums():
    b = seq_compose([DpBudget(0.5, 0), DpBudget(0.3, 1e-9)])
    assert b.eps == pytest.approx(0.8)
    assert b.delta == 1e-9
    assert seq_compose([DpBudget(0.4, 0.1)]) == DpBudget(0.4, 0.1)


@given(st.lists(st.tuples(st.floats(0, 5), st.floats(0, 0.01)), min_size=1, max_size=8))
def test_seq_compose_order_invariant(items):
    bs = [DpBudget(e, d) for e, d in items]
    a, b = seq_compose(bs), seq_compose(list(reversed(bs)))
    assert a.eps == pytest.approx(b.eps) and a.delta == pytest.approx(b.delta)


def test_seq_compose_empty_raises():
    with pytest.raises(ValueError):
        seq_compose([])


def test_adv_compose_reference_point():
    b = adv_compose(0.01, 0, 132, 2 ** -30)
    assert b.eps == pytest.approx(0.754186, abs=1e-5)
    assert b.eps == pytest.approx(float(mp_adv(0.01, 132, 2 ** -30)), rel=1e-12)
    assert b.delta == 2 ** -30


def test_adv_compose_delta_term_exact():
    b = adv_compose(0.1, 1e-8, 10, 1e-6)
    assert b.delta == 10 * 1e-8 + 1e-6


def test_adv_compose_single_query_at_least_eps():
    for eps in (1e-3, 0.1, 1.0, 3.0):
        assert adv_compose(eps, 0, 1, 2 ** -30).eps >= eps


@pytest.mark.parametrize("slack", [0, 1, -0.1, 2])
def test_adv_compose_invalid_slack(slack):
    with pytest.raises(ValueError):
        adv_compose(0.1, 0, 3, slack)


def test_amplify_reference_point():
    b = amplify(1, 1e-9, 0.25)
    assert b.eps == pytest.approx(0.3573738, abs=1e-6)
    assert b.eps == pytest.approx(float(mpmath.log(1 + mpmath.mpf("0.25") * mpmath.expm1(1))), rel=1e-12)
    assert b.delta == pytest.approx(0.25e-9)


def test_amplify_at_0215_matches_formula():
    exact = float(mpmath.log(1 + mpmath.mpf("0.215") * mpmath.expm1(1)))
    assert amplify(1, 0, 0.215).eps == pytest.approx(exact, rel=1e-12)
    assert exact == pytest.approx(0.3143950280, abs=1e-9)


def test_amplify_limit_p_to_one():
    assert amplify(0.7, 0, 1 - 1e-12).eps == pytest.approx(0.7, rel=1e-9)


@pytest.mark.parametrize("p", [0, 1, 1.5, 1e-12])
def test_amplify_rejects_bad_rate(p):
    with pytest.raises(ValueError):
        amplify(1, 1e-9, p)


def test_amplify_huge_eps_no_overflow():
    b = amplify(5000, 0, 0.5)
    assert b.eps == pytest.approx(5000 + math.log(0.5))


# ---- end-to-end budgets

def test_structure_budget_reference_point():
    b = structure_budget(11, 0.01, 0.01, 2 ** -30)
    assert b.eps == pytest.approx(0.764186, abs=1e-5)
    assert b.eps == pytest.approx(0.01 + float(mp_adv(0.01, 132, 2 ** -30)), rel=1e-12)


def test_structure_budget_is_composition():
    s = structure_budget(7, 0.02, 0.05, 1e-9)
    ref = seq_compose([DpBudget(0.05), adv_compose(0.02, 0, 56, 1e-9)])
    assert s == ref


def test_structure_budget_small_eps_h_limit():
    assert structure_budget(11, 1e-12, 0.3).eps == pytest.approx(0.3, abs=1e-9)


def test_parameter_budget_reference_point():
    b = parameter_budget(11, 0.05, 2 ** -30)
    assert b.eps == pytest.approx(float(mp_adv(0.05, 11, 2 ** -30)), rel=1e-12)
    assert b.eps == pytest.approx(1.0976348645, abs=1e-9)


def test_parameter_budget_degenerate_cases():
    assert parameter_budget(11, 1e-15).eps == pytest.approx(0, abs=1e-12)
    assert parameter_budget(1, 0.2, 1e-6) == adv_compose(0.2, 0, 1, 1e-6)


def test_model_budget_max_and_sampling():
    b = model_budget(DpBudget(1, 1e-9), DpBudget(0.5, 1e-10))
    assert b == DpBudget(1, 1e-9)
    a = model_budget(DpBudget(1, 1e-9), DpBudget(0.5, 1e-10), 0.215)
    assert a.eps == pytest.approx(math.log1p(0.215 * math.expm1(1)))
    assert a.delta == pytest.approx(0.215e-9)


@settings(max_examples=50)
@given(st.floats(1e-4, 2), st.floats(1e-4, 2))
def test_formulas_monotone_in_eps(e1, e2):
    lo, hi = sorted((e1, e2))
    assert adv_compose(lo, 0, 20, 1e-9).eps <= adv_compose(hi, 0, 20, 1e-9).eps
    assert amplify(lo, 0, 0.3).eps <= amplify(hi, 0, 0.3).eps
    assert structure_budget(5, lo, lo).eps <= structure_budget(5, hi, hi).eps
    assert parameter_budget(5, lo).eps <= parameter_budget(5, hi).eps


# ---- solver

@pytest.mark.parametrize("sampling", [None, 0.215])
def test_solve_per_query_fixed_point(sampling):
    target = DpBudget(1.0, DEFAULT_DELTA)
    per = solve_per_query(target, 11, sampling)
    assert per.eps_nt == per.eps_h
    rep = budget_report(per, 11, sampling)
    assert rep["model"]["eps"] <= 1.0
    assert rep["model"]["eps"] == pytest.approx(1.0, rel=1e-6)
    assert rep["model"]["delta"] <= DEFAULT_DELTA * (1 + 1e-12)
    for side in ("structure", "parameters"):
        pre = rep[side]["eps"]
        post = amplify(pre, 0, sampling).eps if sampling else pre
        assert post == pytest.approx(1.0, rel=1e-6)


def test_solve_per_query_large_target():
    per = solve_per_query(DpBudget(1e6, DEFAULT_DELTA), 11)
    assert all(math.isfinite(x) and x > 1 for x in (per.eps_h, per.eps_p))
    per = solve_per_query(DpBudget(1e6, DEFAULT_DELTA), 11, 0.215)
    assert math.isfinite(per.eps_p)


def test_solve_per_query_monotone_in_target():
    prev = None
    for eps in (0.125, 0.25, 0.5, 1, 2, 4):
        per = solve_per_query(DpBudget(eps, DEFAULT_DELTA), 11)
        if prev is not None:
            assert per.eps_h > prev.eps_h and per.eps_p > prev.eps_p
        prev = per


@pytest.mark.parametrize("target", [DpBudget(0.0, 1e-9), DpBudget(1.0, 0.0), DpBudget(math.inf, 1e-9)])
def test_solve_per_query_infeasible(target):
    with pytest.raises(InfeasibleBudget, match="solve_per_query"):
        solve_per_query(target, 11)


def test_check_delta_warns():
    with pytest.warns(UserWarning):
        assert not check_delta(0.01, 1000)
    assert check_delta(2 ** -30, 10**6)


def test_budget_rejects_invalid_values():
    with pytest.raises(ValueError):
        DpBudget(-1, 0)
    with pytest.raises(ValueError):
        DpBudget(1, 1.5)
