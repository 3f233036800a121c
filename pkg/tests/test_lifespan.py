import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heisenberg_fujita.conditions import PowerDecay
from heisenberg_fujita.lifespan import (Regime, ScalingPrediction, SweepAborted, fit_scaling,
                                        log_growth_profile, ode_comparison_bound, predicted_exponent,
                                        sweep_lambda)
from heisenberg_fujita.nonlinear import EvolutionConfig, LifespanRecord
from oracles import small_axial_grid


# ODE comparison ---------------------------------------------------------------------------

def test_autonomous_riccati_closed_form():
    a1, a2, t_star, T = 0.3, 2.0, 0.5, 4.0
    r = ode_comparison_bound(a1, a2, 0.0, 2.0, t_star, T)
    assert r.blowup_time == pytest.approx(t_star + 1 / (a2 * a1), rel=1e-9)
    assert r.bound_on_a1 == pytest.approx(1 / (a2 * (T - t_star)), rel=1e-6)
    assert not r.admissible


def test_scale_invariant_riccati_closed_form():
    a2, t_star, T = 1.5, 0.1, 10.0
    r = ode_comparison_bound(0.01, a2, 1.0, 2.0, t_star, T)
    assert r.admissible
    assert r.bound_on_a1 == pytest.approx(1 / (a2 * math.log(T / t_star)), rel=1e-6)


def test_general_exponents_closed_form():
    # w = f^{1-b} decreases by (b-1) a2 (T^{1-a} - t*^{1-a}) / (1-a) over the window
    a2, a, b, t_star, T = 0.8, 0.4, 3.0, 0.2, 5.0
    drop = (b - 1) * a2 * (T ** (1 - a) - t_star ** (1 - a)) / (1 - a)
    r = ode_comparison_bound(1.0, a2, a, b, t_star, T)
    assert r.bound_on_a1 == pytest.approx(drop ** (-1 / (b - 1)), rel=1e-6)


def test_just_above_the_bound_blows_up():
    r = ode_comparison_bound(0.1, 1.0, 0.5, 2.5, 0.3, 6.0)
    assert not ode_comparison_bound(1.01 * r.bound_on_a1, 1.0, 0.5, 2.5, 0.3, 6.0).admissible
    assert ode_comparison_bound(0.99 * r.bound_on_a1, 1.0, 0.5, 2.5, 0.3, 6.0).admissible


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 10.0), st.floats(0.0, 1.5), st.floats(1.2, 4.0), st.floats(0.2, 5.0))
def test_bound_scales_with_the_coefficient(a2, a, b, c):
    t_star, T = 0.2, 3.0
    r1 = ode_comparison_bound(1.0, a2, a, b, t_star, T).bound_on_a1
    r2 = ode_comparison_bound(1.0, c * a2, a, b, t_star, T).bound_on_a1
    assert r2 == pytest.approx(r1 * c ** (-1 / (b - 1)), rel=1e-6)


def test_ode_validation():
    with pytest.raises(ValueError):
        ode_comparison_bound(1.0, 1.0, 0.0, 1.0, 0.1, 1.0)
    with pytest.raises(ValueError):
        ode_comparison_bound(1.0, 1.0, 0.0, 2.0, 0.6, 1.0)


# predictions --------------------------------------------------------------------------

@pytest.mark.parametrize("p,A,regime,exponent,log_law", [
    (1.25, 5.0, Regime.SUBCRIT, -0.5, False),
    (1.25, 2.0, Regime.SUBCRIT, -1 / 3, False),
    (1.5, 6.0, Regime.CRIT_A_GT_Q, -0.5, True),
    (1.5, 4.0, Regime.CRIT_A_EQ_Q, -1 / 3, True),
    (1.5, 3.0, Regime.SUPER_SMALL_A, -2.0, False),
    (2.0, 3.0, Regime.GLOBAL, None, False),
    (2.0, 2.0, Regime.GLOBAL, None, False),
    (2.0, 1.0, Regime.SUPER_SMALL_A, -2.0, False),
])
def test_predicted_regimes(p, A, regime, exponent, log_law):
    pred = predicted_exponent(p, 2.0, 4, A)
    assert pred.regime is regime and pred.log_law == log_law
    if exponent is None:
        assert pred.exponent is None
    else:
        assert pred.exponent == pytest.approx(exponent, rel=1e-12)


def test_subcritical_prediction_is_continuous_at_the_clamp():
    below = predicted_exponent(1.25, 2.0, 4, 4.0 - 1e-9)
    at = predicted_exponent(1.25, 2.0, 4, 4.0)
    above = predicted_exponent(1.25, 2.0, 4, 4.0 + 1e-9)
    assert below.exponent == pytest.approx(at.exponent, abs=1e-8)
    assert above.exponent == at.exponent
    assert at.log_correction and not below.log_correction and not above.log_correction


@given(st.floats(1.01, 4.0), st.floats(0.1, 2.0), st.floats(0.1, 12.0))
def test_global_exactly_when_decay_is_fast_and_p_is_large(p, alpha, A):
    pred = predicted_exponent(p, alpha, 4, A)
    pF = 1 + alpha / 4
    is_global = p > pF and not math.isclose(p, pF, rel_tol=1e-12) and A >= alpha / (p - 1)
    if not math.isclose(A, alpha / (p - 1), rel_tol=1e-12):
        assert (pred.regime is Regime.GLOBAL) == is_global


def test_prediction_validation():
    with pytest.raises(ValueError):
        predicted_exponent(1.0, 2.0, 4, 5.0)
    with pytest.raises(ValueError):
        predicted_exponent(1.5, 2.0, 4, 0.0)


# regression ------------------------------------------------------------------------------

def _records(lams, T, blew=None):
    blew = [True] * len(lams) if blew is None else blew
    return [LifespanRecord(float(l), float(t), b, {}, 1e6) for l, t, b in zip(lams, T, blew)]


POWER = ScalingPrediction(Regime.SUBCRIT, -0.5, False)


def test_exact_power_law_is_recovered():
    lam = np.geomspace(0.01, 1.0, 8)
    fit = fit_scaling(_records(lam, lam ** -0.5), POWER)
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    assert fit.agrees and fit.n_used == 8


def test_noisy_power_law():
    rng = np.random.default_rng(5)
    lam = np.geomspace(0.01, 1.0, 12)
    T = 3.0 * lam ** -0.5 * np.exp(rng.normal(0, 0.05, lam.size))
    assert fit_scaling(_records(lam, T), POWER).slope == pytest.approx(-0.5, abs=0.05)


@given(st.floats(1e-3, 1e3))
def test_relabeling_amplitudes_keeps_the_slope(c):
    lam = np.geomspace(0.01, 1.0, 8)
    T = 2.0 * lam ** -0.7
    a = fit_scaling(_records(lam, T), POWER)
    b = fit_scaling(_records(c * lam, T), POWER)
    assert b.slope == pytest.approx(a.slope, abs=1e-9)


def test_censored_records_are_excluded():
    lam = np.geomspace(0.001, 1.0, 10)
    T = lam ** -0.5
    blew = [True] * 8 + [False] * 2
    fit = fit_scaling(_records(lam[::-1], T[::-1], blew), POWER)
    assert fit.n_censored == 2 and fit.n_used == 8
    with pytest.raises(ValueError):
        fit_scaling(_records(lam, T, [False] * 10), POWER)


def test_fit_needs_a_decade():
    lam = np.geomspace(0.5, 1.0, 8)
    with pytest.raises(ValueError):
        fit_scaling(_records(lam, lam ** -0.5), POWER)


def test_log_law_fit_is_not_adjudicated():
    lam = np.geomspace(0.1, 1.0, 6)
    T = np.exp(3 * lam ** -0.5)
    fit = fit_scaling(_records(lam, T), ScalingPrediction(Regime.CRIT_A_GT_Q, -0.5, True))
    assert fit.agrees is None and fit.as_dict()["agrees"] == "not-applicable"
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)


def test_borderline_decay_reports_both_models():
    lam = np.geomspace(0.001, 0.1, 8)
    fit = fit_scaling(_records(lam, lam ** -0.5), ScalingPrediction(Regime.SUBCRIT, -0.5, False, True))
    assert set(fit.residuals) == {"power", "log_corrected"}
    assert fit.residuals["power"] < fit.residuals["log_corrected"]


def test_growth_profile():
    lam = np.geomspace(1.0, 0.01, 6)
    prof = log_growth_profile(_records(lam, np.exp(np.log(1 / lam) ** 1.5) + 1))
    assert prof["strictly_increasing"] and prof["superlinear"]
    prof = log_growth_profile(_records(lam, 1 + np.log(1 / lam) ** 0.5))
    assert prof["strictly_increasing"] and not prof["superlinear"]


# sweeps ------------------------------------------------------------------------------------

CFG = EvolutionConfig(p=2.0, grid=small_axial_grid(), T_max=2.0)


def test_empty_sweep():
    assert sweep_lambda(PowerDecay(1.0), [], CFG) == []


def test_sweep_rejects_unsorted_and_nonpositive():
    with pytest.raises(ValueError):
        sweep_lambda(PowerDecay(1.0), [1.0, 2.0], CFG)
    with pytest.raises(ValueError):
        sweep_lambda(PowerDecay(1.0), [1.0, 0.0], CFG)


def test_sweep_is_monotone_and_deterministic():
    lams = [200.0, 100.0, 100.0, 50.0, 25.0]
    recs = sweep_lambda(PowerDecay(1.0), lams, CFG, threads=2)
    T = [r.T_est for r in recs]
    assert all(a <= b for a, b in zip(T, T[1:]))
    assert recs[1].T_est == recs[2].T_est and recs[1].sup_trace == recs[2].sup_trace
    again = sweep_lambda(PowerDecay(1.0), lams, CFG, threads=1)
    assert [r.T_est for r in again] == T


def test_sweep_stops_at_the_first_censored_run_when_global():
    pred = predicted_exponent(2.0, 2.0, 4, 3.0)
    recs = sweep_lambda(PowerDecay(3.0), [200.0, 1.0, 0.5, 0.25], CFG, prediction=pred)
    assert recs[-1].lam == 1.0 and not recs[-1].blew_up
    assert len(recs) == 2


def test_invalid_run_aborts_the_sweep(monkeypatch):
    import heisenberg_fujita.lifespan as mod

    def fake(datum, lam, cfg):
        return LifespanRecord(lam, math.nan if lam < 1 else 1.0, lam >= 1, {}, 1e6, valid=lam >= 1)

    monkeypatch.setattr(mod, "estimate_lifespan", fake)
    with pytest.raises(SweepAborted) as e:
        sweep_lambda(PowerDecay(1.0), [4.0, 2.0, 0.5, 0.25], CFG)
    assert [r.lam for r in e.value.records] == [4.0, 2.0]
