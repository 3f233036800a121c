import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from heisenberg_fujita.hgroup import GroupPoint
from heisenberg_fujita.kernels import (KernelEnvelope, QuadratureError, _kanter, _levy_half, _series,
                                       envelope_eval, envelope_fit, g_profile, phi_density,
                                       phi_tail_constant, phi_unit, subordination_nodes)
from oracles import exact_heat_kernel


def test_profiles():
    assert g_profile(0.0, 2.0, 4) == 1.0
    assert g_profile(1.0, 2.0, 4) == pytest.approx(math.exp(-1))
    assert g_profile(1.0, 1.0, 4) == pytest.approx(2.0 ** -5)
    with pytest.raises(ValueError):
        g_profile(-1.0, 2.0, 4)
    with pytest.raises(ValueError):
        g_profile(1.0, 2.5, 4)


def test_envelope_validation():
    with pytest.raises(ValueError):
        KernelEnvelope(2.0, 4, 0.0, 1.0, 1.0, 1.0)
    env = KernelEnvelope(2.0, 4, 0.01, 1.0, 0.02, 2.0)
    with pytest.raises(ValueError):
        env.evaluate(1.0, 0.0)
    with pytest.raises(ValueError):
        env.evaluate(1.0, 1.0, side="middle")
    assert env.tightness == pytest.approx(2 * math.log(2))


@given(st.floats(0.0, 5.0), st.floats(0.1, 4.0), st.floats(0.2, 5.0), st.sampled_from([1.0, 2.0]))
def test_envelope_respects_dilations(norm, t, lam, alpha):
    env = KernelEnvelope(alpha, 4, 0.01, 0.7, 0.05, 1.9)
    a = env.evaluate(lam * norm, lam ** alpha * t)
    b = lam ** -4 * env.evaluate(norm, t)
    assert a == pytest.approx(b, rel=1e-9)


def test_envelope_eval_uses_the_norm():
    env = KernelEnvelope(2.0, 4, 0.01, 1.0, 0.02, 2.0)
    eta = GroupPoint([0.6], [0.8], 0.0)
    assert envelope_eval(eta, 1.0, env, "upper") == pytest.approx(0.02 * math.exp(-0.25))


def test_envelope_fit_brackets_its_samples():
    rng = np.random.default_rng(3)
    norms = rng.uniform(0, 3, 400)
    vals = 0.03 * np.exp(-(norms / 1.4) ** 2) * rng.uniform(0.7, 1.3, 400)
    env = envelope_fit(norms, 1.0, vals, 2.0, 4)
    assert np.all(env.evaluate(norms, 1.0, "lower") <= vals * (1 + 1e-12))
    assert np.all(env.evaluate(norms, 1.0, "upper") >= vals * (1 - 1e-12))


def test_envelope_fit_on_exact_kernel_is_tight():
    r = np.linspace(0, 2.0, 11)
    tau = np.linspace(0, 4.0, 11)
    R, T = np.meshgrid(r, tau, indexing="ij")
    vals = np.array([exact_heat_kernel(a, b, 1.0) for a, b in zip(R.ravel(), T.ravel())])
    norms = (R.ravel() ** 4 + T.ravel() ** 2) ** 0.25
    env = envelope_fit(norms, 1.0, vals, 2.0, 4)
    assert env.C2 / env.C1 < 10


def test_envelope_fit_rejects_bad_samples():
    with pytest.raises(ValueError):
        envelope_fit(np.ones(10), 1.0, np.ones(10), 2.0, 4)
    with pytest.raises(ValueError):
        envelope_fit(np.ones(200), 1.0, -np.ones(200), 2.0, 4)


# subordinator density --------------------------------------------------------

def _total_mass(alpha):
    beta = alpha / 2
    f = lambda x: float(phi_unit(np.array([x]), alpha)[0])
    pieces = [(0, 1e-2), (1e-2, 1), (1, 1e2), (1e2, 1e4), (1e4, 1e6), (1e6, 1e8)]
    total = sum(integrate.quad(f, a, b, limit=400, epsabs=0, epsrel=1e-12)[0] for a, b in pieces)
    # mass beyond 1e8: integrate the large-s series term by term
    L = 1e8
    k = np.arange(1, 30)
    terms = ((-1.0) ** (k + 1) * special.gamma(k * beta + 1) / special.factorial(k)
             * np.sin(k * np.pi * beta) * L ** (-k * beta) / (k * beta))
    return total + terms.sum() / np.pi


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_density_is_normalized(alpha):
    assert _total_mass(alpha) == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_laplace_transform(alpha):
    # the subordinator at time t has Laplace transform exp(-t lam^(alpha/2))
    for t, lam in [(1.0, 2.0), (2.0, 0.7)]:
        f = lambda s: float(phi_density(alpha, t, np.array([s]))[0]) * math.exp(-lam * s)
        val = sum(integrate.quad(f, a, b, limit=400)[0] for a, b in [(0, 1), (1, 100), (100, np.inf)])
        assert val == pytest.approx(math.exp(-t * lam ** (alpha / 2)), rel=1e-7)


def test_half_stable_density_two_routes():
    s = np.geomspace(1e-2, 0.99, 30)
    assert np.allclose(_kanter(s, 0.5), _levy_half(s), rtol=1e-10)
    s = np.geomspace(1.0, 1e4, 30)
    assert np.allclose(_series(s, 0.5), _levy_half(s), rtol=1e-10)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_tail_exponent(alpha):
    # far enough out that the next term of the expansion (relative size s^(-alpha/2)) is negligible
    s = np.geomspace(1e6, 1e8, 9)
    slope = np.polyfit(np.log(s), np.log(phi_unit(s, alpha)), 1)[0]
    assert slope == pytest.approx(-(1 + alpha / 2), rel=0.02)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_tail_constant(alpha):
    s = 1e12
    assert s ** (1 + alpha / 2) * float(phi_unit(np.array([s]), alpha)[0]) == pytest.approx(
        phi_tail_constant(alpha), rel=1e-3)


def test_tail_constant_high_precision():
    beta = mpmath.mpf("0.25")
    ref = beta / mpmath.gamma(1 - beta)
    assert phi_tail_constant(0.5) == pytest.approx(float(ref), rel=1e-14)


def test_density_scaling_in_time():
    s = np.geomspace(0.01, 100, 7)
    for alpha in (0.5, 1.5):
        # the t-subordinator is the unit one run at the time scale t^(2/alpha)
        t = 3.0
        k = t ** (-2 / alpha)
        assert np.allclose(phi_density(alpha, t, s), k * phi_unit(k * s, alpha), rtol=1e-14)


def test_density_domain():
    with pytest.raises(ValueError):
        phi_unit(np.array([0.0]), 1.0)
    with pytest.raises(ValueError):
        phi_unit(np.array([1.0]), 2.0)
    with pytest.raises(ValueError):
        phi_density(1.0, 0.0, 1.0)


def test_density_near_two_reports_quadrature_trouble():
    with pytest.raises(QuadratureError):
        phi_unit(np.array([0.5, 2.0]), 1.99)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_subordination_nodes(alpha):
    s, w = subordination_nodes(alpha, 1.0)
    assert s.size == 200 and np.all(w >= 0)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    lam = 0.8
    assert np.dot(w, np.exp(-lam * s)) == pytest.approx(math.exp(-lam ** (alpha / 2)), rel=2e-3)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 0.99))
def test_density_positive(x):
    for alpha in (0.5, 1.5):
        assert phi_unit(np.array([x * 10]), alpha)[0] >= 0
