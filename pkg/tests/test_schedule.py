import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowprox.schedule import Schedule, t_of_tau, tau_of_t


def test_affine_eval_midpoint():
    p = Schedule.affine().eval(0.5)
    assert p == (0.5, 0.5, -1.0, 1.0, 1.0)


def test_affine_eval_late():
    p = Schedule.affine().eval(0.9)
    assert p.alpha == pytest.approx(0.1)
    assert p.beta == pytest.approx(0.9)
    assert p.alpha_dot == -1.0 and p.beta_dot == 1.0
    assert p.lam == pytest.approx(1.0 / 9.0)


def test_powerlaw_eval():
    p = Schedule.powerlaw(2.0).eval(0.5)
    assert p.alpha == pytest.approx(0.25)
    assert p.alpha_dot == pytest.approx(-1.0)
    assert p.lam == pytest.approx(0.5)


@pytest.mark.parametrize("sched,expected", [
    (Schedule.affine(), 1.0),
    (Schedule.powerlaw(2.0), 2.0),
    (Schedule.powerlaw(0.5), 0.5),
])
def test_gamma(sched, expected):
    assert sched.gamma() == expected


def test_gamma_probe_agrees_near_one():
    for sched in (Schedule.affine(), Schedule.powerlaw(2.0), Schedule.powerlaw(0.5)):
        t = 1.0 - 1e-6
        p = sched.eval(t)
        assert abs((1.0 - t) * p.alpha_dot / p.alpha + sched.gamma()) <= 1e-6


def test_lambda_is_ratio_exactly():
    rng = np.random.default_rng(0)
    for sched in (Schedule.affine(), Schedule.powerlaw(1.7, eta=0.8)):
        for t in rng.uniform(1e-6, 1 - 1e-6, size=1000):
            p = sched.eval(t)
            assert p.lam == p.alpha / p.beta


@pytest.mark.parametrize("sched", [
    Schedule.affine(),
    Schedule.powerlaw(2.0),
    Schedule.powerlaw(0.5, eta=1.3, c_alpha=0.7, c_beta=1.2),
])
def test_derivatives_match_finite_differences(sched):
    h = 1e-5
    for t in np.linspace(0.05, 0.95, 19):
        p = sched.eval(t)
        fd_a = (sched.eval(t + h).alpha - sched.eval(t - h).alpha) / (2 * h)
        fd_b = (sched.eval(t + h).beta - sched.eval(t - h).beta) / (2 * h)
        assert abs(p.alpha_dot - fd_a) <= 1e-6
        assert abs(p.beta_dot - fd_b) <= 1e-6


def test_tau_examples():
    assert tau_of_t(0.0) == 0.0
    assert tau_of_t(1.0 - math.exp(-3.0)) == pytest.approx(3.0, abs=1e-12)
    assert t_of_tau(0.0) == 0.0


@given(st.floats(min_value=0.0, max_value=1.0 - 1e-8))
@settings(max_examples=200)
def test_tau_roundtrip(t):
    back = t_of_tau(tau_of_t(t))
    assert back == pytest.approx(t, rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("t", [-0.1, 0.0, 1.0, 1.5])
def test_eval_domain_error(t):
    with pytest.raises(ValueError):
        Schedule.affine().eval(t)


def test_tau_domain_errors():
    with pytest.raises(ValueError):
        tau_of_t(1.0)
    with pytest.raises(ValueError):
        t_of_tau(-0.5)


def test_bad_family_rejected():
    with pytest.raises(ValueError):
        Schedule("cosine")
    with pytest.raises(ValueError):
        Schedule.powerlaw(-1.0)


def test_config_roundtrip():
    for sched in (Schedule.affine(), Schedule.powerlaw(2.0, eta=0.5)):
        assert Schedule.from_config(sched.to_config()) == sched
    with pytest.raises(ValueError):
        Schedule.from_config({"family": "powerlaw", "gamma": 1.0, "bogus": 2})
