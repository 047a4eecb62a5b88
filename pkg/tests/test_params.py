import math

import pytest
from hypothesis import given, strategies as st

from brokerexec.errors import DomainError
from brokerexec.params import PRESETS, Mode, ModelParams, derive, params_for_kappa, preset, validate

BASE = dict(m0=0.05, eta=10.0, rho=0.0, theta=0.002, sigma=200.0, beta=1000.0,
            gamma=0.0, mu=0.0, T=1.0, x0=1.0, A=0.0)


def test_base_case_is_valid():
    p = ModelParams(**BASE)
    assert validate(p, Mode.RISK_AVERSE) is p


def test_risk_neutral_needs_two_beta_above_gamma():
    p = ModelParams(**{**BASE, "theta": 0.0, "beta": 0.0, "gamma": 0.0})
    with pytest.raises(DomainError, match="2\\*beta > gamma"):
        validate(p, Mode.RISK_NEUTRAL)


def test_zero_eta_rejected():
    with pytest.raises(DomainError, match="eta"):
        validate(ModelParams(**{**BASE, "eta": 0.0}))


@pytest.mark.parametrize("field,value", [("sigma", 0.0), ("T", 0.0), ("theta", -1.0), ("beta", -1.0),
                                         ("gamma", -0.1), ("m0", -0.1), ("rho", 1.5), ("mu", math.nan)])
def test_domain_violations(field, value):
    with pytest.raises(DomainError):
        validate(ModelParams(**{**BASE, field: value}))


def test_arccoth_argument_must_exceed_one():
    p = ModelParams(**{**BASE, "beta": 1e-3})
    with pytest.raises(DomainError, match="A0 undefined"):
        validate(p)


def test_kappa_base():
    c = derive(ModelParams(**BASE))
    assert c.kappa == pytest.approx(2.0, rel=1e-15)


def test_H_base():
    # 0.002*10 + 0.5*0.002^2*10^2*0.05^2 = 0.02 + 5e-7
    c = derive(ModelParams(**BASE))
    assert c.H == pytest.approx(0.0200005, rel=1e-14)


def test_l3_vanishes_without_correlation():
    assert derive(ModelParams(**BASE)).l3 == 0.0
    assert derive(ModelParams(**{**BASE, "rho": 0.5, "m0": 0.0})).l3 == 0.0


def test_merton_shift_flag():
    c = derive(ModelParams(**BASE))
    assert c.merton_shift == 0.0 and c.merton_zero
    c = derive(ModelParams(**{**BASE, "mu": 8.0}))
    assert c.merton_shift == pytest.approx(8.0 / (0.002 * 200 ** 2)) and not c.merton_zero


def test_infinite_beta_gives_zero_A0():
    c = derive(ModelParams(**{**BASE, "beta": math.inf}))
    assert c.A0 == 0.0


def test_A0_matches_arccoth():
    p = ModelParams(**BASE)
    c = derive(p)
    z = (c.l3 + p.theta * (2 * p.beta - p.gamma) / 2) / math.sqrt(c.l1)
    assert 1.0 / math.tanh(c.A0) == pytest.approx(z, rel=1e-12)


def test_stress_presets_match_table():
    assert PRESETS["base-fig"].beta == 1000.0
    assert PRESETS["base-stress"].beta == 1e6
    assert PRESETS["S1"].sigma == 2000.0
    assert PRESETS["S2"].beta == 1e7
    assert PRESETS["S3"].m0 == 5.0
    assert PRESETS["S4"].eta == 0.1
    for name, p in PRESETS.items():
        validate(p)
    with pytest.raises(DomainError):
        preset("nope")


def test_params_for_kappa():
    p = params_for_kappa(3.5, mu_shift=0.25)
    c = derive(p)
    assert c.kappa == pytest.approx(3.5, rel=1e-14)
    assert c.merton_shift == pytest.approx(0.25, rel=1e-14)


pos = st.floats(1e-3, 1e3)


@given(theta=pos, sigma=pos, eta=pos, m0=st.floats(0, 10), rho=st.floats(-1, 1))
def test_derived_identities(theta, sigma, eta, m0, rho):
    p = ModelParams(mu=0.0, sigma=sigma, gamma=0.0, eta=eta, beta=math.inf, theta=theta,
                    m0=m0, rho=rho)
    c = derive(p)
    assert c.H > 0 and c.kappa > 0
    assert c.kappa ** 2 * 2 * eta == pytest.approx(theta * sigma ** 2, rel=1e-13)
    assert derive(p) == c  # pure and deterministic


@given(theta=pos, sigma=pos, eta=pos)
def test_zero_execution_risk_constants(theta, sigma, eta):
    c = derive(ModelParams(sigma=sigma, eta=eta, beta=math.inf, theta=theta, m0=0.0))
    assert c.H == theta * eta
    assert c.l3 == 0.0
    assert c.l1 == pytest.approx(theta ** 3 * sigma ** 2 * eta / 2, rel=1e-14)
