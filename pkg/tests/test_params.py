"""Parameter validation: every structural constraint, by name."""

import pytest

from otmix.params import InvalidConfig, NetworkParams


def test_defaults_valid():
    p = NetworkParams()
    assert p.beta2 == p.q1 * p.beta1
    assert p.zeta == p.gamma
    assert p.bucket_size == p.beta2 // p.alpha
    assert p.draw_per_bucket == p.beta2 // (p.alpha * p.lam)


def test_alpha_rho_must_cover_q3():
    with pytest.raises(InvalidConfig, match="alpha \\+ rho"):
        NetworkParams(q3=5, alpha=2, rho=2)


def test_alpha_lower_bound():
    # alpha >= rho/3:  alpha=1, rho=4 violates
    with pytest.raises(InvalidConfig, match="alpha >= rho/3"):
        NetworkParams(q3=5, alpha=1, rho=4)


def test_alpha_upper_bound():
    # alpha <= 3*rho/4: alpha=3, rho=2 violates
    with pytest.raises(InvalidConfig, match="alpha <= 3\\*rho/4"):
        NetworkParams(q3=5, alpha=3, rho=2, beta2=12, lam=1, beta1=4)


def test_divisibility():
    with pytest.raises(InvalidConfig, match="divide"):
        NetworkParams(q1=2, beta1=3, beta2=6, alpha=2, rho=3, q3=5, lam=4)


def test_beta2_default_and_override():
    p = NetworkParams(q1=3, beta1=4, beta2=24, alpha=2, rho=3, q3=5, lam=4)
    assert p.beta2 == 24
    with pytest.raises(InvalidConfig, match="beta2"):
        NetworkParams(q1=1, beta1=8, beta2=4, alpha=1, rho=2, q3=3, lam=1)


def test_zeta_cannot_exceed_gamma():
    with pytest.raises(InvalidConfig, match="zeta"):
        NetworkParams(gamma=16, zeta=32)


def test_positive_counts():
    with pytest.raises(InvalidConfig, match="q1"):
        NetworkParams(q1=0)
    with pytest.raises(InvalidConfig, match="tau_s"):
        NetworkParams(tau_s=0)


def test_nominal_rate():
    p = NetworkParams(q1=2, q2=2, q3=5, alpha=2, rho=3, beta1=4, lam=4, tau_s=10.0)
    assert p.nominal_rate == 8 * 4 / 10.0
