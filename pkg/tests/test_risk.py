import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from structadapt.errors import ConfigurationError, DomainError
from structadapt.estimator import BandwidthGrid, sphere_grid, variance_formula
from structadapt.kernels import make_kernel
from structadapt.model import IndexVector, TargetFunction, function_library
from structadapt.risk import (RateQuery, calibrate_threshold, config_digest, global_risk, oracle_ratio,
                              phi_regime, pointwise_risk, rate_phi, rate_psi, slope_regression)
from structadapt.selector import SelectionConfig

K1 = make_kernel(1)
TH30 = IndexVector.from_degrees(30.0)
LEVELS = BandwidthGrid((1.0, 0.5, 0.25, 0.125), 0.125)


def _cfg(const=1.5, n_theta=16):
    return SelectionConfig(const, 2.0, sphere_grid(n_theta), LEVELS)


def _target(name, params, index=TH30):
    return TargetFunction(function_library(name, params), index)


# -- rates --------------------------------------------------------------------

def test_rate_examples():
    # (0.01 sqrt(ln 100))^(2/3) = 0.021460^(2/3)
    assert rate_psi(RateQuery(1.0, 1.0, epsilon=0.01)) == pytest.approx(0.07722, abs=5e-6)
    q = RateQuery(1.0, 1.0, p=2.0, r=10.0, epsilon=0.01)
    assert phi_regime(q) == -1
    assert rate_phi(q) == pytest.approx(0.09976, abs=5e-6)
    assert rate_phi(q) == pytest.approx((0.01 * math.sqrt(math.log(100))) ** 0.6, rel=1e-12)


def test_rate_psi_structure():
    q = RateQuery(1.0, 1.0, epsilon=0.01)
    q2 = RateQuery(1.0, 2.0, epsilon=0.01)
    assert rate_psi(q2) / rate_psi(q) == pytest.approx(2 ** (1 / 3), rel=1e-12)
    big = RateQuery(1e6, 1.0, epsilon=0.01)
    assert rate_psi(big) == pytest.approx(0.01 * math.sqrt(math.log(100)), rel=1e-4)


def test_boundary_regime_carries_log_factor():
    # (2 beta + 1) p = r exactly: beta = 1, p = 2, r = 6
    q = RateQuery(Fraction(1), 1.0, p=Fraction(2), r=Fraction(6), epsilon=0.01)
    assert phi_regime(q) == 0
    assert rate_phi(q) == pytest.approx(rate_psi(q) * math.log(100) ** (1 / 6), rel=1e-12)


def test_rate_phi_domain_errors():
    with pytest.raises(DomainError):
        rate_phi(RateQuery(0.5, 1.0, p=2.0, r=2.0))
    with pytest.raises(DomainError):
        rate_phi(RateQuery(0.5, 1.0, p=1.0, r=2.0))
    with pytest.raises(DomainError):
        RateQuery(-1.0, 1.0)


@settings(max_examples=200, deadline=None)
@given(b=st.fractions(Fraction(1, 10), Fraction(5)), p=st.fractions(Fraction(11, 10), Fraction(10)),
       r=st.fractions(Fraction(1), Fraction(20)), eps=st.floats(1e-4, 0.5))
def test_regime_partition(b, p, r, eps):
    assume(b > 1 / p)
    q = RateQuery(b, 1.0, p=p, r=r, epsilon=eps)
    lhs = (2 * b + 1) * p
    regimes = [lhs > r, lhs == r, lhs < r]
    assert sum(regimes) == 1
    assert phi_regime(q) == (1 if regimes[0] else 0 if regimes[1] else -1)
    if regimes[0]:
        assert rate_phi(q) == rate_psi(q)
    assert rate_phi(q) > 0


@settings(max_examples=100, deadline=None)
@given(b=st.floats(0.6, 3.0), eps=st.floats(1e-4, 0.5))
def test_rate_phi_continuous_within_regime(b, eps):
    # p = 2, r = 30: the lower regime holds for beta < 7
    q1 = RateQuery(b, 1.0, p=2.0, r=30.0, epsilon=eps)
    q2 = RateQuery(b + 1e-7, 1.0, p=2.0, r=30.0, epsilon=eps)
    assert phi_regime(q1) == phi_regime(q2) == -1
    assert rate_phi(q2) == pytest.approx(rate_phi(q1), rel=1e-4)


def test_slope_regression_exact_power_law():
    eps = 2.0 ** -np.arange(4, 10)
    risks = [rate_psi(RateQuery(1.0, 1.0, epsilon=e)) for e in eps]
    slope, icpt, rms = slope_regression(eps, risks)
    assert slope == pytest.approx(2 / 3, abs=1e-10)
    assert icpt == pytest.approx(0.0, abs=1e-9)
    assert rms < 1e-10


def test_slope_regression_noisy_and_flat():
    eps = 2.0 ** -np.arange(4, 10)
    rng = np.random.default_rng(2024)
    risks = np.array([rate_psi(RateQuery(0.5, 1.0, epsilon=e)) for e in eps]) * (1 + 0.05 * rng.standard_normal(6))
    assert slope_regression(eps, risks)[0] == pytest.approx(0.5, abs=0.05)
    assert slope_regression(eps, np.full(6, 0.3))[0] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DomainError):
        slope_regression(eps, np.r_[np.full(5, 0.3), 0.0])
    with pytest.raises(DomainError):
        slope_regression(eps[:3], np.full(3, 0.3))


# -- Monte Carlo risk ---------------------------------------------------------

def test_fixed_estimator_risk_matches_variance_law():
    eps, n = 0.1, 128
    rep = pointwise_risk(_target("constant", (0.0,)), K1, _cfg(), (0.0, 0.0), 2, eps, n, 400, 0,
                         mode="fixed", theta=TH30)
    target = math.sqrt(variance_formula(K1, eps, 1.0))
    assert abs(rep.risk_value - target) <= rep.half_width
    assert rep.n_replications == 400 and rep.per_replication_errors.shape == (400,)


def test_half_width_shrinks_like_root_two():
    tg = _target("constant", (0.0,))
    a = pointwise_risk(tg, K1, _cfg(), (0.0, 0.0), 2, 0.1, 64, 300, 0, mode="fixed", theta=TH30)
    b = pointwise_risk(tg, K1, _cfg(), (0.0, 0.0), 2, 0.1, 64, 600, 0, mode="fixed", theta=TH30)
    assert a.half_width / b.half_width == pytest.approx(math.sqrt(2), rel=0.15)


def test_risk_report_is_reproducible_and_seed_order_free():
    tg = _target("cusp", (0.5, 1.0))
    a = pointwise_risk(tg, K1, _cfg(), (0.0, 0.0), 2, 0.05, 64, 100, 7)
    b = pointwise_risk(tg, K1, _cfg(), (0.0, 0.0), 2, 0.05, 64, 100, 7)
    assert a.risk_value == b.risk_value and a.metadata == b.metadata
    assert np.array_equal(a.per_replication_errors, b.per_replication_errors)
    # a different batch split sees each seed once in another order of evaluation
    c = pointwise_risk(tg, K1, _cfg(), (0.0, 0.0), 2, 0.05, 64, 100, 7, batch=7)
    assert c.risk_value == pytest.approx(a.risk_value, rel=1e-12)
    assert len(a.metadata["cfg_digest"]) == 64


def test_minimum_replications_and_high_moments():
    tg = _target("constant", (0.0,))
    with pytest.raises(ConfigurationError):
        pointwise_risk(tg, K1, _cfg(), (0, 0), 2, 0.1, 64, 50, 0)
    rep = pointwise_risk(tg, K1, _cfg(), (0, 0), 4, 0.1, 64, 100, 0, mode="fixed", theta=TH30)
    assert rep.n_replications == 400


def test_noiseless_risk_is_quadrature_sized():
    rep = pointwise_risk(_target("cosine", (1.0, 1.0)), K1, _cfg(), (0.1, 0.1), 2, 1e-12, 128, 100, 0)
    assert rep.risk_value < 2.0 / 128


def test_known_index_dominance():
    tg = _target("cusp", (0.5, 1.0))
    full = pointwise_risk(tg, K1, _cfg(), (0.0, 0.0), 2, 0.05, 64, 200, 11)
    known = pointwise_risk(tg, K1, _cfg(), (0.0, 0.0), 2, 0.05, 64, 200, 11, mode="h_only", theta=TH30)
    assert full.risk_value >= known.risk_value - (full.half_width + known.half_width)


def test_global_risk_of_constant_is_small():
    rep = global_risk(_target("constant", (0.6,)), K1, _cfg(n_theta=8), 2, 1e-6, 64, 16, 2, 0)
    assert 0 <= rep.risk_value < 1e-4
    assert rep.per_replication_errors.shape == (2, 256)
    with pytest.raises(ConfigurationError):
        global_risk(_target("constant", (0.6,)), K1, _cfg(), 2, 1e-6, 64, 8, 2, 0)


def test_oracle_ratio_for_constant_target_is_finite():
    ratio = oracle_ratio(_target("constant", (0.6,)), K1, _cfg(), (0.0, 0.0), 2, 0.05, 64, 100)
    assert math.isfinite(ratio) and ratio > 0


def test_config_digest_is_canonical():
    assert config_digest({"a": 1, "b": [1, 2]}) == config_digest({"b": [1, 2], "a": 1})
    assert config_digest({"a": 1}) != config_digest({"a": 2})


# -- calibration --------------------------------------------------------------

def test_calibration_curve():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = calibrate_threshold(K1, 0.05, 64, c_grid=(0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 100.0),
                                  n_reps=64, n_theta=16, c_grid_floor=4)
    rates = res.acceptance_rate
    assert all(b >= a for a, b in zip(rates, rates[1:]))
    assert rates[0] < 0.05
    assert rates[-1] == 1.0
    assert res.constant == next(c for c, a in zip(res.grid, rates) if a >= 0.99)


def test_calibration_warns_when_nothing_passes():
    with pytest.warns(UserWarning, match="no threshold constant"):
        res = calibrate_threshold(K1, 0.05, 64, c_grid=(0.0, 0.01), n_reps=32, n_theta=8, c_grid_floor=4)
    assert res.constant == 0.01


def test_calibration_grid_must_ascend():
    with pytest.raises(ConfigurationError):
        calibrate_threshold(K1, 0.05, 64, c_grid=(1.0, 0.5))
    with pytest.raises(ConfigurationError):
        calibrate_threshold(K1, 0.05, 64, c_grid=())
