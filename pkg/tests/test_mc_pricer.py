import math

import numpy as np
import pytest

from pricing.cf_pricer import put_price_cf
from pricing.core import BsmRsParams, HestonRsParams, MarketState, OptionSpec, put_payoff
from pricing.mc_pricer import (
    McConfig,
    McEstimate,
    bsm_rs_put_mc,
    heston_rs_put_mc,
    heston_rs_put_mc_curve,
)
from utils.common import ValidationError

STRIKE = 70.0


def _small_heston_cfg(**kw) -> McConfig:
    values = dict(n_paths=4000, n_steps=50, seed=3, batch_size=1000)
    values.update(kw)
    return McConfig(**values)


# ---------------------------------------------------------------------------
# 配置
# ---------------------------------------------------------------------------
def test_config_validation():
    with pytest.raises(ValidationError):
        McConfig(n_paths=1)
    with pytest.raises(ValidationError):
        McConfig(scheme="milstein")
    with pytest.raises(ValidationError):
        McConfig(n_paths=1001, antithetic=True)


def test_config_overrides_skip_none():
    section = {"n_paths": 100, "n_steps": 10, "antithetic": False, "batch_size": 50,
               "scheme": "full_truncation"}
    cfg = McConfig.from_config(section, seed=9, workers=0, n_paths=None, n_steps=20)
    assert (cfg.n_paths, cfg.n_steps, cfg.seed, cfg.workers) == (100, 20, 9, 1)


def test_estimate_ci98():
    est = McEstimate(1.0, 0.1, 100)
    low, high = est.ci98
    assert low == pytest.approx(1.0 - 0.2326)
    assert high == pytest.approx(1.0 + 0.2326)
    assert est.to_result(2).ci98 == (low, high)


# ---------------------------------------------------------------------------
# BSM-RS
# ---------------------------------------------------------------------------
def test_bsm_mc_agrees_with_cf(bsm_params):
    spec = OptionSpec(STRIKE, 1.0)
    for regime in (1, 2):
        state = MarketState(0.0, 68.0, regime)
        est = bsm_rs_put_mc(state, spec, bsm_params, McConfig(n_paths=200000, seed=1))
        cf = put_price_cf(state, spec, bsm_params).value
        assert abs(est.mean - cf) < 3 * est.std_error


def test_bsm_mc_is_seed_deterministic(bsm_params):
    state, spec = MarketState(0.0, 70.0, 1), OptionSpec(STRIKE, 1.0)
    a = bsm_rs_put_mc(state, spec, bsm_params, McConfig(n_paths=20000, seed=5, batch_size=4000))
    b = bsm_rs_put_mc(state, spec, bsm_params, McConfig(n_paths=20000, seed=5, batch_size=4000))
    c = bsm_rs_put_mc(state, spec, bsm_params, McConfig(n_paths=20000, seed=6, batch_size=4000))
    assert a == b
    assert a.mean != c.mean


def test_bsm_mc_independent_of_workers(bsm_params):
    state, spec = MarketState(0.0, 70.0, 2), OptionSpec(STRIKE, 2.0)
    serial = bsm_rs_put_mc(state, spec, bsm_params, McConfig(n_paths=20000, seed=2, batch_size=3000))
    pooled = bsm_rs_put_mc(state, spec, bsm_params,
                           McConfig(n_paths=20000, seed=2, batch_size=3000, workers=4))
    assert serial == pooled


def test_bsm_std_error_scales_with_paths(bsm_params):
    state, spec = MarketState(0.0, 70.0, 1), OptionSpec(STRIKE, 1.0)
    small = bsm_rs_put_mc(state, spec, bsm_params, McConfig(n_paths=20000, seed=4))
    large = bsm_rs_put_mc(state, spec, bsm_params, McConfig(n_paths=80000, seed=4))
    assert large.std_error / small.std_error == pytest.approx(0.5, rel=0.1)


def test_antithetic_reduces_error(bsm_params):
    state, spec = MarketState(0.0, 70.0, 1), OptionSpec(STRIKE, 1.0)
    plain = bsm_rs_put_mc(state, spec, bsm_params, McConfig(n_paths=40000, seed=8))
    anti = bsm_rs_put_mc(state, spec, bsm_params, McConfig(n_paths=40000, seed=8, antithetic=True))
    assert anti.n_paths == 20000
    assert anti.std_error < plain.std_error


def test_bsm_zero_tau_is_payoff(bsm_params):
    est = bsm_rs_put_mc(MarketState(1.0, 60.0, 1), OptionSpec(STRIKE, 1.0), bsm_params, McConfig())
    assert est.mean == 10.0
    assert est.std_error == 0.0


# ---------------------------------------------------------------------------
# Heston-RS
# ---------------------------------------------------------------------------
def test_heston_requires_variance(heston_params):
    with pytest.raises(ValidationError):
        heston_rs_put_mc(MarketState(0.0, 70.0, 1), OptionSpec(STRIKE, 1.0), heston_params,
                         _small_heston_cfg())


def test_heston_estimate_within_model_free_bounds(heston_params):
    spec = OptionSpec(STRIKE, 1.0)
    est = heston_rs_put_mc(MarketState(0.0, 65.0, 1, 0.05), spec, heston_params, _small_heston_cfg())
    disc = STRIKE * math.exp(-heston_params.r)
    assert disc - 65.0 - 3 * est.std_error <= est.mean <= disc
    low, high = est.ci98
    assert low < est.mean < high


def test_heston_deterministic_across_workers(heston_params):
    state, spec = MarketState(0.0, 70.0, 2, 0.05), OptionSpec(STRIKE, 0.5)
    a = heston_rs_put_mc(state, spec, heston_params, _small_heston_cfg())
    b = heston_rs_put_mc(state, spec, heston_params, _small_heston_cfg(workers=3))
    assert a == b


def test_curve_last_point_matches_single_maturity(heston_params):
    state = MarketState(0.0, 70.0, 1, 0.05)
    cfg = _small_heston_cfg()
    curve = heston_rs_put_mc_curve(state, STRIKE, [0.5, 1.0], heston_params, cfg)
    single = heston_rs_put_mc(state, OptionSpec(STRIKE, 1.0), heston_params, cfg)
    assert len(curve) == 2
    assert curve[-1].mean == pytest.approx(single.mean, rel=1e-12)
    assert curve[0].mean < curve[-1].mean + 3 * curve[-1].std_error


def test_curve_zero_maturity_is_payoff(heston_params):
    state = MarketState(0.0, 60.0, 1, 0.05)
    curve = heston_rs_put_mc_curve(state, STRIKE, [0.0, 0.5], heston_params, _small_heston_cfg())
    assert curve[0].mean == pytest.approx(float(put_payoff(60.0, STRIKE)))
    assert curve[0].std_error == 0.0


def test_diffusion_floor_scheme_runs(heston_params):
    est = heston_rs_put_mc(MarketState(0.0, 70.0, 1, 0.05), OptionSpec(STRIKE, 0.5), heston_params,
                           _small_heston_cfg(scheme="diffusion_floor"))
    assert math.isfinite(est.mean)


def test_curve_keeps_caller_order(heston_params):
    state = MarketState(0.0, 60.0, 1, 0.05)
    cfg = _small_heston_cfg()
    shuffled = heston_rs_put_mc_curve(state, STRIKE, [2.0, 0.0, 1.0], heston_params, cfg)
    ordered = heston_rs_put_mc_curve(state, STRIKE, [0.0, 1.0, 2.0], heston_params, cfg)
    assert shuffled[1].mean == pytest.approx(float(put_payoff(60.0, STRIKE)))
    assert shuffled[1].std_error == 0.0
    assert shuffled[0] == ordered[2]
    assert shuffled[2] == ordered[1]


def _within(a: McEstimate, b: McEstimate, k: float) -> bool:
    return abs(a.mean - b.mean) <= k * math.hypot(a.std_error, b.std_error)


def test_heston_equal_vol_of_vol_ignores_switching():
    spec = OptionSpec(STRIKE, 1.0)
    cfg = _small_heston_cfg(n_paths=20000, batch_size=5000)
    base = heston_rs_put_mc(MarketState(0.0, 70.0, 1, 0.05), spec,
                            HestonRsParams(0.02, 2.0, 0.1, -0.8, (0.4, 0.4), 2.0, 3.0), cfg)
    for lambdas in ((0.0, 0.0), (0.5, 0.5), (6.0, 1.0)):
        for regime in (1, 2):
            params = HestonRsParams(0.02, 2.0, 0.1, -0.8, (0.4, 0.4), *lambdas)
            est = heston_rs_put_mc(MarketState(0.0, 70.0, regime, 0.05), spec, params, cfg)
            assert _within(est, base, 4.0), (lambdas, regime, est.mean, base.mean)


def test_heston_euler_refinement_is_stable(heston_params):
    state, spec = MarketState(0.0, 70.0, 1, 0.05), OptionSpec(STRIKE, 1.0)
    coarse = heston_rs_put_mc(state, spec, heston_params, _small_heston_cfg(n_paths=20000, n_steps=100))
    fine = heston_rs_put_mc(state, spec, heston_params,
                            _small_heston_cfg(n_paths=20000, n_steps=200, seed=4))
    assert _within(coarse, fine, 4.0)


@pytest.mark.slow
def test_heston_euler_refinement_desk_scale(heston_params):
    state, spec = MarketState(0.0, 70.0, 1, 0.05), OptionSpec(STRIKE, 1.0)
    coarse = heston_rs_put_mc(state, spec, heston_params, McConfig(n_paths=100000, n_steps=500, seed=1))
    fine = heston_rs_put_mc(state, spec, heston_params, McConfig(n_paths=100000, n_steps=1000, seed=2))
    assert _within(coarse, fine, 3.0)


def test_bsm_mc_matches_cf_on_random_parameters():
    rng = np.random.default_rng(2024)
    cfg = McConfig(n_paths=40000, seed=11, batch_size=10000)
    for _ in range(5):
        sigma1 = rng.uniform(0.10, 0.30)
        params = BsmRsParams(rng.uniform(0.01, 0.025), (sigma1, rng.uniform(sigma1, 0.40)), 2.0, 1.0)
        state = MarketState(0.0, rng.uniform(40.0, 100.0), int(rng.integers(1, 3)))
        spec = OptionSpec(STRIKE, rng.uniform(0.25, 4.0))
        est = bsm_rs_put_mc(state, spec, params, cfg)
        cf = put_price_cf(state, spec, params).value
        assert abs(est.mean - cf) <= 4.0 * est.std_error + 1e-6, (params, state, spec, est.mean, cf)
