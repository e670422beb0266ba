import numpy as np
import pytest
import torch

from pirl.deriv import get_flat, set_flat
from pirl.loss import LossConfig, cost, cost_gradient
from pirl.net import NetArchitecture, ResidualNet, init_params
from pirl.sampler import SampleSets, sample_sets
from utils.common import DivergedError, ValidationError

STRIKE = 70.0


def _cfg(**kw) -> LossConfig:
    values = dict(model="bsm-rs", strike=STRIKE, lambda12=2.0, lambda21=1.0)
    values.update(kw)
    return LossConfig(**values)


def _zero_net(model="bsm-rs") -> ResidualNet:
    net = ResidualNet(NetArchitecture(model, 3, 4))
    with torch.no_grad():
        for p in net.parameters():
            p.zero_()
    return net


def test_config_from_training_section():
    training = {"strike": 70.0, "reduction": "sum", "weights": [1, 2, 3],
                "heston": {"lambda12": 2.0, "lambda21": 3.0}}
    cfg = LossConfig.from_config("heston-rs", training)
    assert (cfg.lambda21, cfg.weights, cfg.reduction) == (3.0, (1.0, 2.0, 3.0), "sum")
    with pytest.raises(ValidationError):
        LossConfig("bsm-rs", 70.0, 1.0, 1.0, reduction="median")


def test_terminal_cost_vanishes_out_of_the_money():
    sets = sample_sets("bsm-rs", 0, 5, 20, 5)
    terminal = sets.terminal.copy()
    terminal[:, 2] = np.linspace(STRIKE, 100.0, len(terminal))
    sets = SampleSets("bsm-rs", sets.inner, terminal, sets.lower)
    assert cost(_zero_net(), sets, _cfg()).c_t.item() == 0.0


def test_lower_cost_vanishes_for_discounted_strike():
    sets = sample_sets("bsm-rs", 0, 5, 5, 20)
    lower = sets.lower.copy()
    lower[:, 0], lower[:, 1], lower[:, 3] = 0.5, 2.0, 0.02
    sets = SampleSets("bsm-rs", sets.inner, sets.terminal, lower)
    net = _zero_net()
    with torch.no_grad():
        net.out.bias.fill_(STRIKE * np.exp(-0.02 * 1.5))
    assert cost(net, sets, _cfg()).c_low.item() == pytest.approx(0.0, abs=1e-20)


def test_gradient_matches_finite_differences():
    sets = sample_sets("bsm-rs", 1, 8, 8, 8)
    net = init_params(NetArchitecture("bsm-rs", 4, 4), seed=2)
    cfg = _cfg()
    theta = get_flat(net)
    _, grad, _ = cost_gradient(net, sets, cfg)
    rng = np.random.default_rng(0)
    h = 1e-6
    for k in rng.choice(theta.size, 12, replace=False):
        e = np.zeros_like(theta)
        e[k] = h
        set_flat(net, theta + e)
        up = cost(net, sets, cfg).total.item()
        set_flat(net, theta - e)
        down = cost(net, sets, cfg).total.item()
        assert grad[k] == pytest.approx((up - down) / (2 * h), rel=1e-5, abs=1e-7)
    set_flat(net, theta)


def test_weights_are_linear():
    sets = sample_sets("bsm-rs", 2, 16, 8, 8)
    net = init_params(NetArchitecture("bsm-rs", 3, 4), seed=0)
    base = cost(net, sets, _cfg()).as_floats()
    only_a = cost(net, sets, _cfg(weights=(2.0, 0.0, 0.0))).as_floats()
    assert only_a["total"] == pytest.approx(2.0 * base["c_a"])
    mixed = cost(net, sets, _cfg(weights=(1.0, 3.0, 0.5))).as_floats()
    assert mixed["total"] == pytest.approx(base["c_a"] + 3.0 * base["c_t"] + 0.5 * base["c_low"])


def test_mean_reduction_invariant_to_duplication_and_order():
    sets = sample_sets("heston-rs", 3, 10, 6, 6)
    net = init_params(NetArchitecture("heston-rs", 3, 4), seed=0)
    cfg = _cfg(model="heston-rs", lambda21=3.0)
    base = cost(net, sets, cfg).as_floats()
    doubled = SampleSets("heston-rs", *(np.concatenate([a, a]) for a in (sets.inner, sets.terminal, sets.lower)))
    perm = np.random.default_rng(0).permutation(10)
    shuffled = SampleSets("heston-rs", sets.inner[perm], sets.terminal, sets.lower)
    for other in (doubled, shuffled):
        got = cost(net, other, cfg).as_floats()
        for key in base:
            assert got[key] == pytest.approx(base[key], rel=1e-12)
    summed = cost(net, doubled, _cfg(model="heston-rs", lambda21=3.0, reduction="sum")).as_floats()
    single = cost(net, sets, _cfg(model="heston-rs", lambda21=3.0, reduction="sum")).as_floats()
    assert summed["total"] == pytest.approx(2.0 * single["total"])


def test_empty_inner_set_contributes_nothing():
    sets = sample_sets("bsm-rs", 0, 0, 5, 5)
    terms = cost(init_params(NetArchitecture("bsm-rs", 3, 4), seed=0), sets, _cfg())
    assert terms.c_a.item() == 0.0


def test_non_finite_cost_raises_diverged():
    sets = sample_sets("bsm-rs", 0, 5, 5, 5)
    net = init_params(NetArchitecture("bsm-rs", 3, 4), seed=0)
    with torch.no_grad():
        net.out.bias[0] = float("nan")
    with pytest.raises(DivergedError) as info:
        cost(net, sets, _cfg())
    assert info.value.component == "c_a"


def test_model_mismatch_rejected():
    sets = sample_sets("heston-rs", 0, 5, 5, 5)
    with pytest.raises(ValidationError):
        cost(_zero_net("bsm-rs"), sets, _cfg())
