import numpy as np
import pytest
import torch

from pirl.deriv import S_COL, T_COL, V_COL, bundle_to_numpy, flat_grad, get_flat, input_jet, set_flat
from pirl.net import NetArchitecture, init_params, predict


def _points(net, n, seed=0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    lows = np.array([net.ranges[c][0] for c in net.columns])
    highs = np.array([net.ranges[c][1] for c in net.columns])
    # 远离区间端点，便于做中心差分
    return rng.uniform(lows + 0.1 * (highs - lows), highs - 0.1 * (highs - lows), size=(n, len(lows)))


def _shift(x, col, h):
    y = x.copy()
    y[:, col] += h
    return y


@pytest.mark.parametrize("model,layers,width", [("bsm-rs", 5, 8), ("heston-rs", 4, 8)])
def test_jet_matches_central_differences(model, layers, width):
    net = init_params(NetArchitecture(model, layers, width), seed=4)
    x = _points(net, 12)
    b = bundle_to_numpy(input_jet(net, x))
    h = 1e-5

    def fd(col):
        return (predict(net, _shift(x, col, h)) - predict(net, _shift(x, col, -h))) / (2 * h)

    np.testing.assert_allclose(b.d_t, fd(T_COL), rtol=1e-5, atol=1e-8)
    np.testing.assert_allclose(b.d_S, fd(S_COL), rtol=1e-5, atol=1e-8)

    def d_s_at(y):
        return bundle_to_numpy(input_jet(net, y)).d_S

    hs = 1e-4
    d_ss = (d_s_at(_shift(x, S_COL, hs)) - d_s_at(_shift(x, S_COL, -hs))) / (2 * hs)
    np.testing.assert_allclose(b.d_SS, d_ss, rtol=1e-5, atol=1e-9)

    if model == "heston-rs":
        np.testing.assert_allclose(b.d_v, fd(V_COL), rtol=1e-5, atol=1e-8)
        d_sv = (d_s_at(_shift(x, V_COL, hs)) - d_s_at(_shift(x, V_COL, -hs))) / (2 * hs)
        np.testing.assert_allclose(b.d_Sv, d_sv, rtol=1e-5, atol=1e-8)

        def d_v_at(y):
            return bundle_to_numpy(input_jet(net, y)).d_v

        d_vv = (d_v_at(_shift(x, V_COL, hs)) - d_v_at(_shift(x, V_COL, -hs))) / (2 * hs)
        np.testing.assert_allclose(b.d_vv, d_vv, rtol=1e-5, atol=1e-8)
    else:
        assert b.d_v is None


def test_value_slot_is_bitwise_forward():
    net = init_params(NetArchitecture("heston-rs", 5, 8), seed=1)
    x = torch.as_tensor(_points(net, 10))
    assert torch.equal(input_jet(net, x).value, net(x))


def test_mixed_derivative_symmetric():
    net = init_params(NetArchitecture("heston-rs", 5, 8), seed=2)
    x = torch.as_tensor(_points(net, 10))
    j = net.jet(x, (S_COL, V_COL), ((S_COL, V_COL), (V_COL, S_COL)))
    assert torch.equal(j.second[0], j.second[1])


def test_identity_activation_is_linear():
    net = init_params(NetArchitecture("bsm-rs", 4, 6, activation="identity"), seed=0)
    b = bundle_to_numpy(input_jet(net, _points(net, 7)))
    assert np.allclose(b.d_SS, 0.0)
    np.testing.assert_allclose(b.d_S, np.broadcast_to(b.d_S[0], b.d_S.shape), rtol=1e-12)


def test_flat_roundtrip_and_gradient_layout():
    net = init_params(NetArchitecture("bsm-rs", 3, 4), seed=0)
    theta = get_flat(net)
    assert theta.size == net.arch.parameter_count()
    # 层序 W¹, b¹, ...：第一个元素是 W¹[0, 0]
    assert theta[0] == float(net.first.weight[0, 0])
    set_flat(net, theta * 2.0)
    np.testing.assert_array_equal(get_flat(net), theta * 2.0)
    net.zero_grad(set_to_none=True)
    assert np.all(flat_grad(net) == 0.0)
