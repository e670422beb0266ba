import numpy as np
import pytest
import torch

from pirl.net import (
    MAGIC,
    NetArchitecture,
    ResidualNet,
    init_params,
    load_model,
    predict,
    save_model,
)
from utils.common import ModelFileError, ShapeError, ValidationError


def _inputs(model: str, n: int, seed: int = 0) -> np.ndarray:
    net = ResidualNet(NetArchitecture(model, 2, 1))
    rng = np.random.default_rng(seed)
    lows = np.array([net.ranges[c][0] for c in net.columns])
    highs = np.array([net.ranges[c][1] for c in net.columns])
    return rng.uniform(lows, highs, size=(n, len(lows)))


# ---------------------------------------------------------------------------
# 结构
# ---------------------------------------------------------------------------
@pytest.mark.parametrize("model,layers,width,expected", [
    ("bsm-rs", 8, 16, 1986),
    ("heston-rs", 6, 32, 4418),
    ("bsm-rs", 2, 4, 4 * 6 + 4 + 4 * 2 + 2),
    ("bsm-rs", 3, 4, 4 * 6 + 4 + 4 * 2 + 2),
])
def test_parameter_count(model, layers, width, expected):
    arch = NetArchitecture(model, layers, width)
    assert arch.parameter_count() == expected
    assert sum(p.numel() for p in ResidualNet(arch).parameters()) == expected


def test_architecture_validation():
    with pytest.raises(ValidationError):
        NetArchitecture("bsm-rs", 1, 8)
    with pytest.raises(ValidationError):
        NetArchitecture("merton", 4, 8)
    with pytest.raises(ValidationError):
        NetArchitecture("bsm-rs", 4, 8, activation="relu")


def test_input_shape_checked():
    net = init_params(NetArchitecture("bsm-rs", 3, 4), seed=0)
    with pytest.raises(ShapeError):
        net(torch.zeros(5, 9, dtype=torch.float64))


def test_zero_parameters_give_zero_output():
    net = ResidualNet(NetArchitecture("heston-rs", 5, 8))
    with torch.no_grad():
        for p in net.parameters():
            p.zero_()
    out = predict(net, _inputs("heston-rs", 10))
    assert out.shape == (10, 2)
    assert np.all(out == 0.0)


def test_zero_residual_blocks_are_identity():
    deep = init_params(NetArchitecture("bsm-rs", 7, 8), seed=1)
    shallow = ResidualNet(NetArchitecture("bsm-rs", 3, 8))
    with torch.no_grad():
        for layer in deep.middle:
            layer.weight.zero_()
            layer.bias.zero_()
        shallow.first.load_state_dict(deep.first.state_dict())
        shallow.out.load_state_dict(deep.out.state_dict())
    x = _inputs("bsm-rs", 20)
    np.testing.assert_array_equal(predict(deep, x), predict(shallow, x))


def test_init_is_seed_deterministic():
    arch = NetArchitecture("bsm-rs", 4, 8)
    a, b, c = init_params(arch, 3), init_params(arch, 3), init_params(arch, 4)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)
    assert not torch.equal(a.first.weight, c.first.weight)
    assert all(torch.all(layer.bias == 0) for layer in a.layer_list())


def test_glorot_variance():
    net = init_params(NetArchitecture("bsm-rs", 4, 64), seed=0)
    w = net.middle[0].weight.detach().numpy()
    fan_out, fan_in = w.shape
    assert w.var() == pytest.approx(2.0 / (fan_in + fan_out), rel=0.1)
    assert np.abs(w).max() <= np.sqrt(6.0 / (fan_in + fan_out))


def test_two_layer_network_has_no_residual_blocks():
    net = init_params(NetArchitecture("bsm-rs", 2, 8), seed=0)
    assert len(net.middle) == 0
    assert predict(net, _inputs("bsm-rs", 3)).shape == (3, 2)


def test_inputs_are_normalized():
    net = ResidualNet(NetArchitecture("bsm-rs", 2, 1))
    lows = torch.tensor([[net.ranges[c][0] for c in net.columns]], dtype=torch.float64)
    highs = torch.tensor([[net.ranges[c][1] for c in net.columns]], dtype=torch.float64)
    assert torch.allclose(net.normalize(lows), -torch.ones_like(lows))
    assert torch.allclose(net.normalize(highs), torch.ones_like(highs))


# ---------------------------------------------------------------------------
# 模型文件
# ---------------------------------------------------------------------------
def test_save_load_roundtrip(tmp_path):
    net = init_params(NetArchitecture("heston-rs", 4, 8), seed=2, meta={"strike": 70.0})
    path = save_model(net, tmp_path / "m.rspirl")
    assert path.read_bytes()[:8] == MAGIC
    loaded = load_model(path)
    assert loaded.arch == net.arch
    assert loaded.meta == {"strike": 70.0}
    x = _inputs("heston-rs", 16)
    np.testing.assert_array_equal(predict(loaded, x), predict(net, x))


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.rspirl"
    path.write_bytes(b"NOTAMODEL" + b"\x00" * 32)
    with pytest.raises(ModelFileError):
        load_model(path)


def test_truncated_and_padded_files(tmp_path):
    net = init_params(NetArchitecture("bsm-rs", 3, 4), seed=0)
    blob = save_model(net, tmp_path / "m.rspirl").read_bytes()
    (tmp_path / "short.rspirl").write_bytes(blob[:-8])
    (tmp_path / "long.rspirl").write_bytes(blob + b"\x00" * 8)
    for name in ("short.rspirl", "long.rspirl"):
        with pytest.raises(ModelFileError):
            load_model(tmp_path / name)


def test_missing_file(tmp_path):
    with pytest.raises(ModelFileError):
        load_model(tmp_path / "absent.rspirl")
