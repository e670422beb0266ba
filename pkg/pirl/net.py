"""
残差网络 - 把 (t, T, 状态, 模型参数) 映射为两个体制的价格 (V̄₁, V̄₂)

层结构（L 为含输出层的层数）：
    第 1 层      h₁ = η(W¹ z + b¹)
    残差层       h_l = η(W^l [h_{l-1}; z] + b^l) + h_{l-1}，共 max(L-3, 0) 层
    输出层       V̄ = W^L h + b^L（恒等激活）
z 为按采样区间仿射映射到 [-1, 1] 的输入。

值与输入导数共用同一条传播路径（见 ResidualNet.jet），保证求导结果的值槽与 forward 逐位一致。
"""

import json
import logging
import math
import pathlib
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
from torch import nn

from utils.common import ModelFileError, ShapeError, ValidationError

logger = logging.getLogger("regime-pricer")

MODELS = ("bsm-rs", "heston-rs")

BSM_COLUMNS = ("t", "T", "S", "r", "sigma1", "sigma2")
HESTON_COLUMNS = ("t", "T", "S", "v", "r", "kappa", "gamma", "sigma1", "sigma2")

# 归一化区间，与采样器的取值范围一致
BSM_RANGES = {
    "t": (0.0, 4.0), "T": (0.0, 4.0), "S": (40.0, 100.0), "r": (0.01, 0.025),
    "sigma1": (0.10, 0.30), "sigma2": (0.10, 0.40),
}
HESTON_RANGES = {
    "t": (0.0, 4.0), "T": (0.0, 4.0), "S": (40.0, 100.0), "v": (0.01, 0.1),
    "r": (0.015, 0.025), "kappa": (1.4, 2.6), "gamma": (0.01, 0.1),
    "sigma1": (0.1, 0.45), "sigma2": (0.35, 0.75),
}

ACTIVATIONS = ("tanh", "identity")


def input_columns(model: str) -> tuple[str, ...]:
    if model == "bsm-rs":
        return BSM_COLUMNS
    if model == "heston-rs":
        return HESTON_COLUMNS
    raise ValidationError(f"未知模型: {model!r}，可选 {', '.join(MODELS)}")


def default_ranges(model: str) -> dict[str, tuple[float, float]]:
    input_columns(model)
    return dict(BSM_RANGES if model == "bsm-rs" else HESTON_RANGES)


# ---------------------------------------------------------------------------
# 网络结构
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class NetArchitecture:
    model: str
    layers: int
    width: int
    activation: str = "tanh"

    def __post_init__(self):
        input_columns(self.model)
        if self.layers < 2:
            raise ValidationError("layers 必须 ≥ 2（含输出层）")
        if self.width < 1:
            raise ValidationError("width 必须 ≥ 1")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"未知激活函数: {self.activation!r}")

    @property
    def input_dim(self) -> int:
        return len(input_columns(self.model))

    @property
    def output_dim(self) -> int:
        return 2

    @property
    def residual_layers(self) -> int:
        return max(self.layers - 3, 0)

    def parameter_count(self) -> int:
        n, d = self.width, self.input_dim
        return n * d + n + self.residual_layers * (n * (n + d) + n) + 2 * n + 2

    def to_dict(self) -> dict:
        return {"model": self.model, "layers": self.layers, "width": self.width,
                "activation": self.activation}


def _activate(name: str, z: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """返回 (η(z), η'(z), η''(z))。"""
    if name == "tanh":
        h = torch.tanh(z)
        g = 1.0 - h * h
        return h, g, -2.0 * h * g
    one = torch.ones_like(z)
    return z, one, torch.zeros_like(z)


@dataclass
class Jet:
    """一批点上的值、一阶方向导数 (K, N, m) 与二阶导数 (P, N, m)。"""

    value: torch.Tensor
    first: torch.Tensor
    second: torch.Tensor


class ResidualNet(nn.Module):
    """
    带输入拼接的残差 MLP，float64。

    meta 记录训练时固定、但不作为网络输入的量（行权价、转移强度）。
    """

    def __init__(self, arch: NetArchitecture, ranges: Optional[dict] = None,
                 meta: Optional[dict] = None):
        super().__init__()
        self.arch = arch
        self.columns = input_columns(arch.model)
        self.ranges = dict(ranges or default_ranges(arch.model))
        missing = [c for c in self.columns if c not in self.ranges]
        if missing:
            raise ShapeError(f"归一化区间缺少列: {missing}")
        for name in self.columns:
            lo, hi = self.ranges[name]
            if not hi > lo:
                raise ValidationError(f"列 {name} 的归一化区间非法: [{lo}, {hi}]")
        self.meta = dict(meta or {})

        n, d = arch.width, arch.input_dim
        lows = torch.tensor([self.ranges[c][0] for c in self.columns], dtype=torch.float64)
        highs = torch.tensor([self.ranges[c][1] for c in self.columns], dtype=torch.float64)
        self.register_buffer("center", 0.5 * (lows + highs))
        self.register_buffer("half_width", 0.5 * (highs - lows))

        self.first = nn.Linear(d, n, dtype=torch.float64)
        self.middle = nn.ModuleList(
            nn.Linear(n + d, n, dtype=torch.float64) for _ in range(arch.residual_layers)
        )
        self.out = nn.Linear(n, arch.output_dim, dtype=torch.float64)

        count = sum(p.numel() for p in self.parameters())
        if count != arch.parameter_count():
            raise ShapeError(f"参数数量 {count} 与结构公式 {arch.parameter_count()} 不符")

    # 按声明顺序排列的 (W, b)
    def layer_list(self) -> list[nn.Linear]:
        return [self.first, *self.middle, self.out]

    def normalize(self, x: torch.Tensor) -> torch.Tensor:
        return (x - self.center) / self.half_width

    def jet(self, x: torch.Tensor, dirs: tuple[int, ...] = (),
                   pairs: tuple[tuple[int, int], ...] = ()) -> Jet:
        """
        二阶 Taylor 系数的前向传播。dirs 为需要一阶导数的原始输入列，
        pairs 为需要二阶导数的 (k, l) 对（k、l 必须出现在 dirs 中）。
        """
        if x.ndim != 2 or x.shape[1] != self.arch.input_dim:
            raise ShapeError(f"输入形状应为 (N, {self.arch.input_dim})，收到 {tuple(x.shape)}")
        act = self.arch.activation
        z0 = self.normalize(x)
        slot = {k: i for i, k in enumerate(dirs)}
        idx = torch.tensor(dirs, dtype=torch.long)
        scale = 1.0 / self.half_width.index_select(0, idx)

        # 第 1 层：输入的二阶导数恒为零
        w = self.first.weight
        a = z0 @ w.T + self.first.bias
        da = (w.index_select(1, idx).T * scale[:, None])[:, None, :].expand(len(dirs), *a.shape)
        d2a = a.new_zeros((len(pairs), *a.shape))
        h, g, gp = _activate(act, a)
        dh = g * da
        d2h = self._second(g, gp, d2a, da, slot, pairs)

        n = self.arch.width
        for layer in self.middle:
            w_h, w_x = layer.weight[:, :n], layer.weight[:, n:]
            a = h @ w_h.T + z0 @ w_x.T + layer.bias
            seed = (w_x.index_select(1, idx).T * scale[:, None])[:, None, :]
            da = dh @ w_h.T + seed
            d2a = d2h @ w_h.T
            y, g, gp = _activate(act, a)
            d2h = self._second(g, gp, d2a, da, slot, pairs) + d2h
            dh = g * da + dh
            h = y + h

        w = self.out.weight
        return Jet(h @ w.T + self.out.bias, dh @ w.T, d2h @ w.T)

    @staticmethod
    def _second(g, gp, d2a, da, slot, pairs):
        if not pairs:
            return d2a
        cross = torch.stack([da[slot[k]] * da[slot[l]] for k, l in pairs])
        return g * d2a + gp * cross

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.jet(x).value


# ---------------------------------------------------------------------------
# 初始化
# ---------------------------------------------------------------------------
def init_params(arch: NetArchitecture, seed: int, ranges: Optional[dict] = None,
                meta: Optional[dict] = None) -> ResidualNet:
    """Glorot 均匀初始化权重、偏置置零；同一 seed 逐位可复现。"""
    net = ResidualNet(arch, ranges=ranges, meta=meta)
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for layer in net.layer_list():
            fan_out, fan_in = layer.weight.shape
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            layer.weight.uniform_(-bound, bound, generator=gen)
            layer.bias.zero_()
    return net


def as_inputs(x) -> torch.Tensor:
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def predict(net: ResidualNet, x) -> np.ndarray:
    """numpy 进 numpy 出的推理接口，返回 (N, 2)。"""
    with torch.no_grad():
        return net(as_inputs(x)).numpy()


# ---------------------------------------------------------------------------
# 模型文件
# ---------------------------------------------------------------------------
MAGIC = b"RSPIRL\x00\x00"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sII")


def save_model(net: ResidualNet, path) -> pathlib.Path:
    """头部为 JSON，随后按层序写出行主序 little-endian float64 的 W 与 b。"""
    path = pathlib.Path(path)
    header = json.dumps({
        "arch": net.arch.to_dict(),
        "columns": list(net.columns),
        "ranges": {k: list(v) for k, v in net.ranges.items()},
        "meta": net.meta,
        "layers": [
            {"weight": list(layer.weight.shape), "bias": list(layer.bias.shape)}
            for layer in net.layer_list()
        ],
    }, ensure_ascii=False).encode("utf-8")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as f:
            f.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)))
            f.write(header)
            for layer in net.layer_list():
                for tensor in (layer.weight, layer.bias):
                    f.write(tensor.detach().cpu().numpy().astype("<f8").tobytes(order="C"))
    except OSError as e:
        raise ModelFileError(f"模型文件写入失败: {path} ({e})")
    logger.info("模型已保存: %s | params=%d", path, net.arch.parameter_count())
    return path


def load_model(path) -> ResidualNet:
    path = pathlib.Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise ModelFileError(f"无法读取模型文件: {path} ({e})")
    if len(blob) < _PREFIX.size:
        raise ModelFileError(f"模型文件过短: {path}")
    magic, version, header_len = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise ModelFileError(f"不是模型文件（magic 不匹配）: {path}")
    if version != FORMAT_VERSION:
        raise ModelFileError(f"不支持的模型文件版本 {version}: {path}")
    try:
        header = json.loads(blob[_PREFIX.size:_PREFIX.size + header_len].decode("utf-8"))
        arch = NetArchitecture(**header["arch"])
    except (ValueError, KeyError, TypeError) as e:
        raise ModelFileError(f"模型文件头部损坏: {path} ({e})")

    ranges = {k: tuple(v) for k, v in header["ranges"].items()}
    net = ResidualNet(arch, ranges=ranges, meta=header.get("meta"))
    offset = _PREFIX.size + header_len
    with torch.no_grad():
        for layer in net.layer_list():
            for tensor in (layer.weight, layer.bias):
                count = tensor.numel()
                end = offset + 8 * count
                if end > len(blob):
                    raise ModelFileError(f"模型文件数据截断: {path}")
                arr = np.frombuffer(blob[offset:end], dtype="<f8").reshape(tuple(tensor.shape))
                tensor.copy_(torch.from_numpy(arr.astype(np.float64)))
                offset = end
    if offset != len(blob):
        raise ModelFileError(f"模型文件末尾有多余数据: {path}")
    if not all(torch.isfinite(p).all() for p in net.parameters()):
        raise ModelFileError(f"模型参数含非有限值: {path}")
    return net
