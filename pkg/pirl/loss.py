"""
物理约束代价函数 - C = C_A + C_T + C_low

    C_A   内部点上 Σᵢ(∂_t V̄ᵢ - Dᵢ[V̄₁, V̄₂])²
    C_T   到期面上 Σᵢ(V̄ᵢ - H(S_T))²
    C_low 下边界 S = 0 上 Σᵢ(V̄ᵢ - E·e^{-r(T-t)})²
各分量默认取行均值（reduction="sum" 为逐项求和）。转移强度不是网络输入，只通过 Dᵢ 进入 C_A。
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import torch

from pirl.deriv import flat_grad, input_jet
from pirl.net import ResidualNet
from pirl.sampler import SampleSets
from pricing.core import BsmRsParams, HestonRsParams
from pricing.pde import bsm_rs_residual, heston_rs_residual
from utils.common import DivergedError, ValidationError

logger = logging.getLogger("regime-pricer")

COMPONENTS = ("c_a", "c_t", "c_low")


@dataclass(frozen=True)
class LossConfig:
    model: str
    strike: float
    lambda12: float
    lambda21: float
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    reduction: str = "mean"

    def __post_init__(self):
        if self.reduction not in ("mean", "sum"):
            raise ValidationError(f"未知 reduction: {self.reduction!r}")
        if not self.strike > 0:
            raise ValidationError("行权价必须为正")
        if len(self.weights) != 3 or min(self.weights) < 0:
            raise ValidationError("weights 必须是 3 个非负数")

    @classmethod
    def from_config(cls, model: str, training: dict) -> "LossConfig":
        section = training["bsm" if model == "bsm-rs" else "heston"]
        return cls(
            model=model,
            strike=float(training["strike"]),
            lambda12=float(section["lambda12"]),
            lambda21=float(section["lambda21"]),
            weights=tuple(float(w) for w in training["weights"]),
            reduction=training["reduction"],
        )

    def meta(self) -> dict:
        """随模型文件保存的训练常量。"""
        return {"strike": self.strike, "lambda12": self.lambda12, "lambda21": self.lambda21}


@dataclass
class CostTerms:
    total: torch.Tensor
    c_a: torch.Tensor
    c_t: torch.Tensor
    c_low: torch.Tensor

    def as_floats(self) -> dict[str, float]:
        return {
            "total": float(self.total.detach()),
            **{name: float(getattr(self, name).detach()) for name in COMPONENTS},
        }


def _reduce(per_row: torch.Tensor, reduction: str) -> torch.Tensor:
    if per_row.numel() == 0:
        return per_row.new_zeros(())
    return per_row.mean() if reduction == "mean" else per_row.sum()


def _tensor(arr: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(arr, dtype=np.float64))


def _physics_rows(net: ResidualNet, sets: SampleSets, cfg: LossConfig) -> torch.Tensor:
    rows = _tensor(sets.inner)
    if rows.shape[0] == 0:
        return rows.new_zeros((0,))
    col = {name: rows[:, i] for i, name in enumerate(sets.columns)}
    bundle = input_jet(net, rows[:, :sets.input_dim])
    if cfg.model == "bsm-rs":
        params = BsmRsParams(col["r"], (col["sigma1"], col["sigma2"]), cfg.lambda12, cfg.lambda21)
        residual = bsm_rs_residual(bundle, col["S"], params)
    else:
        params = HestonRsParams(
            col["r"], col["kappa"], col["gamma"], col["rho"],
            (col["sigma1"], col["sigma2"]), cfg.lambda12, cfg.lambda21,
        )
        residual = heston_rs_residual(bundle, col["S"], col["v"], params)
    return (residual ** 2).sum(dim=-1)


def _target_rows(net: ResidualNet, sets: SampleSets, set_name: str, target: torch.Tensor) -> torch.Tensor:
    rows = _tensor(getattr(sets, set_name))
    if rows.shape[0] == 0:
        return rows.new_zeros((0,))
    value = net(rows[:, :sets.input_dim])
    return ((value - target[:, None]) ** 2).sum(dim=-1)


def _check_finite(terms: dict[str, torch.Tensor]):
    for name, value in terms.items():
        if not math.isfinite(float(value.detach())):
            raise DivergedError(f"代价分量 {name} 出现非有限值", component=name)


def cost(net: ResidualNet, sets: SampleSets, cfg: LossConfig) -> CostTerms:
    """三部分代价；返回的张量保留计算图，可直接反向传播。"""
    if sets.model != cfg.model or net.arch.model != cfg.model:
        raise ValidationError(
            f"模型不一致: sets={sets.model}, net={net.arch.model}, loss={cfg.model}"
        )
    if sum(sets.sizes()) == 0:
        raise ValidationError("样本集为空")

    c_a = _reduce(_physics_rows(net, sets, cfg), cfg.reduction)

    spot_t = _tensor(sets.column("terminal", "S"))
    payoff = torch.clamp(cfg.strike - spot_t, min=0.0)
    c_t = _reduce(_target_rows(net, sets, "terminal", payoff), cfg.reduction)

    tau_low = _tensor(sets.column("lower", "T") - sets.column("lower", "t"))
    floor = cfg.strike * torch.exp(-_tensor(sets.column("lower", "r")) * tau_low)
    c_low = _reduce(_target_rows(net, sets, "lower", floor), cfg.reduction)

    _check_finite({"c_a": c_a, "c_t": c_t, "c_low": c_low})
    w_a, w_t, w_low = cfg.weights
    total = w_a * c_a + w_t * c_t + w_low * c_low
    return CostTerms(total, c_a, c_t, c_low)


def cost_gradient(net: ResidualNet, sets: SampleSets, cfg: LossConfig) -> tuple[float, np.ndarray, dict]:
    """代价值及其对全部权重、偏置的精确梯度（反向传播穿过输入导数的前向传播）。"""
    net.zero_grad(set_to_none=True)
    terms = cost(net, sets, cfg)
    terms.total.backward()
    grad = flat_grad(net)
    if not np.all(np.isfinite(grad)):
        raise DivergedError("参数梯度出现非有限值", component="gradient")
    return float(terms.total.detach()), grad, terms.as_floats()
