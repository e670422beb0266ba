"""
耦合 PDE 残差算子 - 体制转换 BSM 与 Heston 两套方程组的 D_i，以及边界条件目标值

DerivBundle 的每个字段最后一维长度为 2（体制 1、2），前面的维度为样本维；
字段可以是 numpy 数组，也可以是 torch 张量（训练损失直接对其反向传播）。
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from pricing.core import (
    BsmRsParams,
    HestonRsParams,
    MarketState,
    OptionSpec,
    discounted_floor,
    put_payoff,
)
from utils.common import NotABoundaryError, ValidationError

logger = logging.getLogger("regime-pricer")

_OTHER = [1, 0]


@dataclass(frozen=True)
class DerivBundle:
    value: Any
    d_t: Any
    d_S: Any
    d_SS: Any
    d_v: Optional[Any] = None
    d_vv: Optional[Any] = None
    d_Sv: Optional[Any] = None

    @property
    def is_heston(self) -> bool:
        return self.d_v is not None

    def swapped(self) -> "DerivBundle":
        """交换两个体制的槽位。"""
        def flip(x):
            return None if x is None else x[..., _OTHER]
        return DerivBundle(*(flip(getattr(self, f)) for f in (
            "value", "d_t", "d_S", "d_SS", "d_v", "d_vv", "d_Sv")))


def _is_torch(x) -> bool:
    return type(x).__module__.startswith("torch")


def _like(x, ref):
    """系数与导数包保持同一种数组类型（numpy 或 torch）。"""
    if _is_torch(ref):
        import torch
        if not _is_torch(x):
            return torch.as_tensor(np.asarray(x, dtype=float), dtype=ref.dtype, device=ref.device)
        return x
    return np.asarray(x, dtype=float)


def _col(x, ref):
    """把逐样本系数变成可与 (..., 2) 广播的列。"""
    x = _like(x, ref)
    return x[..., None] if x.ndim > 0 else x


def _pair(a, b, ref):
    """把两个体制的系数拼成最后一维为 2 的数组 / 张量。"""
    a, b = _like(a, ref), _like(b, ref)
    if _is_torch(ref):
        import torch
        a, b = torch.broadcast_tensors(a, b)
        return torch.stack([a, b], dim=-1)
    a, b = np.broadcast_arrays(a, b)
    return np.stack([a, b], axis=-1)


def _coupling(value, lambda12: float, lambda21: float):
    # λ_ij (V_i - V_j)：体制 1 用 λ12，体制 2 用 λ21
    rates = _like([lambda12, lambda21], value)
    return rates * (value - value[..., _OTHER])


def bsm_rs_residual(b: DerivBundle, spot, params: BsmRsParams):
    """∂_t V_i - D_i，D_i = -½σ_i²S²V_SS - rSV_S + rV_i + λ_ij(V_i - V_j)。"""
    if b.value is None or b.d_t is None or b.d_S is None or b.d_SS is None:
        raise ValidationError("BSM 残差需要 V、∂t、∂S、∂SS")
    s = _col(spot, b.value)
    r = _col(params.r, b.value)
    sig_sq = _pair(params.sigma[0] ** 2, params.sigma[1] ** 2, b.value)
    d_op = (
        -0.5 * sig_sq * s ** 2 * b.d_SS
        - r * s * b.d_S
        + r * b.value
        + _coupling(b.value, params.lambda12, params.lambda21)
    )
    return b.d_t - d_op


def heston_rs_residual(b: DerivBundle, spot, variance, params: HestonRsParams):
    """∂_t V_i - D_i，vol-of-vol 按体制取 σ_i。"""
    if not b.is_heston or b.d_vv is None or b.d_Sv is None:
        raise ValidationError("Heston 残差需要完整的 v 方向导数")
    s = _col(spot, b.value)
    v = _col(variance, b.value)
    r = _col(params.r, b.value)
    kappa = _col(params.kappa, b.value)
    gamma = _col(params.gamma, b.value)
    rho = _col(params.rho, b.value)
    sig = _pair(params.sigma[0], params.sigma[1], b.value)
    d_op = (
        -0.5 * v * s ** 2 * b.d_SS
        - r * s * b.d_S
        + r * b.value
        - 0.5 * sig ** 2 * v * b.d_vv
        - sig * v * rho * s * b.d_Sv
        - kappa * (gamma - v) * b.d_v
        + _coupling(b.value, params.lambda12, params.lambda21)
    )
    return b.d_t - d_op


# ---------------------------------------------------------------------------
# 边界条件
# ---------------------------------------------------------------------------
def boundary_values(model: str, state: MarketState, spec: OptionSpec, params) -> tuple[float, float]:
    """边界面上的目标值对：S = 0、t = T，以及 Heston 的 v = 0 面。"""
    tau = state.tau(spec)
    if tau == 0:
        value = float(put_payoff(state.spot, spec.strike))
        return value, value
    if state.spot == 0:
        value = discounted_floor(spec.strike, params.r, state.t, spec.maturity)
        return value, value
    if model == "heston-rs" and state.variance == 0:
        # 零方差极限：S 按无风险利率确定性增长
        value = max(spec.strike * math.exp(-params.r * tau) - state.spot, 0.0)
        return value, value
    raise NotABoundaryError(
        f"({state.t}, S={state.spot}, v={state.variance}) 不在 {model} 的边界面上"
    )
