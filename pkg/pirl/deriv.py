"""
精确求导 - 网络输出对 (t, S[, v]) 的一、二阶偏导，以及参数向量的展平 / 回写

输入导数走前向模式（ResidualNet.jet 逐层传播 Taylor 系数），
参数梯度由 torch 反向模式穿过这条前向传播得到，全程 float64。
"""

import logging

import numpy as np
import torch
from torch.nn.utils import parameters_to_vector, vector_to_parameters

from pirl.net import ResidualNet, as_inputs
from pricing.pde import DerivBundle

logger = logging.getLogger("regime-pricer")

# 列号：t=0, S=2, v=3（两种输入布局一致）
T_COL, S_COL, V_COL = 0, 2, 3

_BSM_DIRS = (T_COL, S_COL)
_BSM_PAIRS = ((S_COL, S_COL),)
_HESTON_DIRS = (T_COL, S_COL, V_COL)
_HESTON_PAIRS = ((S_COL, S_COL), (V_COL, V_COL), (S_COL, V_COL))


def input_jet(net: ResidualNet, x) -> DerivBundle:
    """PDE 残差所需的全部输入导数，各字段形状 (N, 2)。value 与 net(x) 逐位相同。"""
    x = x if isinstance(x, torch.Tensor) else as_inputs(x)
    if net.arch.model == "bsm-rs":
        j = net.jet(x, _BSM_DIRS, _BSM_PAIRS)
        return DerivBundle(value=j.value, d_t=j.first[0], d_S=j.first[1], d_SS=j.second[0])
    j = net.jet(x, _HESTON_DIRS, _HESTON_PAIRS)
    return DerivBundle(
        value=j.value, d_t=j.first[0], d_S=j.first[1], d_SS=j.second[0],
        d_v=j.first[2], d_vv=j.second[1], d_Sv=j.second[2],
    )


def bundle_to_numpy(b: DerivBundle) -> DerivBundle:
    def conv(t):
        return None if t is None else t.detach().cpu().numpy()
    return DerivBundle(*(conv(getattr(b, f)) for f in (
        "value", "d_t", "d_S", "d_SS", "d_v", "d_vv", "d_Sv")))


# ---------------------------------------------------------------------------
# 参数向量
# ---------------------------------------------------------------------------
def get_flat(net: ResidualNet) -> np.ndarray:
    """按层序 (W¹, b¹, ..., W^L, b^L) 展平的参数副本 Θ。"""
    return parameters_to_vector(net.parameters()).detach().cpu().numpy().copy()


def set_flat(net: ResidualNet, theta: np.ndarray) -> None:
    with torch.no_grad():
        vector_to_parameters(torch.as_tensor(np.asarray(theta, dtype=np.float64)), net.parameters())


def flat_grad(net: ResidualNet) -> np.ndarray:
    grads = [p.grad if p.grad is not None else torch.zeros_like(p) for p in net.parameters()]
    return parameters_to_vector(grads).detach().cpu().numpy().copy()
