"""
有限差分基准解 - 体制转换 BSM 耦合方程组的 Crank-Nicolson 求解器（Rannacher 起步）

以 τ = T - t 正向推进：∂_τ V_i = ½σ_i²S²V_SS + rSV_S - rV_i + λ_ij(V_j - V_i)。
未知量按 (S 主序, 体制次序) 交错排列，两体制耦合后得到块三对角系统，
每种步型只做一次稀疏 LU 分解。
"""

import logging
import math
import time
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import splu

from pricing.core import BsmRsParams, OptionSpec, put_payoff
from utils.common import DomainError, InvalidTimeError, ValidationError

logger = logging.getLogger("regime-pricer")


@dataclass(frozen=True)
class Grid1D:
    s_max: float
    n_space: int = 400
    n_time: int = 400
    rannacher_steps: int = 2
    spacing: str = "uniform"

    def validate(self, spec: OptionSpec):
        if not self.s_max > spec.strike:
            raise ValidationError("S_max 必须大于行权价")
        if self.n_space < 50 or self.n_time < 50:
            raise ValidationError("网格点数必须 ≥ 50")
        if self.spacing != "uniform":
            raise ValidationError("仅支持均匀网格")
        if self.rannacher_steps < 0 or self.rannacher_steps % 2:
            raise ValidationError("rannacher_steps 为隐式半步数，必须是非负偶数")

    @classmethod
    def for_strike(cls, strike: float, section: dict) -> "Grid1D":
        return cls(
            s_max=float(section["s_max_factor"]) * strike,
            n_space=int(section["n_space"]),
            n_time=int(section["n_time"]),
            rannacher_steps=int(section["rannacher_steps"]),
        )


@dataclass
class PriceSurface:
    """values[k, j, i]：时刻 t_k、价格 S_j、体制 i+1 的期权价值。"""

    spots: np.ndarray
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        # T = 0 时只有一个时间层，退化为沿 S 的线性插值
        self._interp = None
        if self.times.size > 1:
            self._interp = [
                RegularGridInterpolator((self.times, self.spots), self.values[:, :, i])
                for i in range(2)
            ]

    def price(self, spot: float, t: float, regime: int) -> float:
        """双线性插值取价。"""
        if not 0.0 <= spot <= self.spots[-1]:
            raise DomainError(f"S={spot} 超出网格范围 [0, {self.spots[-1]}]")
        if not self.times[0] <= t <= self.times[-1]:
            raise InvalidTimeError(f"t={t} 超出网格范围 [{self.times[0]}, {self.times[-1]}]")
        if self._interp is None:
            return float(np.interp(spot, self.spots, self.values[0, :, regime - 1]))
        return float(self._interp[regime - 1]([[t, spot]])[0])

    def to_csv(self, path) -> None:
        tt, ss = np.meshgrid(self.times, self.spots, indexing="ij")
        frame = pd.DataFrame({
            "S": ss.ravel(),
            "t": tt.ravel(),
            "V1": self.values[:, :, 0].ravel(),
            "V2": self.values[:, :, 1].ravel(),
        })
        frame.to_csv(path, index=False)


def _operator(params: BsmRsParams, n_space: int) -> tuple[sparse.csc_matrix, np.ndarray]:
    """内部节点 j = 1..n-1 上的空间算子 A 及其 j=1 处指向 S=0 边界的系数。"""
    j = np.arange(1, n_space, dtype=float)
    blocks = []
    lower_coef = []
    for sig in params.sigma:
        alpha = 0.5 * sig ** 2 * j ** 2
        beta = 0.5 * params.r * j
        lower = alpha - beta
        diag = -2.0 * alpha - params.r
        upper = alpha + beta
        blocks.append(sparse.diags([lower[1:], diag, upper[:-1]], [-1, 0, 1]))
        lower_coef.append(lower[0])
    q = np.array([
        [-params.lambda12, params.lambda12],
        [params.lambda21, -params.lambda21],
    ])
    size = n_space - 1
    a = (
        sparse.kron(blocks[0], sparse.diags([1.0, 0.0]))
        + sparse.kron(blocks[1], sparse.diags([0.0, 1.0]))
        + sparse.kron(sparse.identity(size), sparse.csr_matrix(q))
    )
    return a.tocsc(), np.array(lower_coef)


def solve_bsm_rs_fd(spec: OptionSpec, params: BsmRsParams, grid: Grid1D) -> PriceSurface:
    """反向时间推进的 Crank-Nicolson，前 rannacher_steps 个半步用隐式 Euler。"""
    grid.validate(spec)
    n, m = grid.n_space, grid.n_time
    spots = np.linspace(0.0, grid.s_max, n + 1)
    maturity = spec.maturity
    d_tau = maturity / m if maturity > 0 else 0.0

    # 按 τ 存放，最后翻转为按 t 递增
    by_tau = np.empty((m + 1, n + 1, 2))
    payoff = put_payoff(spots, spec.strike)
    by_tau[0] = payoff[:, None]
    if maturity == 0:
        return PriceSurface(spots, np.zeros(1), by_tau[:1].copy())

    a, lower_coef = _operator(params, n)
    eye = sparse.identity(a.shape[0], format="csc")
    boundary_idx = np.array([0, 1])   # j = 1 的两个体制分量

    def floor_at(tau: float) -> float:
        return spec.strike * math.exp(-params.r * tau)

    def bc_vector(tau: float) -> np.ndarray:
        vec = np.zeros(a.shape[0])
        vec[boundary_idx] = lower_coef * floor_at(tau)
        return vec

    start_ts = time.time()
    u = np.repeat(payoff[1:n], 2)
    tau = 0.0

    # Rannacher：用隐式 Euler 的半步替换前几个 CN 步，抑制收益折点处的振荡
    half = 0.5 * d_tau
    implicit = splu((eye - half * a).tocsc())
    n_smooth = min(grid.rannacher_steps // 2, m)   # 每个整步拆成两个隐式半步
    for k in range(1, n_smooth + 1):
        for _ in range(2):
            tau += half
            u = implicit.solve(u + half * bc_vector(tau))
        by_tau[k, 1:n] = u.reshape(-1, 2)

    cn_lhs = splu((eye - 0.5 * d_tau * a).tocsc())
    cn_rhs = (eye + 0.5 * d_tau * a).tocsr()
    for k in range(n_smooth + 1, m + 1):
        tau_old, tau = tau, k * d_tau
        rhs = cn_rhs @ u + 0.5 * d_tau * (bc_vector(tau_old) + bc_vector(tau))
        u = cn_lhs.solve(rhs)
        by_tau[k, 1:n] = u.reshape(-1, 2)

    taus = np.linspace(0.0, maturity, m + 1)
    by_tau[:, 0, :] = np.array([floor_at(t) for t in taus])[:, None]
    by_tau[:, n, :] = 0.0
    by_tau[0] = payoff[:, None]

    logger.info("FD 求解完成: grid=%dx%d, S_max=%.1f | %.2fs", n, m, grid.s_max, time.time() - start_ts)
    times = np.clip(maturity - taus[::-1], 0.0, maturity)
    return PriceSurface(spots, times, by_tau[::-1].copy())
