"""
两状态连续时间马尔可夫链 - 生成元、精确路径模拟、占用时间与网格离散化

体制对外一律 1 基（1、2），内部数组用 0 基。
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from pricing.core import check_regime
from utils.common import ValidationError

logger = logging.getLogger("regime-pricer")


# ---------------------------------------------------------------------------
# 生成元
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Generator:
    lambda12: float
    lambda21: float

    def __post_init__(self):
        if not (self.lambda12 >= 0 and self.lambda21 >= 0):
            raise ValidationError("转移强度必须非负")
        if not (np.isfinite(self.lambda12) and np.isfinite(self.lambda21)):
            raise ValidationError("转移强度必须有限")

    @property
    def q(self) -> np.ndarray:
        return np.array([
            [-self.lambda12, self.lambda12],
            [self.lambda21, -self.lambda21],
        ])

    def rate(self, regime: int) -> float:
        """离开给定体制的强度。"""
        return self.lambda12 if regime == 1 else self.lambda21

    def transition_matrix(self, t: float) -> np.ndarray:
        """P(t) = exp(Q t)。"""
        return expm(self.q * t)

    def transition_closed_form(self, t: float) -> np.ndarray:
        """两状态链转移矩阵的闭式解。"""
        total = self.lambda12 + self.lambda21
        if total == 0:
            return np.eye(2)
        decay = np.exp(-total * t)
        p11 = (self.lambda21 + self.lambda12 * decay) / total
        p22 = (self.lambda12 + self.lambda21 * decay) / total
        return np.array([[p11, 1.0 - p11], [1.0 - p22, p22]])

    def stationary(self) -> tuple[float, float]:
        total = self.lambda12 + self.lambda21
        if total == 0:
            raise ValidationError("吸收链没有唯一平稳分布")
        return self.lambda21 / total, self.lambda12 / total


# ---------------------------------------------------------------------------
# 体制路径
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class RegimePath:
    """右连续分段常数路径：states[k] 在 [switch_times[k-1], switch_times[k]) 上生效。"""

    switch_times: tuple[float, ...]
    states: tuple[int, ...]
    horizon: float

    def __post_init__(self):
        if len(self.states) != len(self.switch_times) + 1:
            raise ValidationError("states 数量必须比切换时刻多 1")
        times = np.asarray(self.switch_times, dtype=float)
        if times.size and (np.any(np.diff(times) <= 0) or times[0] < 0 or times[-1] >= self.horizon):
            raise ValidationError("切换时刻必须严格递增且位于 [0, horizon) 内")
        for a, b in zip(self.states, self.states[1:]):
            if a == b:
                raise ValidationError("两状态链的体制必须交替")

    def state_at(self, t: float) -> int:
        k = int(np.searchsorted(np.asarray(self.switch_times), t, side="right"))
        return self.states[k]


def simulate_regime_path(gen: Generator, initial: int, horizon: float,
                         rng: np.random.Generator) -> RegimePath:
    """事件驱动的精确模拟：体制 j 的停留时间服从 Exponential(λ_jk)。"""
    check_regime(initial)
    if horizon < 0:
        raise ValidationError("horizon 必须非负")
    times: list[float] = []
    states = [initial]
    now = 0.0
    state = initial
    while True:
        rate = gen.rate(state)
        if rate == 0:
            break  # 吸收态
        now += rng.exponential(1.0 / rate)
        if now >= horizon:
            break
        times.append(now)
        state = 3 - state
        states.append(state)
    return RegimePath(tuple(times), tuple(states), horizon)


def occupation_time(path: RegimePath, regime: int) -> float:
    """路径在给定体制中停留的总时间。"""
    check_regime(regime)
    edges = (0.0, *path.switch_times, path.horizon)
    return float(sum(
        end - start
        for state, start, end in zip(path.states, edges[:-1], edges[1:])
        if state == regime
    ))


def discretize(path: RegimePath, n_steps: int) -> list[int]:
    """在均匀网格左端点上取体制值（与 Euler 步的 Itô 非预见性一致）。"""
    if n_steps < 1:
        raise ValidationError("n_steps 必须 ≥ 1")
    grid = np.arange(n_steps) * (path.horizon / n_steps)
    idx = np.searchsorted(np.asarray(path.switch_times, dtype=float), grid, side="right")
    states = np.asarray(path.states)
    return states[idx].tolist()


# ---------------------------------------------------------------------------
# 批量采样（蒙特卡洛用）
# ---------------------------------------------------------------------------
def simulate_occupation(gen: Generator, initial: int, horizon: float, n_paths: int,
                        rng: np.random.Generator) -> np.ndarray:
    """一次性模拟 n_paths 条独立路径，返回每条路径在体制 1 的占用时间。"""
    check_regime(initial)
    rates = np.array([gen.lambda12, gen.lambda21])
    state = np.full(n_paths, initial - 1, dtype=np.int64)
    now = np.zeros(n_paths)
    occ1 = np.zeros(n_paths)
    active = np.ones(n_paths, dtype=bool)
    while active.any():
        idx = np.flatnonzero(active)
        rate = rates[state[idx]]
        with np.errstate(divide="ignore"):
            hold = np.where(rate > 0, rng.exponential(1.0, idx.size) / rate, np.inf)
        stay = np.minimum(hold, horizon - now[idx])
        occ1[idx] += np.where(state[idx] == 0, stay, 0.0)
        now[idx] += stay
        done = now[idx] >= horizon
        state[idx] = 1 - state[idx]
        active[idx[done]] = False
    return occ1


def sample_on_grid(gen: Generator, initial: int, horizon: float, n_steps: int, n_paths: int,
                   rng: np.random.Generator) -> np.ndarray:
    """批量模拟后取网格左端点体制，返回形状 (n_steps, n_paths) 的 0 基体制数组。"""
    check_regime(initial)
    rates = np.array([gen.lambda12, gen.lambda21])
    dt = horizon / n_steps
    state = np.full(n_paths, initial - 1, dtype=np.int64)

    def _holding(states: np.ndarray) -> np.ndarray:
        rate = rates[states]
        with np.errstate(divide="ignore"):
            return np.where(rate > 0, rng.exponential(1.0, states.size) / rate, np.inf)

    next_switch = _holding(state)
    out = np.empty((n_steps, n_paths), dtype=np.int8)
    for i in range(n_steps):
        t = i * dt
        due = next_switch <= t
        while due.any():
            idx = np.flatnonzero(due)
            state[idx] = 1 - state[idx]
            next_switch[idx] += _holding(state[idx])
            due = next_switch <= t
        out[i] = state
    return out
