"""
核心领域类型与公式 - 模型参数、期权规格、市场状态、价格结果，以及收益/边界/闭式解
"""

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
from scipy.stats import norm

from utils.common import DomainError, InvalidTimeError, ValidationError

logger = logging.getLogger("regime-pricer")

# 98% 双侧置信区间对应的正态分位数
Z_98 = 2.326

REGIMES = (1, 2)


def _holds(cond: Any) -> bool:
    """对标量 / numpy 数组 / torch 张量统一求「全部成立」。"""
    if hasattr(cond, "all"):
        return bool(cond.all())
    return bool(cond)


def check_regime(regime: int) -> int:
    if regime not in REGIMES:
        raise ValidationError(f"regime 必须为 1 或 2，收到 {regime!r}")
    return regime


# ---------------------------------------------------------------------------
# 模型参数
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class BsmRsParams:
    """两状态体制转换 Black-Scholes 模型参数（风险中性）。

    字段可以是标量，也可以是逐样本的数组 / 张量（训练损失按行取参数）。
    """

    r: Any
    sigma: tuple[Any, Any]
    lambda12: float
    lambda21: float

    def __post_init__(self):
        if not _holds(self.r >= 0):
            raise ValidationError("无风险利率 r 必须非负")
        if not (_holds(self.sigma[0] > 0) and _holds(self.sigma[1] > 0)):
            raise ValidationError("各体制波动率 sigma 必须为正")
        if self.lambda12 < 0 or self.lambda21 < 0:
            raise ValidationError("转移强度 lambda 必须非负")

    def swapped(self) -> "BsmRsParams":
        """交换两个体制的标签。"""
        return BsmRsParams(self.r, (self.sigma[1], self.sigma[0]), self.lambda21, self.lambda12)


@dataclass(frozen=True)
class HestonRsParams:
    """两状态体制转换 Heston 模型参数；sigma 为各体制的波动率的波动率。"""

    r: Any
    kappa: Any
    gamma: Any
    rho: Any
    sigma: tuple[Any, Any]
    lambda12: float
    lambda21: float

    def __post_init__(self):
        if not _holds(self.r >= 0):
            raise ValidationError("无风险利率 r 必须非负")
        if not _holds(self.kappa > 0):
            raise ValidationError("均值回复速度 kappa 必须为正")
        if not _holds(self.gamma > 0):
            raise ValidationError("长期方差水平 gamma 必须为正")
        if not (_holds(self.rho >= -1) and _holds(self.rho <= 1)):
            raise ValidationError("相关系数 rho 必须位于 [-1, 1]")
        if not (_holds(self.sigma[0] > 0) and _holds(self.sigma[1] > 0)):
            raise ValidationError("各体制 vol-of-vol 必须为正")
        if self.lambda12 < 0 or self.lambda21 < 0:
            raise ValidationError("转移强度 lambda 必须非负")

    def swapped(self) -> "HestonRsParams":
        return HestonRsParams(
            self.r, self.kappa, self.gamma, self.rho,
            (self.sigma[1], self.sigma[0]), self.lambda21, self.lambda12,
        )


# ---------------------------------------------------------------------------
# 期权与市场状态
# ---------------------------------------------------------------------------
class PayoffKind(str, enum.Enum):
    PUT = "put"


@dataclass(frozen=True)
class OptionSpec:
    strike: float
    maturity: float
    kind: PayoffKind = PayoffKind.PUT

    def __post_init__(self):
        if not self.strike > 0:
            raise ValidationError("行权价 E 必须为正")
        if not self.maturity >= 0:
            raise ValidationError("到期时间 T 必须非负")


@dataclass(frozen=True)
class MarketState:
    """当前时刻 t、标的价格 S、（Heston 才有的）方差 v、当前体制 regime（1 基）。"""

    t: float
    spot: float
    regime: int = 1
    variance: Optional[float] = None

    def __post_init__(self):
        check_regime(self.regime)
        if not self.t >= 0:
            raise InvalidTimeError("当前时刻 t 必须非负")
        if not self.spot >= 0:
            raise DomainError("标的价格 S 必须非负")
        if self.variance is not None and not self.variance >= 0:
            raise DomainError("方差 v 必须非负")

    def tau(self, spec: OptionSpec) -> float:
        """剩余期限 T - t；t > T 视为非法时间。"""
        if self.t > spec.maturity:
            raise InvalidTimeError(f"当前时刻 t={self.t} 超过到期 T={spec.maturity}")
        return spec.maturity - self.t


@dataclass(frozen=True)
class PriceResult:
    value: float
    regime: int
    std_error: Optional[float] = None
    ci98: Optional[tuple[float, float]] = None
    method: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.ci98 is not None and not (self.ci98[0] <= self.value <= self.ci98[1]):
            raise ValidationError("置信区间未覆盖点估计")

    def to_dict(self) -> dict:
        out = {"value": self.value, "regime": self.regime, "method": self.method}
        if self.std_error is not None:
            out["std_error"] = self.std_error
        if self.ci98 is not None:
            out["ci98"] = list(self.ci98)
        out.update(self.extra)
        return out


# ---------------------------------------------------------------------------
# 收益与边界公式
# ---------------------------------------------------------------------------
def put_payoff(spot, strike):
    """H(S) = max(E - S, 0)，支持数组。"""
    return np.maximum(strike - spot, 0.0)


def discounted_floor(strike: float, r: float, t: float, maturity: float) -> float:
    """S = 0 边界：E·exp(-r(T-t))。"""
    if t > maturity:
        raise InvalidTimeError(f"t={t} 超过到期 T={maturity}")
    return strike * math.exp(-r * (maturity - t))


def put_bounds(spot, strike, r, tau):
    """无模型界 [max(E·e^{-rτ} - S, 0), E·e^{-rτ}]。"""
    disc = strike * np.exp(-r * tau)
    return np.maximum(disc - spot, 0.0), disc


def bs_put_closed_form(spot, strike, r, sigma, tau):
    """标准 Black-Scholes 欧式看跌期权价格，用作退化情形的基准解。"""
    spot = np.asarray(spot, dtype=float)
    tau = np.asarray(tau, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    disc = strike * np.exp(-r * tau)
    live = (tau > 0) & (spot > 0) & (sigma > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        vol = sigma * np.sqrt(tau)
        d1 = (np.log(spot / strike) + (r + 0.5 * sigma ** 2) * tau) / vol
        d2 = d1 - vol
        value = disc * norm.cdf(-d2) - spot * norm.cdf(-d1)
    # τ = 0 回到收益；S = 0 为贴现行权价；σ → 0 为确定性远期的内在价值
    degenerate = np.where(tau > 0, np.maximum(disc - spot, 0.0), put_payoff(spot, strike))
    out = np.where(live, value, degenerate)
    return float(out) if out.ndim == 0 else out
