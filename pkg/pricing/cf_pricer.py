"""
特征函数定价 - 体制转换 Black-Scholes 下欧式看跌期权的半解析解

价格分解：
    P = e^{-rτ}·E·P(S_T ≤ E) - S·P̃(S_T ≤ E)
其中 P 由 f1（对数价格特征函数）反演得到，P̃ 由测度变换后的 f2 反演得到。
概率反演采用 P(Y ≤ x) = 1/2 - (1/π)∫₀^∞ Im(e^{-iηx} f(η)) / η dη。
"""

import logging
import math
import time
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from pricing.core import (
    BsmRsParams,
    MarketState,
    OptionSpec,
    PriceResult,
    bs_put_closed_form,
    put_bounds,
    put_payoff,
)
from utils.common import ConsistencyError, DomainError, QuadratureError, ValidationError

logger = logging.getLogger("regime-pricer")

# 2×2 复矩阵，形状 (..., 2, 2)，支持批量
ComplexMat2 = np.ndarray

# 特征值间距低于该值时改用级数展开
_EIG_GAP = 1.0e-8

# η → 0 极限使用的对称差分步长
_MEAN_STEP = 1.0e-6


# ---------------------------------------------------------------------------
# 积分配置
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class QuadratureConfig:
    scheme: str = "adaptive"
    tol: float = 1.0e-10
    eta_max: Optional[float] = None
    eta_cap: float = 1.0e4
    nodes: int = 512
    limit: int = 500
    max_error: float = 1.0e-8
    bound_tol: float = 1.0e-6
    short_tau: float = 1.0e-4      # τ ≤ short_tau 时改用单次切换展开
    decay: Optional[float] = None   # σ²_min·τ，用于自动截断和尾部界

    def __post_init__(self):
        if self.scheme not in ("adaptive", "gauss-legendre"):
            raise ValidationError(f"未知积分方案: {self.scheme}")
        if not self.tol > 0:
            raise ValidationError("积分容差必须为正")
        if self.eta_max is not None and not self.eta_max > 0:
            raise ValidationError("eta_max 必须为正")
        if not self.max_error > 0:
            raise ValidationError("max_error 必须为正")
        if self.short_tau < 0:
            raise ValidationError("short_tau 不能为负")

    @classmethod
    def from_config(cls, section: dict) -> "QuadratureConfig":
        return cls(
            scheme=section["scheme"],
            tol=float(section["tol"]),
            eta_max=None if section["eta_max"] is None else float(section["eta_max"]),
            eta_cap=float(section["eta_cap"]),
            nodes=int(section["nodes"]),
            limit=int(section["limit"]),
            max_error=float(section["max_error"]),
            bound_tol=float(section["bound_tol"]),
            short_tau=float(section["short_tau"]),
        )

    def with_decay(self, decay: float) -> "QuadratureConfig":
        return replace(self, decay=decay)

    def truncation(self) -> float:
        """截断点：显式指定优先，否则由高斯衰减界 |f(η)| ≤ exp(-½σ²_min τ η²) 决定。"""
        if self.eta_max is not None:
            return self.eta_max
        if not self.decay:
            return self.eta_cap
        eta = math.sqrt(2.0 * math.log(1.0 / self.tol) / self.decay) + 10.0
        return min(eta, self.eta_cap)

    def tail_bound(self, eta_max: float) -> float:
        """∫_{η_max}^∞ e^{-cη²/2}/η dη ≤ e^{-cη_max²/2}/(c·η_max²)，再乘 1/π。"""
        if not self.decay:
            return float("nan")
        c = self.decay
        return math.exp(-0.5 * c * eta_max ** 2) / (c * eta_max ** 2) / math.pi


# ---------------------------------------------------------------------------
# 矩阵 M 与 2×2 矩阵指数
# ---------------------------------------------------------------------------
def _m_entries(eta, tau, s1sq, s2sq, l12, l21) -> ComplexMat2:
    eta = np.asarray(eta, dtype=complex)
    diffusion = -1j * eta - eta ** 2
    shape = np.broadcast(eta, tau, s1sq, s2sq, l12, l21).shape
    m = np.empty(shape + (2, 2), dtype=complex)
    m[..., 0, 0] = -l12 * tau + 0.5 * s1sq * diffusion * tau
    m[..., 0, 1] = l21 * tau
    m[..., 1, 0] = l12 * tau
    m[..., 1, 1] = -l21 * tau + 0.5 * s2sq * diffusion * tau
    return m


def matrix_M(eta, tau: float, params: BsmRsParams) -> ComplexMat2:
    """M = Qᵀτ + diag(½σ_k²(-iη - η²)τ)。"""
    if tau < 0:
        raise ValidationError("tau 必须非负")
    return _m_entries(
        eta, tau, params.sigma[0] ** 2, params.sigma[1] ** 2, params.lambda12, params.lambda21,
    )


def expm_2x2(m: ComplexMat2) -> ComplexMat2:
    """2×2 复矩阵指数的闭式解（Putzer / Cayley-Hamilton），支持批量。

    记 μ = tr(M)/2，δ² = ((a-d)/2)² + bc，则
        e^M = e^μ [cosh(δ)·I + sinh(δ)/δ·(M - μI)]
    |δ| 较大时改写为 e^{μ±δ} 的组合以避免上溢。
    """
    m = np.asarray(m, dtype=complex)
    a, b, c, d = m[..., 0, 0], m[..., 0, 1], m[..., 1, 0], m[..., 1, 1]
    mu = 0.5 * (a + d)
    delta = np.sqrt((0.5 * (a - d)) ** 2 + b * c)
    small = np.abs(delta) < 1.0
    tiny = 2.0 * np.abs(delta) < _EIG_GAP

    with np.errstate(all="ignore"):
        e_mu = np.exp(mu)
        e_hi = np.exp(mu + delta)
        e_lo = np.exp(mu - delta)
        cosh_part = np.where(small, e_mu * np.cosh(delta), 0.5 * (e_hi + e_lo))
        sinhc = np.where(
            tiny,
            e_mu * (1.0 + delta ** 2 / 6.0),
            np.where(small, e_mu * np.sinh(delta) / delta, (e_hi - e_lo) / (2.0 * delta)),
        )

    out = np.empty_like(m)
    out[..., 0, 0] = cosh_part + sinhc * (a - mu)
    out[..., 0, 1] = sinhc * b
    out[..., 1, 0] = sinhc * c
    out[..., 1, 1] = cosh_part + sinhc * (d - mu)
    return out


# ---------------------------------------------------------------------------
# 特征函数
# ---------------------------------------------------------------------------
def _f1_kernel(eta, y, tau, r, s1sq, s2sq, l12, l21, col):
    """f1(η) = e^{iη(y + rτ)}·⟨e^M e_i, 𝟙⟩，col 为 0 基体制（可为数组）。"""
    eta = np.asarray(eta, dtype=complex)
    expo = expm_2x2(_m_entries(eta, tau, s1sq, s2sq, l12, l21))
    col_sums = expo.sum(axis=-2)    # 每列之和 = ⟨e^M e_j, 𝟙⟩
    picked = np.where(np.asarray(col) == 0, col_sums[..., 0], col_sums[..., 1])
    return np.exp(1j * eta * (y + r * tau)) * picked


def _f2_kernel(eta, y, tau, r, s1sq, s2sq, l12, l21, col):
    """f2(η) = e^{-rτ - y}·f1(η - i)。"""
    shifted = np.asarray(eta, dtype=complex) - 1j
    return np.exp(-r * tau - y) * _f1_kernel(shifted, y, tau, r, s1sq, s2sq, l12, l21, col)


def _kernel_args(state: MarketState, spec: OptionSpec, params: BsmRsParams) -> tuple:
    if not state.spot > 0:
        raise DomainError("特征函数要求 S > 0")
    tau = state.tau(spec)
    return (
        math.log(state.spot), tau, params.r,
        params.sigma[0] ** 2, params.sigma[1] ** 2,
        params.lambda12, params.lambda21, state.regime - 1,
    )


def _squeeze(value):
    value = np.asarray(value)
    return complex(value) if value.ndim == 0 else value


def char_fn_f1(eta, state: MarketState, spec: OptionSpec, params: BsmRsParams):
    """对数价格 log S_T 在风险中性测度下的特征函数。"""
    return _squeeze(_f1_kernel(eta, *_kernel_args(state, spec, params)))


def char_fn_f2(eta, state: MarketState, spec: OptionSpec, params: BsmRsParams):
    """以股票为计价单位的测度 Q1 下 log S_T 的特征函数。"""
    return _squeeze(_f2_kernel(eta, *_kernel_args(state, spec, params)))


# ---------------------------------------------------------------------------
# 概率反演
# ---------------------------------------------------------------------------
def _log_mean(char_fn: Callable) -> float:
    # Im f 为奇函数，Im f(h)/h 是 E[Y] 的二阶精确近似
    return float(np.imag(char_fn(_MEAN_STEP))) / _MEAN_STEP


def prob_below(char_fn: Callable, strike: float, quad: QuadratureConfig) -> float:
    """P(S_T ≤ E) = 1/2 - (1/π)∫₀^{η_max} Im(e^{-iη ln E} f(η)) / η dη。"""
    if not strike > 0:
        raise DomainError("行权价必须为正")
    log_k = math.log(strike)
    eta_max = quad.truncation()
    limit_at_zero = _log_mean(char_fn) - log_k

    def integrand(eta):
        eta = np.asarray(eta, dtype=float)
        with np.errstate(invalid="ignore", divide="ignore"):
            value = np.imag(np.exp(-1j * eta * log_k) * char_fn(eta)) / eta
        return np.where(eta > 0, value, limit_at_zero)

    tail = quad.tail_bound(eta_max)
    if quad.scheme == "adaptive":
        value, abs_err = integrate.quad(
            lambda e: float(integrand(e)), 0.0, eta_max,
            epsabs=quad.tol, epsrel=0.0, limit=quad.limit,
        )
    else:
        nodes, weights = np.polynomial.legendre.leggauss(quad.nodes)
        eta = 0.5 * eta_max * (nodes + 1.0)
        value = float(np.sum(0.5 * eta_max * weights * integrand(eta)))
        abs_err = float("nan")

    if (np.isfinite(tail) and tail > quad.max_error) or (np.isfinite(abs_err) and abs_err > quad.max_error):
        raise QuadratureError(
            f"傅里叶反演未收敛: tail={tail:.3e}, abs_err={abs_err:.3e}, eta_max={eta_max:.1f}",
            tail_bound=tail, abs_error=abs_err,
        )
    return 0.5 - value / math.pi


# ---------------------------------------------------------------------------
# 定价
# ---------------------------------------------------------------------------
def short_maturity_put(state: MarketState, spec: OptionSpec, params: BsmRsParams,
                       nodes: int = 32) -> float:
    """极短期限的展开：只保留至多一次体制切换的路径，截断误差为 O((λτ)²)。

    给定体制路径后价格是积分方差对应的 Black-Scholes 价格；
    无切换路径的概率为 e^{-λ_i τ}，在 u 处切换一次的密度为 λ_i e^{-λ_i u} e^{-λ_j (τ-u)}。
    """
    tau = state.tau(spec)
    i = state.regime - 1
    sig_i, sig_j = params.sigma[i], params.sigma[1 - i]
    out_i, out_j = (params.lambda12, params.lambda21) if i == 0 else (params.lambda21, params.lambda12)
    stay = math.exp(-out_i * tau)
    value = stay * bs_put_closed_form(state.spot, spec.strike, params.r, sig_i, tau)
    if out_i == 0:
        return float(value)

    x, w = np.polynomial.legendre.leggauss(nodes)
    u = 0.5 * tau * (x + 1.0)
    dens = 0.5 * tau * w * out_i * np.exp(-out_i * u - out_j * (tau - u))
    vol = np.sqrt((sig_i ** 2 * u + sig_j ** 2 * (tau - u)) / tau)
    switched = bs_put_closed_form(state.spot, spec.strike, params.r, vol, tau)
    # 两次及以上切换的质量归一化掉
    return float((value + np.sum(dens * switched)) / (stay + np.sum(dens)))


def _check_bounds(price: float, spot: float, strike: float, r: float, tau: float, tol: float):
    low, high = put_bounds(spot, strike, r, tau)
    if price < low - tol or price > high + tol:
        raise ConsistencyError(
            f"特征函数价格 {price:.8f} 超出无模型界 [{low:.8f}, {high:.8f}]，请检查积分配置",
            value=price, low=float(low), high=float(high),
        )


def put_price_cf(state: MarketState, spec: OptionSpec, params: BsmRsParams,
                 quad: QuadratureConfig | None = None) -> PriceResult:
    """体制转换 BSM 欧式看跌期权的特征函数解。"""
    quad = quad or QuadratureConfig()
    tau = state.tau(spec)
    if tau == 0:
        return PriceResult(float(put_payoff(state.spot, spec.strike)), state.regime, method="cf")

    args = _kernel_args(state, spec, params)
    if tau <= quad.short_tau and quad.eta_max is None:
        price = short_maturity_put(state, spec, params)
        _check_bounds(price, state.spot, spec.strike, params.r, tau, quad.bound_tol)
        logger.debug("CF 定价（短期限展开）: S=%.4f tau=%.2e regime=%d → %.8f",
                     state.spot, tau, state.regime, price)
        return PriceResult(price, state.regime, method="cf")

    decay = min(params.sigma[0], params.sigma[1]) ** 2 * tau
    quad = quad.with_decay(decay)

    p1 = prob_below(lambda e: _f1_kernel(e, *args), spec.strike, quad)
    p2 = prob_below(lambda e: _f2_kernel(e, *args), spec.strike, quad)
    price = math.exp(-params.r * tau) * spec.strike * p1 - state.spot * p2
    _check_bounds(price, state.spot, spec.strike, params.r, tau, quad.bound_tol)
    logger.debug("CF 定价: S=%.4f tau=%.4f regime=%d → %.8f (P1=%.8f, P2=%.8f)",
                 state.spot, tau, state.regime, price, p1, p2)
    return PriceResult(price, state.regime, method="cf")


def put_price_cf_batch(spots, taus, regimes, r, sigma1, sigma2, lambda12: float, lambda21: float,
                       strike: float, quad: QuadratureConfig | None = None,
                       chunk: int = 256) -> np.ndarray:
    """固定节点 Gauss-Legendre 的批量定价，所有参数按点广播。

    违反无模型界的点只记录警告数量，不抛出异常（评估场景中逐点报告误差）。
    """
    quad = quad or QuadratureConfig(scheme="gauss-legendre")
    spots, taus, regimes, r, sigma1, sigma2 = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (spots, taus, regimes, r, sigma1, sigma2))
    )
    prices = np.asarray(put_payoff(spots, strike), dtype=float).copy()
    live = np.flatnonzero(taus > 0)
    if np.any(spots[live] <= 0):
        raise DomainError("特征函数要求 S > 0")
    # 自动截断触顶或 τ ≤ short_tau 的点固定节点分辨不了被积函数，改走逐点定价
    capped = np.zeros(0, dtype=np.int64)
    if quad.eta_max is None:
        decay_all = np.minimum(sigma1[live], sigma2[live]) ** 2 * taus[live]
        with np.errstate(divide="ignore"):
            auto = np.sqrt(2.0 * math.log(1.0 / quad.tol) / decay_all) + 10.0
        scalar = (auto >= quad.eta_cap) | (taus[live] <= quad.short_tau)
        capped = live[scalar]
        live = live[~scalar]

    nodes, weights = np.polynomial.legendre.leggauss(quad.nodes)
    log_k = math.log(strike)
    start_ts = time.time()
    for lo in range(0, live.size, chunk):
        idx = live[lo:lo + chunk]
        tau = taus[idx]
        rr = r[idx]
        y = np.log(spots[idx])
        s1sq, s2sq = sigma1[idx] ** 2, sigma2[idx] ** 2
        col = (regimes[idx] - 1).astype(np.int64)
        if quad.eta_max is not None:
            eta_max = np.full(idx.size, quad.eta_max)
        else:
            decay = np.minimum(s1sq, s2sq) * tau
            eta_max = np.minimum(np.sqrt(2.0 * math.log(1.0 / quad.tol) / decay) + 10.0, quad.eta_cap)
        eta = 0.5 * eta_max[None, :] * (nodes[:, None] + 1.0)          # (K, B)
        w = 0.5 * eta_max[None, :] * weights[:, None]
        args = (y, tau, rr, s1sq, s2sq, lambda12, lambda21, col)
        phase = np.exp(-1j * eta * log_k)
        p1 = 0.5 - np.sum(w * np.imag(phase * _f1_kernel(eta, *args)) / eta, axis=0) / math.pi
        p2 = 0.5 - np.sum(w * np.imag(phase * _f2_kernel(eta, *args)) / eta, axis=0) / math.pi
        prices[idx] = np.exp(-rr * tau) * strike * p1 - spots[idx] * p2

    failed = 0
    scalar_quad = replace(quad, scheme="adaptive")
    for i in capped:
        params = BsmRsParams(float(r[i]), (float(sigma1[i]), float(sigma2[i])), lambda12, lambda21)
        state = MarketState(0.0, float(spots[i]), int(regimes[i]))
        try:
            prices[i] = put_price_cf(state, OptionSpec(strike, float(taus[i])), params, scalar_quad).value
        except (QuadratureError, ConsistencyError):
            prices[i] = np.nan
            failed += 1
    if failed:
        logger.warning("批量 CF 定价: %d 个短期限点积分未收敛，记为 NaN", failed)

    low, high = put_bounds(spots, strike, r, taus)
    with np.errstate(invalid="ignore"):
        bad = int(np.sum((prices < low - quad.bound_tol) | (prices > high + quad.bound_tol)))
    if bad:
        logger.warning("批量 CF 定价: %d 个点超出无模型界", bad)
    logger.info("批量 CF 定价完成: n=%d | %.2fs", spots.size, time.time() - start_ts)
    return prices
