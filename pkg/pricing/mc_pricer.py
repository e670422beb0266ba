"""
蒙特卡洛定价 - 体制转换 Heston（Euler-Maruyama）与体制转换 BSM（按体制路径条件精确抽样）

路径按 batch 划分，每个 batch 由 (seed, batch_index) 派生独立随机流；
batch 的划分只取决于 batch_size，与线程数无关，归约用 math.fsum，
因此结果与 --threads 无关。
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from pricing import ctmc
from pricing.core import (
    Z_98,
    BsmRsParams,
    HestonRsParams,
    MarketState,
    OptionSpec,
    PriceResult,
    put_payoff,
)
from utils.common import DomainError, ValidationError

logger = logging.getLogger("regime-pricer")

SCHEMES = ("full_truncation", "diffusion_floor")


# ---------------------------------------------------------------------------
# 配置与估计量
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class McConfig:
    n_paths: int = 100000
    n_steps: int = 250          # 每年步数
    seed: int = 0
    antithetic: bool = False
    batch_size: int = 50000
    scheme: str = "full_truncation"
    workers: int = 1

    def __post_init__(self):
        if self.n_paths < 2:
            raise ValidationError("n_paths 必须 ≥ 2")
        if self.n_steps < 1:
            raise ValidationError("n_steps 必须 ≥ 1")
        if self.batch_size < 2:
            raise ValidationError("batch_size 必须 ≥ 2")
        if self.scheme not in SCHEMES:
            raise ValidationError(f"未知 Euler 方案: {self.scheme}")
        if self.antithetic and (self.n_paths % 2 or self.batch_size % 2):
            raise ValidationError("对偶变量要求 n_paths 与 batch_size 为偶数")

    @classmethod
    def from_config(cls, section: dict, seed: int, workers: int = 1, **overrides) -> "McConfig":
        values = {
            "n_paths": int(section["n_paths"]),
            "n_steps": int(section["n_steps"]),
            "antithetic": bool(section["antithetic"]),
            "batch_size": int(section["batch_size"]),
            "scheme": section["scheme"],
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(seed=seed, workers=max(1, workers), **values)


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_paths: int

    @property
    def ci98(self) -> tuple[float, float]:
        return self.mean - Z_98 * self.std_error, self.mean + Z_98 * self.std_error

    def to_result(self, regime: int, method: str = "mc") -> PriceResult:
        return PriceResult(self.mean, regime, std_error=self.std_error, ci98=self.ci98, method=method)


# ---------------------------------------------------------------------------
# batch 调度与归约
# ---------------------------------------------------------------------------
def _batch_sizes(cfg: McConfig) -> list[int]:
    full, rest = divmod(cfg.n_paths, cfg.batch_size)
    sizes = [cfg.batch_size] * full
    if rest:
        sizes.append(rest)
    return sizes


def _batch_rng(seed: int, batch_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, batch_index])


def _run_batches(cfg: McConfig, kernel: Callable[[int, np.random.Generator], np.ndarray]) -> list[np.ndarray]:
    """kernel(n, rng) 返回长度为 n 的贴现收益（或 (n, m) 的矩阵）。"""
    sizes = _batch_sizes(cfg)
    jobs = [(n, _batch_rng(cfg.seed, i)) for i, n in enumerate(sizes)]
    if cfg.workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(lambda job: kernel(*job), jobs))
    return [kernel(n, rng) for n, rng in jobs]


def _pair_up(samples: np.ndarray, antithetic: bool) -> np.ndarray:
    # 对偶路径按前后两半配对，取配对均值作为独立样本
    if not antithetic:
        return samples
    half = samples.shape[0] // 2
    return 0.5 * (samples[:half] + samples[half:])


def _reduce(batches: Sequence[np.ndarray], antithetic: bool) -> McEstimate | list[McEstimate]:
    """补偿求和的均值 / 方差，按列返回（一维输入视为单列）。"""
    paired = [_pair_up(b.reshape(b.shape[0], -1), antithetic) for b in batches]
    count = sum(p.shape[0] for p in paired)
    n_cols = paired[0].shape[1]
    estimates = []
    for j in range(n_cols):
        mean = math.fsum(math.fsum(p[:, j].tolist()) for p in paired) / count
        sq = math.fsum(math.fsum(((p[:, j] - mean) ** 2).tolist()) for p in paired)
        var = sq / (count - 1) if count > 1 else 0.0
        estimates.append(McEstimate(mean, math.sqrt(var / count), count))
    return estimates if n_cols > 1 else estimates[0]


def _normals(rng: np.random.Generator, shape: tuple, antithetic: bool) -> np.ndarray:
    if not antithetic:
        return rng.standard_normal(shape)
    half = rng.standard_normal((shape[0] // 2,) + shape[1:])
    return np.concatenate([half, -half], axis=0)


def _steps_for(tau: float, per_year: int) -> int:
    return max(1, int(math.ceil(per_year * tau - 1e-12)))


# ---------------------------------------------------------------------------
# 体制转换 BSM：条件精确抽样
# ---------------------------------------------------------------------------
def bsm_rs_put_mc(state: MarketState, spec: OptionSpec, params: BsmRsParams, cfg: McConfig) -> McEstimate:
    """给定体制路径后 log S_T 为正态：均值 log S + rτ - ½∫σ²，方差 ∫σ²。"""
    if not state.spot > 0:
        raise DomainError("蒙特卡洛定价要求 S > 0")
    tau = state.tau(spec)
    if tau == 0:
        return McEstimate(float(put_payoff(state.spot, spec.strike)), 0.0, cfg.n_paths)

    gen = ctmc.Generator(params.lambda12, params.lambda21)
    s1sq, s2sq = params.sigma[0] ** 2, params.sigma[1] ** 2
    disc = math.exp(-params.r * tau)
    log_s = math.log(state.spot)

    def kernel(n: int, rng: np.random.Generator) -> np.ndarray:
        pairs = n // 2 if cfg.antithetic else n
        occ1 = ctmc.simulate_occupation(gen, state.regime, tau, pairs, rng)
        if cfg.antithetic:
            occ1 = np.concatenate([occ1, occ1])
        int_var = s1sq * occ1 + s2sq * (tau - occ1)
        z = _normals(rng, (n,), cfg.antithetic)
        log_st = log_s + params.r * tau - 0.5 * int_var + np.sqrt(int_var) * z
        return disc * put_payoff(np.exp(log_st), spec.strike)

    start_ts = time.time()
    est = _reduce(_run_batches(cfg, kernel), cfg.antithetic)
    logger.info("BSM-RS MC: S=%.4f tau=%.4f regime=%d → %.6f ± %.6f (N=%d) | %.2fs",
                state.spot, tau, state.regime, est.mean, est.std_error, cfg.n_paths,
                time.time() - start_ts)
    return est


# ---------------------------------------------------------------------------
# 体制转换 Heston：Euler-Maruyama
# ---------------------------------------------------------------------------
def _heston_paths(state: MarketState, params: HestonRsParams, cfg: McConfig, horizon: float,
                  n_steps: int, record: np.ndarray | None, n: int, rng: np.random.Generator):
    """模拟 n 条路径到 horizon；record 为需要记录 S 的步序号（升序）。

    返回 (S_T, 记录的 S 矩阵 (n, len(record)))。
    """
    gen = ctmc.Generator(params.lambda12, params.lambda21)
    pairs = n // 2 if cfg.antithetic else n
    regimes = ctmc.sample_on_grid(gen, state.regime, horizon, n_steps, pairs, rng)
    if cfg.antithetic:
        regimes = np.concatenate([regimes, regimes], axis=1)
    vol_of_vol = np.array([params.sigma[0], params.sigma[1]])

    dt = horizon / n_steps
    sqrt_dt = math.sqrt(dt)
    rho_c = math.sqrt(max(1.0 - params.rho ** 2, 0.0))
    s = np.full(n, float(state.spot))
    v = np.full(n, float(state.variance))
    recorded = np.empty((n, 0 if record is None else len(record)))
    pos = 0 if record is None else int(np.sum(record == 0))
    for i in range(n_steps):
        z1 = _normals(rng, (n,), cfg.antithetic)
        z2 = _normals(rng, (n,), cfg.antithetic)
        dw1 = sqrt_dt * z1
        dw2 = sqrt_dt * (params.rho * z1 + rho_c * z2)
        v_pos = np.maximum(v, 0.0)
        sqrt_v = np.sqrt(v_pos)
        drift_v = v_pos if cfg.scheme == "full_truncation" else v
        s_next = s + params.r * s * dt + sqrt_v * s * dw1
        v = v + params.kappa * (params.gamma - drift_v) * dt + vol_of_vol[regimes[i]] * sqrt_v * dw2
        s = s_next
        if record is not None:
            while pos < len(record) and record[pos] == i + 1:
                recorded[:, pos] = s
                pos += 1
    return s, recorded


def _check_heston_state(state: MarketState):
    if not state.spot > 0:
        raise DomainError("蒙特卡洛定价要求 S > 0")
    if state.variance is None:
        raise ValidationError("Heston 模型需要初始方差 v")


def heston_rs_put_mc(state: MarketState, spec: OptionSpec, params: HestonRsParams, cfg: McConfig) -> McEstimate:
    """按每年 n_steps 步离散，体制在每步左端点冻结。"""
    _check_heston_state(state)
    tau = state.tau(spec)
    if tau == 0:
        return McEstimate(float(put_payoff(state.spot, spec.strike)), 0.0, cfg.n_paths)

    n_steps = _steps_for(tau, cfg.n_steps)
    disc = math.exp(-params.r * tau)

    def kernel(n: int, rng: np.random.Generator) -> np.ndarray:
        s_t, _ = _heston_paths(state, params, cfg, tau, n_steps, None, n, rng)
        return disc * put_payoff(s_t, spec.strike)

    start_ts = time.time()
    est = _reduce(_run_batches(cfg, kernel), cfg.antithetic)
    logger.info("Heston-RS MC: S=%.4f v=%.4f tau=%.4f regime=%d → %.6f ± %.6f (N=%d, steps=%d) | %.2fs",
                state.spot, state.variance, tau, state.regime, est.mean, est.std_error,
                cfg.n_paths, n_steps, time.time() - start_ts)
    return est


def heston_rs_put_mc_curve(state: MarketState, strike: float, maturities: Sequence[float],
                           params: HestonRsParams, cfg: McConfig) -> list[McEstimate]:
    """一组路径模拟到最长期限，在每个期限上读取价格（同一批路径给出整条期限曲线）。

    返回值与 maturities 的输入顺序一一对应。
    """
    _check_heston_state(state)
    requested = np.asarray(maturities, dtype=float)
    if requested.size == 0 or np.any(requested < 0):
        raise ValidationError("期限必须非负且非空")
    order = np.argsort(requested, kind="stable")
    taus = requested[order]
    horizon = float(taus[-1])
    if horizon == 0:
        payoff = float(put_payoff(state.spot, strike))
        return [McEstimate(payoff, 0.0, cfg.n_paths) for _ in taus]

    n_steps = _steps_for(horizon, cfg.n_steps)
    dt = horizon / n_steps
    record = np.rint(taus / dt).astype(int)
    # 期限落在 Euler 网格上，贴现按网格时刻计算
    disc = np.exp(-params.r * record * dt)

    def kernel(n: int, rng: np.random.Generator) -> np.ndarray:
        _, recorded = _heston_paths(state, params, cfg, horizon, n_steps, record, n, rng)
        out = np.empty_like(recorded)
        for j, step in enumerate(record):
            s_tau = recorded[:, j] if step > 0 else np.full(n, float(state.spot))
            out[:, j] = disc[j] * put_payoff(s_tau, strike)
        return out

    start_ts = time.time()
    ests = _reduce(_run_batches(cfg, kernel), cfg.antithetic)
    if isinstance(ests, McEstimate):
        ests = [ests]
    # 按排序后的期限模拟，结果放回调用方的顺序
    by_input: list = [None] * len(ests)
    for est, pos in zip(ests, order):
        by_input[pos] = est
    ests = by_input
    logger.info("Heston-RS MC 期限曲线: S=%.4f regime=%d, %d 个期限 (N=%d, steps=%d) | %.2fs",
                state.spot, state.regime, len(ests), cfg.n_paths, n_steps, time.time() - start_ts)
    return ests
