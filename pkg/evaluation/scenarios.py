"""
评估场景 - 训练好的网络与特征函数解 / 蒙特卡洛解的逐点比较

BSM 场景以 put_price_cf 为真值，Heston 场景以蒙特卡洛为真值并统计 98% 置信带覆盖率。
"""

import json
import logging
import pathlib
import time
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from evaluation.metrics import error_table
from pirl.net import ResidualNet, load_model, predict
from pirl.sampler import sample_sets
from pricing.cf_pricer import QuadratureConfig, put_price_cf, put_price_cf_batch
from pricing.core import (
    BsmRsParams,
    HestonRsParams,
    MarketState,
    OptionSpec,
    bs_put_closed_form,
    put_payoff,
)
from pricing.mc_pricer import McConfig, heston_rs_put_mc_curve
from utils.common import ConsistencyError, ModelFileError, QuadratureError, ValidationError

logger = logging.getLogger("regime-pricer")

BSM_SCENARIOS = ("terminal", "tau1-grid", "random-25000")
HESTON_SCENARIOS = ("heston-itm-atm-otm", "heston-no-rs")
SCENARIOS = BSM_SCENARIOS + HESTON_SCENARIOS

# 计时用的逐点自适应积分样本数
_TIMING_POINTS = 50


@dataclass
class ScenarioResult:
    scenario: str
    points: pd.DataFrame
    summary: pd.DataFrame
    extra: dict = field(default_factory=dict)

    def summary_records(self) -> list[dict]:
        return [{"scenario": self.scenario, **row} for row in self.summary.to_dict(orient="records")]

    def write(self, out_dir) -> list[pathlib.Path]:
        """写出逐点 CSV、汇总 CSV 和汇总 JSON。"""
        out_dir = pathlib.Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        points_path = out_dir / f"{self.scenario}_points.csv"
        summary_path = out_dir / f"{self.scenario}_summary.csv"
        json_path = out_dir / f"{self.scenario}_summary.json"
        self.points.to_csv(points_path, index=False)
        self.summary.to_csv(summary_path, index=False)
        json_path.write_text(json.dumps(
            {"scenario": self.scenario, "summary": self.summary_records(), **self.extra},
            ensure_ascii=False, indent=2,
        ), encoding="utf-8")
        return [points_path, summary_path, json_path]


def _load_for(model_file, model: str) -> ResidualNet:
    net = load_model(model_file)
    if net.arch.model != model:
        raise ValidationError(f"场景需要 {model} 模型，模型文件为 {net.arch.model}")
    return net


def _meta(net: ResidualNet, key: str) -> float:
    if key not in net.meta:
        raise ModelFileError(f"模型文件缺少训练常量 {key}")
    return float(net.meta[key])


def _long_format(base: pd.DataFrame, pirl: np.ndarray, oracle: np.ndarray) -> pd.DataFrame:
    """(N, 2) 的价格对展开为每个体制一行。"""
    frames = []
    for regime in (1, 2):
        frame = base.copy()
        frame["regime"] = regime
        frame["pirl"] = pirl[:, regime - 1]
        frame["oracle"] = oracle[:, regime - 1]
        frames.append(frame)
    out = pd.concat(frames, ignore_index=True)
    out["abs_err"] = (out["pirl"] - out["oracle"]).abs()
    return out


# ---------------------------------------------------------------------------
# BSM 场景
# ---------------------------------------------------------------------------
def eval_bsm_scenario(model_file, scenario: str, section: dict, quad: QuadratureConfig,
                      seed: int) -> ScenarioResult:
    if scenario not in BSM_SCENARIOS:
        raise ValidationError(f"未知 BSM 场景: {scenario!r}，可选 {', '.join(BSM_SCENARIOS)}")
    net = _load_for(model_file, "bsm-rs")
    strike = _meta(net, "strike")
    l12, l21 = _meta(net, "lambda12"), _meta(net, "lambda21")
    r, s1, s2 = float(section["r"]), float(section["sigma1"]), float(section["sigma2"])
    params = BsmRsParams(r, (s1, s2), l12, l21)
    start_ts = time.time()
    extra: dict = {}

    if scenario == "random-25000":
        x = sample_sets("bsm-rs", seed, int(section["n_random"]), 0, 0).inner
        base = pd.DataFrame(x, columns=["t", "T", "S", "r", "sigma1", "sigma2"])
        tau = x[:, 1] - x[:, 0]

        pirl_ts = time.perf_counter()
        pirl = predict(net, x)
        pirl_per_point = (time.perf_counter() - pirl_ts) / len(x)

        batch_quad = replace(quad, scheme="gauss-legendre")
        oracle = np.column_stack([
            put_price_cf_batch(x[:, 2], tau, regime, x[:, 3], x[:, 4], x[:, 5], l12, l21,
                               strike, batch_quad)
            for regime in (1, 2)
        ])
        extra["timing"] = _time_cf(x, l12, l21, strike, quad, pirl_per_point)
    else:
        spots = np.linspace(float(section["spot_min"]), float(section["spot_max"]), int(section["n_grid"]))
        maturity = 1.0
        t = maturity if scenario == "terminal" else 0.0
        x = np.column_stack([
            np.full_like(spots, t), np.full_like(spots, maturity), spots,
            np.full_like(spots, r), np.full_like(spots, s1), np.full_like(spots, s2),
        ])
        base = pd.DataFrame(x, columns=["t", "T", "S", "r", "sigma1", "sigma2"])
        pirl = predict(net, x)
        if scenario == "terminal":
            payoff = put_payoff(spots, strike)
            oracle = np.column_stack([payoff, payoff])
        else:
            spec = OptionSpec(strike, maturity)
            oracle = np.array([
                [_cf_or_nan(MarketState(0.0, float(s), regime), spec, params, quad) for regime in (1, 2)]
                for s in spots
            ])

    points = _long_format(base, pirl, oracle)
    points.insert(0, "scenario", scenario)
    if scenario == "tau1-grid" and l12 == 0 and l21 == 0:
        # 无转移时每个体制退化为常数波动率的 Black-Scholes
        sig = np.where(points["regime"] == 1, s1, s2)
        points["closed_form"] = bs_put_closed_form(points["S"].to_numpy(), strike, r, sig, 1.0)

    summary = error_table(points, ["regime"])
    logger.info("场景 %s 完成: n=%d | %.1fs", scenario, len(points), time.time() - start_ts)
    for row in summary.itertuples():
        logger.info("  regime=%d | MAE=%.4e | MSE=%.4e", row.regime, row.mae, row.mse)
    return ScenarioResult(scenario, points, summary, extra)


def _cf_or_nan(state: MarketState, spec: OptionSpec, params: BsmRsParams, quad: QuadratureConfig) -> float:
    try:
        return put_price_cf(state, spec, params, quad).value
    except (QuadratureError, ConsistencyError) as e:
        logger.warning("CF 积分未收敛，跳过该点: S=%.2f regime=%d (%s)", state.spot, state.regime, e)
        return float("nan")


def _time_cf(x: np.ndarray, l12: float, l21: float, strike: float, quad: QuadratureConfig,
             pirl_per_point: float) -> dict:
    """逐点自适应积分的单点耗时，与网络推理的单点耗时比较。"""
    n = min(_TIMING_POINTS, len(x))
    start = time.perf_counter()
    for row in x[:n]:
        params = BsmRsParams(row[3], (row[4], row[5]), l12, l21)
        _cf_or_nan(MarketState(row[0], row[2], 1), OptionSpec(strike, row[1]), params, quad)
    cf_per_point = (time.perf_counter() - start) / max(n, 1)
    speedup = cf_per_point / pirl_per_point if pirl_per_point > 0 else float("inf")
    logger.info("推理耗时: PIRL %.3e s/点 | CF %.3e s/点 | 加速比 %.0fx", pirl_per_point, cf_per_point, speedup)
    return {"pirl_seconds_per_point": pirl_per_point, "cf_seconds_per_point": cf_per_point,
            "speedup": speedup, "timed_cf_points": n}


# ---------------------------------------------------------------------------
# Heston 场景
# ---------------------------------------------------------------------------
def eval_heston_scenario(model_file, scenario: str, section: dict, mc_cfg: McConfig) -> ScenarioResult:
    if scenario not in HESTON_SCENARIOS:
        raise ValidationError(f"未知 Heston 场景: {scenario!r}，可选 {', '.join(HESTON_SCENARIOS)}")
    net = _load_for(model_file, "heston-rs")
    strike = _meta(net, "strike")
    if scenario == "heston-no-rs":
        sig1 = sig2 = float(section["no_rs_sigma"])
    else:
        sig1, sig2 = float(section["sigma1"]), float(section["sigma2"])
    params = HestonRsParams(
        float(section["r"]), float(section["kappa"]), float(section["gamma"]), float(section["rho"]),
        (sig1, sig2), _meta(net, "lambda12"), _meta(net, "lambda21"),
    )
    v0 = float(section["v0"])
    maturities = np.asarray(section["maturities"], dtype=float)
    start_ts = time.time()

    frames = []
    for moneyness, spot in section["spots"].items():
        x = np.column_stack([
            np.zeros_like(maturities), maturities, np.full_like(maturities, float(spot)),
            np.full_like(maturities, v0), np.full_like(maturities, params.r),
            np.full_like(maturities, params.kappa), np.full_like(maturities, params.gamma),
            np.full_like(maturities, sig1), np.full_like(maturities, sig2),
        ])
        pirl = predict(net, x)
        for regime in (1, 2):
            state = MarketState(0.0, float(spot), regime, variance=v0)
            estimates = heston_rs_put_mc_curve(state, strike, maturities.tolist(), params, mc_cfg)
            low, high = zip(*(e.ci98 for e in estimates))
            frames.append(pd.DataFrame({
                "scenario": scenario, "moneyness": moneyness, "S": float(spot), "v": v0,
                "regime": regime, "T": maturities, "pirl": pirl[:, regime - 1],
                "oracle": [e.mean for e in estimates], "std_error": [e.std_error for e in estimates],
                "ci_low": low, "ci_high": high,
            }))

    points = pd.concat(frames, ignore_index=True)
    points["abs_err"] = (points["pirl"] - points["oracle"]).abs()
    points["in_ci"] = (points["pirl"] >= points["ci_low"]) & (points["pirl"] <= points["ci_high"])

    summary = error_table(points, ["moneyness", "regime"])
    coverage = points.groupby(["moneyness", "regime"], sort=False)["in_ci"].mean().reset_index(name="ci_rate")
    summary = summary.merge(coverage, on=["moneyness", "regime"], how="left")
    logger.info("场景 %s 完成: n=%d | %.1fs", scenario, len(points), time.time() - start_ts)
    for row in summary.itertuples():
        logger.info("  %s regime=%d | MAE=%.4e | MSE=%.4e | CI 覆盖率=%.2f",
                    row.moneyness, row.regime, row.mae, row.mse, row.ci_rate)
    return ScenarioResult(scenario, points, summary, {"ci_rate": float(points["in_ci"].mean())})
