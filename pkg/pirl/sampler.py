"""
训练集采样 - 内部点 X_A、到期面 X_T、下边界 X_low

每行的前 d 列是网络输入（列序见 pirl.net），Heston 额外带一列 rho：
它进入 PDE 残差，但不作为网络输入。
"""

import logging
import pathlib
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from pirl.net import input_columns
from utils.common import ShapeError, ValidationError

logger = logging.getLogger("regime-pricer")

SET_NAMES = ("inner", "terminal", "lower")


@dataclass(frozen=True)
class RangeSpec:
    bounds: dict

    def __post_init__(self):
        for name, (lo, hi) in self.bounds.items():
            if not lo <= hi:
                raise ValidationError(f"采样区间 {name} 非法: [{lo}, {hi}]")

    def __getitem__(self, name: str) -> tuple[float, float]:
        return self.bounds[name]


# sigma2 的下界随 sigma1 变化（σ₂ ∈ [σ₁, 0.40]），此处只记录上界
BSM_SAMPLE_RANGES = RangeSpec({
    "T": (0.0, 4.0), "S": (40.0, 100.0), "r": (0.01, 0.025),
    "sigma1": (0.10, 0.30), "sigma2": (0.10, 0.40),
})
HESTON_SAMPLE_RANGES = RangeSpec({
    "T": (0.0, 4.0), "S": (40.0, 100.0), "v": (0.01, 0.1), "r": (0.015, 0.025),
    "kappa": (1.4, 2.6), "gamma": (0.01, 0.1), "rho": (-0.85, -0.55),
    "sigma1": (0.1, 0.45), "sigma2": (0.35, 0.75),
})


def sample_columns(model: str) -> tuple[str, ...]:
    cols = input_columns(model)
    return cols + ("rho",) if model == "heston-rs" else cols


@dataclass(frozen=True)
class SampleSets:
    model: str
    inner: np.ndarray
    terminal: np.ndarray
    lower: np.ndarray

    def __post_init__(self):
        width = len(sample_columns(self.model))
        for name in SET_NAMES:
            arr = getattr(self, name)
            if arr.ndim != 2 or arr.shape[1] != width:
                raise ShapeError(f"{name} 集合应为 (N, {width})，收到 {arr.shape}")

    @property
    def columns(self) -> tuple[str, ...]:
        return sample_columns(self.model)

    @property
    def input_dim(self) -> int:
        return len(input_columns(self.model))

    def sizes(self) -> tuple[int, int, int]:
        return tuple(len(getattr(self, n)) for n in SET_NAMES)

    def column(self, set_name: str, name: str) -> np.ndarray:
        return getattr(self, set_name)[:, self.columns.index(name)]

    def inputs(self, set_name: str) -> np.ndarray:
        return getattr(self, set_name)[:, :self.input_dim]


def _times(rng: np.random.Generator, n: int, t_max: float, kind: str) -> tuple[np.ndarray, np.ndarray]:
    # T ∈ (0, t_max]，内部点 t ∈ [0, T) 保证 t < T
    maturity = t_max - rng.uniform(0.0, t_max, n)
    if kind == "terminal":
        return maturity.copy(), maturity
    return maturity * rng.uniform(0.0, 1.0, n), maturity


def _spots(rng: np.random.Generator, n: int, bounds: tuple[float, float], kind: str) -> np.ndarray:
    draw = rng.uniform(*bounds, n)
    return np.zeros(n) if kind == "lower" else draw


def _draw_bsm(rng: np.random.Generator, n: int, kind: str, ranges: RangeSpec) -> np.ndarray:
    t, maturity = _times(rng, n, ranges["T"][1], kind)
    spot = _spots(rng, n, ranges["S"], kind)
    r = rng.uniform(*ranges["r"], n)
    sigma1 = rng.uniform(*ranges["sigma1"], n)
    sigma2 = rng.uniform(sigma1, ranges["sigma2"][1])
    return np.column_stack([t, maturity, spot, r, sigma1, sigma2])


def _draw_heston(rng: np.random.Generator, n: int, kind: str, ranges: RangeSpec) -> np.ndarray:
    t, maturity = _times(rng, n, ranges["T"][1], kind)
    spot = _spots(rng, n, ranges["S"], kind)
    cols = [rng.uniform(*ranges[name], n) for name in ("v", "r", "kappa", "gamma", "sigma1", "sigma2", "rho")]
    return np.column_stack([t, maturity, spot, *cols])


def sample_sets(model: str, seed: int, n_inner: int, n_terminal: int, n_lower: int,
                ranges: Optional[RangeSpec] = None) -> SampleSets:
    """按 (inner, terminal, lower) 的固定顺序从同一个种子流抽样。"""
    if min(n_inner, n_terminal, n_lower) < 0:
        raise ValidationError("样本数量必须非负")
    if model == "bsm-rs":
        draw, ranges = _draw_bsm, ranges or BSM_SAMPLE_RANGES
    elif model == "heston-rs":
        draw, ranges = _draw_heston, ranges or HESTON_SAMPLE_RANGES
    else:
        raise ValidationError(f"未知模型: {model!r}")
    rng = np.random.default_rng(int(seed))
    sets = SampleSets(
        model,
        inner=draw(rng, n_inner, "inner", ranges),
        terminal=draw(rng, n_terminal, "terminal", ranges),
        lower=draw(rng, n_lower, "lower", ranges),
    )
    logger.info("采样完成: model=%s seed=%d sizes=%s", model, seed, sets.sizes())
    return sets


def sample_bsm(seed: int, n_inner: int = 20000, n_terminal: int = 5000, n_lower: int = 5000) -> SampleSets:
    return sample_sets("bsm-rs", seed, n_inner, n_terminal, n_lower)


def sample_heston(seed: int, n_inner: int = 30000, n_terminal: int = 10000, n_lower: int = 10000) -> SampleSets:
    return sample_sets("heston-rs", seed, n_inner, n_terminal, n_lower)


def held_out_sizes(sizes: tuple[int, int, int], n_total: int) -> tuple[int, int, int]:
    """按训练集比例把 n_total 个测试点分到三个集合。"""
    total = sum(sizes)
    if total == 0:
        raise ValidationError("训练集为空，无法确定测试集比例")
    inner = n_total * sizes[0] // total
    terminal = n_total * sizes[1] // total
    return inner, terminal, n_total - inner - terminal


# ---------------------------------------------------------------------------
# CSV 导出
# ---------------------------------------------------------------------------
def write_sets_csv(sets: SampleSets, directory) -> list[pathlib.Path]:
    """每个集合一个 CSV，表头为列名。"""
    directory = pathlib.Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in SET_NAMES:
        path = directory / f"{sets.model}_{name}.csv"
        pd.DataFrame(getattr(sets, name), columns=list(sets.columns)).to_csv(path, index=False)
        paths.append(path)
    logger.info("样本集已导出: %s", ", ".join(str(p) for p in paths))
    return paths


def read_sets_csv(model: str, directory) -> SampleSets:
    directory = pathlib.Path(directory)
    cols = list(sample_columns(model))
    arrays = {}
    for name in SET_NAMES:
        frame = pd.read_csv(directory / f"{model}_{name}.csv")
        if list(frame.columns) != cols:
            raise ShapeError(f"{name} 集合列名不符: {list(frame.columns)}")
        arrays[name] = frame.to_numpy(dtype=np.float64)
    return SampleSets(model, **arrays)
