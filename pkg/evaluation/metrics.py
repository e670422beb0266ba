"""
误差指标 - MSE / MAE 以及按体制汇总的误差表
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from utils.common import ShapeError, ValidationError

logger = logging.getLogger("regime-pricer")


def _pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if pred.shape != truth.shape:
        raise ShapeError(f"预测与真值长度不一致: {pred.size} vs {truth.size}")
    if pred.size == 0:
        raise ValidationError("误差指标需要非空输入")
    return pred, truth


def mse(pred, truth) -> float:
    """(1/N)Σ(Vᵢ - V̂ᵢ)²"""
    pred, truth = _pair(pred, truth)
    return float(np.mean((pred - truth) ** 2))


def mae(pred, truth) -> float:
    """(1/N)Σ|Vᵢ - V̂ᵢ|"""
    pred, truth = _pair(pred, truth)
    return float(np.mean(np.abs(pred - truth)))


@dataclass(frozen=True)
class ErrorPair:
    mae: float
    mse: float
    n: int

    @classmethod
    def of(cls, pred, truth) -> "ErrorPair":
        pred, truth = _pair(pred, truth)
        return cls(mae(pred, truth), mse(pred, truth), pred.size)


def error_table(points: pd.DataFrame, group_by: list[str], pred: str = "pirl",
                truth: str = "oracle") -> pd.DataFrame:
    """按 group_by 分组计算 MAE / MSE；真值为 NaN 的点（oracle 失败）不计入。"""
    valid = points.dropna(subset=[pred, truth])
    dropped = len(points) - len(valid)
    if dropped:
        logger.warning("误差表: %d 个点缺少真值，已跳过", dropped)
    rows = []
    for key, group in valid.groupby(group_by, sort=False):
        key = key if isinstance(key, tuple) else (key,)
        pair = ErrorPair.of(group[pred], group[truth])
        rows.append({**dict(zip(group_by, key)), "mae": pair.mae, "mse": pair.mse, "n": pair.n})
    return pd.DataFrame(rows, columns=[*group_by, "mae", "mse", "n"])
