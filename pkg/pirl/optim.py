"""
L-BFGS 优化器 - 两循环递推求搜索方向，scipy 的强 Wolfe 线搜索确定步长

只接受满足强 Wolfe 条件的步长，因此被接受的代价序列单调不增。
线搜索失败不抛异常，而是返回目前最优点并记录终止原因。
"""

import collections
import logging
import math
import pathlib
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.optimize import line_search

from utils.common import DivergedError, ValidationError

logger = logging.getLogger("regime-pricer")

# 终止原因
GRAD_TOL = "grad_tol"
MAX_ITER = "max_iter"
LINE_SEARCH = "line_search_failed"

# s·y 低于该相对阈值时跳过更新，保持 H 正定
_CURVATURE_EPS = 1.0e-10


@dataclass(frozen=True)
class LbfgsConfig:
    history: int = 10
    max_iter: int = 2000
    grad_tol: float = 1.0e-7
    c1: float = 1.0e-4
    c2: float = 0.9
    max_trials: int = 25
    log_every: int = 50

    def __post_init__(self):
        if self.history < 1:
            raise ValidationError("L-BFGS history 必须 ≥ 1")
        if not 0 < self.c1 < self.c2 < 1:
            raise ValidationError("线搜索参数需满足 0 < c1 < c2 < 1")
        if self.max_iter < 0:
            raise ValidationError("max_iter 必须非负")
        if self.max_trials < 1:
            raise ValidationError("max_trials 必须 ≥ 1")

    @classmethod
    def from_config(cls, section: dict, **overrides) -> "LbfgsConfig":
        values = {k: section[k] for k in ("history", "max_iter", "grad_tol", "c1", "c2",
                                          "max_trials", "log_every")}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass
class TrainReport:
    rows: list[dict] = field(default_factory=list)
    termination: str = ""
    elapsed: float = 0.0
    n_evals: int = 0

    @property
    def iterations(self) -> int:
        return max(len(self.rows) - 1, 0)

    def final(self) -> dict:
        return self.rows[-1] if self.rows else {}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)

    def to_csv(self, path) -> pathlib.Path:
        path = pathlib.Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path


def two_loop_direction(grad: np.ndarray, s_list: Sequence[np.ndarray], y_list: Sequence[np.ndarray],
                       h0: Optional[float] = None) -> np.ndarray:
    """两循环递推计算 H·grad，s_list / y_list 按时间从旧到新排列。

    初始矩阵 H₀ = h0·I；h0 缺省时取最新一对的 sᵀy / yᵀy。
    """
    q = np.array(grad, dtype=float, copy=True)
    if not s_list:
        return q if h0 is None else h0 * q
    rhos = [1.0 / float(y @ s) for s, y in zip(s_list, y_list)]
    alphas = []
    for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rhos)):
        a = rho * float(s @ q)
        q -= a * y
        alphas.append(a)
    if h0 is None:
        h0 = float(s_list[-1] @ y_list[-1]) / float(y_list[-1] @ y_list[-1])
    r = h0 * q
    for s, y, rho, a in zip(s_list, y_list, rhos, reversed(alphas)):
        b = rho * float(y @ r)
        r += (a - b) * s
    return r


class _Evaluator:
    """按参数字节缓存 (f, g, info)，让线搜索与主循环共享同一次求值。"""

    def __init__(self, fun: Callable):
        self.fun = fun
        self.cache: dict[bytes, tuple] = {}
        self.n_evals = 0
        self.diverged: DivergedError | None = None

    def __call__(self, x: np.ndarray) -> tuple[float, np.ndarray, dict]:
        key = x.tobytes()
        if key not in self.cache:
            out = self.fun(x)
            f, g = float(out[0]), np.asarray(out[1], dtype=float)
            info = dict(out[2]) if len(out) > 2 else {}
            self.cache[key] = (f, g, info)
            self.n_evals += 1
        return self.cache[key]

    def trial(self, x: np.ndarray) -> tuple[float, np.ndarray, dict]:
        """线搜索试探点：发散记为 +inf，让线搜索缩短步长。"""
        try:
            return self(x)
        except DivergedError as e:
            self.diverged = e
            out = (math.inf, np.full(x.shape, np.nan), {})
            self.cache[x.tobytes()] = out
            return out

    def value(self, x: np.ndarray) -> float:
        return self.trial(x)[0]

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self.trial(x)[1]

    def keep_only(self, x: np.ndarray):
        key = x.tobytes()
        self.cache = {key: self.cache[key]} if key in self.cache else {}


def minimize(fun: Callable, x0: np.ndarray, cfg: LbfgsConfig) -> tuple[np.ndarray, TrainReport]:
    """
    fun(θ) 返回 (代价, 梯度) 或 (代价, 梯度, 分量字典)。

    代价出现非有限值时 fun 应抛出 DivergedError；这里会把最后一个被接受的
    参数向量挂到异常的 last_good 上再继续抛出。
    """
    start_ts = time.time()
    evaluate = _Evaluator(fun)
    report = TrainReport()
    x = np.array(x0, dtype=float, copy=True)

    f, g, info = evaluate(x)
    if not math.isfinite(f):
        raise DivergedError("初始代价非有限", component="total", last_good=x.copy())

    def record(it: int, step: float):
        row = {"iteration": it, "total": f, **{k: v for k, v in info.items() if k != "total"},
               "grad_norm": float(np.linalg.norm(g)), "step": step}
        report.rows.append(row)
        if cfg.log_every and (it % cfg.log_every == 0):
            logger.info("L-BFGS iter=%d | cost=%.6e | |g|=%.3e | step=%.3e",
                        it, f, row["grad_norm"], step)

    record(0, 0.0)
    s_hist: collections.deque = collections.deque(maxlen=cfg.history)
    y_hist: collections.deque = collections.deque(maxlen=cfg.history)
    report.termination = MAX_ITER

    try:
        for it in range(1, cfg.max_iter + 1):
            if np.linalg.norm(g) <= cfg.grad_tol:
                report.termination = GRAD_TOL
                break
            if s_hist:
                d = -two_loop_direction(g, list(s_hist), list(y_hist))
            else:
                # 无曲率信息时的首步：按梯度范数缩放的最速下降
                d = -g / max(1.0, float(np.linalg.norm(g)))
            evaluate.diverged = None
            if float(g @ d) >= 0:
                s_hist.clear()
                y_hist.clear()
                d = -g / max(1.0, float(np.linalg.norm(g)))

            alpha, *_ = line_search(
                evaluate.value, evaluate.grad, x, d, gfk=g, old_fval=f,
                c1=cfg.c1, c2=cfg.c2, maxiter=cfg.max_trials,
            )
            if alpha is None:
                if s_hist:
                    # 丢弃历史后用最速下降再试一次
                    s_hist.clear()
                    y_hist.clear()
                    d = -g / max(1.0, float(np.linalg.norm(g)))
                    alpha, *_ = line_search(
                        evaluate.value, evaluate.grad, x, d, gfk=g, old_fval=f,
                        c1=cfg.c1, c2=cfg.c2, maxiter=cfg.max_trials,
                    )
                if alpha is None and evaluate.diverged is not None:
                    # 所有试探步都发散：无法继续下降
                    raise evaluate.diverged
                if alpha is None:
                    report.termination = LINE_SEARCH
                    logger.warning("线搜索失败，返回当前最优点: iter=%d cost=%.6e", it, f)
                    break

            x_new = x + alpha * d
            f_new, g_new, info_new = evaluate(x_new)
            if not math.isfinite(f_new):
                raise evaluate.diverged or DivergedError("接受的步长给出非有限代价", component="total")
            s, y = x_new - x, g_new - g
            if float(s @ y) > _CURVATURE_EPS * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
                s_hist.append(s)
                y_hist.append(y)
            x, f, g, info = x_new, f_new, g_new, info_new
            evaluate.keep_only(x)
            record(it, float(alpha))
        else:
            if np.linalg.norm(g) <= cfg.grad_tol:
                report.termination = GRAD_TOL
    except DivergedError as e:
        e.last_good = x.copy()
        raise

    report.elapsed = time.time() - start_ts
    report.n_evals = evaluate.n_evals
    logger.info("L-BFGS 结束: iters=%d | cost=%.6e | |g|=%.3e | reason=%s | evals=%d | %.1fs",
                report.iterations, f, float(np.linalg.norm(g)), report.termination,
                report.n_evals, report.elapsed)
    return x, report
