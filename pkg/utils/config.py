"""
配置加载器 - 从 config.yaml 读取并提供全局配置
"""

import copy
import logging
import pathlib
from typing import Any

import yaml

from utils.common import FileAccessError, ValidationError

logger = logging.getLogger("regime-pricer")

# ---------------------------------------------------------------------------
# 默认配置
# ---------------------------------------------------------------------------
_DEFAULT_CONFIG: dict[str, Any] = {
    "quadrature": {
        "scheme": "adaptive",   # adaptive（自适应 Gauss-Kronrod）| gauss-legendre（固定节点，可向量化）
        "tol": 1.0e-10,
        "eta_max": None,        # None → 由高斯衰减界自动确定
        "eta_cap": 1.0e4,
        "nodes": 512,
        "limit": 500,
        "max_error": 1.0e-8,    # 截断尾部界与积分误差估计的上限
        "bound_tol": 1.0e-6,
        "short_tau": 1.0e-4,    # τ 不超过该值时用至多一次切换的展开定价
    },
    "monte_carlo": {
        "n_paths": 200000,
        "n_steps": 250,         # 每年步数
        "antithetic": False,
        "batch_size": 50000,
        "scheme": "full_truncation",
    },
    "fd": {
        "n_space": 400,
        "n_time": 400,
        "s_max_factor": 4.0,
        "rannacher_steps": 2,
    },
    "lbfgs": {
        "history": 10,
        "max_iter": 2000,
        "grad_tol": 1.0e-7,
        "c1": 1.0e-4,
        "c2": 0.9,
        "max_trials": 25,
        "log_every": 50,
    },
    "training": {
        "strike": 70.0,
        "reduction": "mean",
        "weights": [1.0, 1.0, 1.0],
        "n_test": 5000,
        "bsm": {
            "n_inner": 20000,
            "n_terminal": 5000,
            "n_lower": 5000,
            "lambda12": 2.0,
            "lambda21": 1.0,
            "layers": 8,
            "width": 16,
        },
        "heston": {
            "n_inner": 30000,
            "n_terminal": 10000,
            "n_lower": 10000,
            "lambda12": 2.0,
            "lambda21": 3.0,
            "layers": 6,
            "width": 32,
        },
    },
    "evaluation": {
        "bsm": {
            "r": 0.02,
            "sigma1": 0.15,
            "sigma2": 0.35,
            "spot_min": 30.0,
            "spot_max": 110.0,
            "n_grid": 81,
            "n_random": 25000,
        },
        "heston": {
            "v0": 0.05,
            "r": 0.02,
            "kappa": 2.0,
            "gamma": 0.1,
            "rho": -0.8,
            "sigma1": 0.25,
            "sigma2": 0.5,
            "no_rs_sigma": 0.4,
            "spots": {"itm": 60.0, "atm": 70.0, "otm": 80.0},
            "maturities": [0.25 * k for k in range(1, 17)],
            "mc_paths": 200000,
            "mc_steps": 250,
        },
    },
    "runtime": {
        "threads": 0,           # 0 → 由 torch / 线程池自行决定
        "seed": 20240601,
    },
}

# 这些键的值本身是自由字典，不做逐键校验
_FREE_FORM_KEYS = {"spots"}

# ---------------------------------------------------------------------------
# 全局配置实例
# ---------------------------------------------------------------------------
_config: dict[str, Any] = {}


def _merge(base: dict, override: dict, where: str) -> dict:
    """递归合并 override 到 base；override 中出现 base 没有的键视为错误。"""
    merged = copy.deepcopy(base)
    for key, val in override.items():
        path = f"{where}.{key}" if where else key
        if key not in merged:
            raise ValidationError(f"未知配置项: {path}")
        if isinstance(merged[key], dict) and key not in _FREE_FORM_KEYS:
            if not isinstance(val, dict):
                raise ValidationError(f"配置项 {path} 应为映射")
            merged[key] = _merge(merged[key], val, path)
        else:
            merged[key] = val
    return merged


def load_config(path: str | pathlib.Path | None = None) -> dict[str, Any]:
    """加载 config.yaml，合并默认值后缓存到全局。显式给出的路径必须存在。"""
    global _config

    if path is not None and not pathlib.Path(path).exists():
        raise FileAccessError(f"配置文件不存在: {path}")
    if path is None:
        # 默认：项目根目录下的 config.yaml
        path = pathlib.Path(__file__).resolve().parent.parent / "config.yaml"
    else:
        path = pathlib.Path(path)

    cfg = copy.deepcopy(_DEFAULT_CONFIG)

    if path.exists():
        with open(path, "r", encoding="utf-8") as f:
            try:
                user_cfg = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise ValidationError(f"配置文件 {path} 不是合法的 YAML: {e}")
        if not isinstance(user_cfg, dict):
            raise ValidationError(f"配置文件 {path} 顶层必须为映射")
        cfg = _merge(cfg, user_cfg, "")
        logger.info("配置已从 %s 加载", path)
    else:
        logger.warning("配置文件 %s 不存在，使用默认配置", path)

    _config = cfg
    return _config


def get_config() -> dict[str, Any]:
    """获取已加载的配置（若尚未加载则自动加载）。"""
    if not _config:
        load_config()
    return _config


def default_config() -> dict[str, Any]:
    return copy.deepcopy(_DEFAULT_CONFIG)
