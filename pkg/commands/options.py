"""
子命令共用的参数定义与构造函数
"""

import argparse
import os

from pricing.core import BsmRsParams, HestonRsParams
from utils.common import resolve_seed
from utils.config import get_config

MODEL_CHOICES = ("bsm-rs", "heston-rs")


def add_seed(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None,
                        help="随机种子（缺省依次取环境变量 RP_SEED、配置 runtime.seed）")


def add_model_params(parser: argparse.ArgumentParser) -> None:
    """模型参数；未给出的项取配置中的评估场景默认值。"""
    group = parser.add_argument_group("模型参数")
    group.add_argument("--r", type=float, default=None, help="无风险利率")
    group.add_argument("--sigma1", type=float, default=None, help="体制 1 的波动率（Heston 为 vol-of-vol）")
    group.add_argument("--sigma2", type=float, default=None, help="体制 2 的波动率（Heston 为 vol-of-vol）")
    group.add_argument("--lambda12", type=float, default=None, help="体制 1 → 2 的转移强度")
    group.add_argument("--lambda21", type=float, default=None, help="体制 2 → 1 的转移强度")
    group.add_argument("--kappa", type=float, default=None, help="Heston 均值回复速度")
    group.add_argument("--gamma", type=float, default=None, help="Heston 长期方差水平")
    group.add_argument("--rho", type=float, default=None, help="Heston 相关系数")


def add_mc_options(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("蒙特卡洛")
    group.add_argument("--paths", type=int, default=None, help="路径数")
    group.add_argument("--steps", type=int, default=None, help="每年 Euler 步数")
    group.add_argument("--antithetic", action="store_true", default=None, help="启用对偶变量")
    group.add_argument("--scheme", choices=("full_truncation", "diffusion_floor"), default=None,
                       help="Heston 方差的 Euler 方案")


def _pick(value, default):
    return default if value is None else value


def bsm_params(args) -> BsmRsParams:
    cfg = get_config()
    ev, tr = cfg["evaluation"]["bsm"], cfg["training"]["bsm"]
    return BsmRsParams(
        r=_pick(args.r, ev["r"]),
        sigma=(_pick(args.sigma1, ev["sigma1"]), _pick(args.sigma2, ev["sigma2"])),
        lambda12=_pick(args.lambda12, tr["lambda12"]),
        lambda21=_pick(args.lambda21, tr["lambda21"]),
    )


def heston_params(args) -> HestonRsParams:
    cfg = get_config()
    ev, tr = cfg["evaluation"]["heston"], cfg["training"]["heston"]
    return HestonRsParams(
        r=_pick(args.r, ev["r"]),
        kappa=_pick(args.kappa, ev["kappa"]),
        gamma=_pick(args.gamma, ev["gamma"]),
        rho=_pick(args.rho, ev["rho"]),
        sigma=(_pick(args.sigma1, ev["sigma1"]), _pick(args.sigma2, ev["sigma2"])),
        lambda12=_pick(args.lambda12, tr["lambda12"]),
        lambda21=_pick(args.lambda21, tr["lambda21"]),
    )


def seed_of(args) -> int:
    return resolve_seed(args.seed, get_config()["runtime"]["seed"])


def workers_of(args) -> int:
    threads = getattr(args, "threads", None) or get_config()["runtime"]["threads"]
    return int(threads) if threads else (os.cpu_count() or 1)
