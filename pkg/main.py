"""
Regime Pricer - 体制转换 BSM / Heston 欧式看跌期权定价引擎（特征函数、蒙特卡洛、有限差分、PIRL）
"""

import argparse
import logging
import sys
from typing import Optional

import torch

from commands import compare, price, sample, sweep, train
from utils.common import (
    EXIT_OK,
    EXIT_UNEXPECTED,
    EXIT_USAGE,
    PricingError,
    ValidationError,
    build_error,
    emit_json,
)
from utils.config import load_config

logger = logging.getLogger("regime-pricer")

COMMANDS = (price, train, sweep, compare, sample)


# ---------------------------------------------------------------------------
# 命令行
# ---------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regime-pricer",
        description="体制转换 BSM / Heston 欧式看跌期权定价与物理约束残差网络训练",
    )
    parser.add_argument("--config", default=None, help="配置文件路径（缺省为项目根目录下的 config.yaml）")
    parser.add_argument("--show-config", action="store_true", help="打印生效配置（JSON）后退出")
    parser.add_argument("--threads", type=int, default=None, help="torch 线程数与蒙特卡洛并行 worker 上限")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="输出 DEBUG 日志")
    verbosity.add_argument("--quiet", action="store_true", help="只输出 WARNING 及以上日志")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    for module in COMMANDS:
        module.register(subparsers)
    return parser


# ---------------------------------------------------------------------------
# 日志配置：日志只写 stderr，stdout 只留给 JSON / CSV 结果
# ---------------------------------------------------------------------------
def setup_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(asctime)s [%(levelname)s] %(message)s",
        stream=sys.stderr,
        force=True,
    )


def _apply_threads(threads: Optional[int], config_threads: int) -> None:
    n = threads if threads is not None else config_threads
    if n and n > 0:
        torch.set_num_threads(int(n))
        logger.debug("torch 线程数: %d", n)


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose, args.quiet)

    try:
        cfg = load_config(args.config)
        if args.show_config:
            emit_json(cfg)
            return EXIT_OK
        if not args.command:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        if args.threads is not None and args.threads < 0:
            raise ValidationError("--threads 必须非负")
        _apply_threads(args.threads, cfg["runtime"]["threads"])
        return args.handler(args)
    except PricingError as e:
        logger.error("%s 失败: [%s] %s", args.command or "regime-pricer", e.code, e.message)
        emit_json(e.to_payload())
        return e.exit_code
    except Exception as e:
        logger.exception("未处理异常: command=%s | error=%s", args.command, e)
        emit_json(build_error("Internal Error", "internal_error"))
        return EXIT_UNEXPECTED


# ---------------------------------------------------------------------------
# 启动入口
# ---------------------------------------------------------------------------
if __name__ == "__main__":
    sys.exit(main())
