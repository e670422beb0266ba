"""
子命令：price - 单点定价（cf / mc / fd / pirl 四种方法）
"""

import logging
import time

import numpy as np

from commands.options import (
    MODEL_CHOICES,
    add_mc_options,
    add_model_params,
    add_seed,
    bsm_params,
    heston_params,
    seed_of,
    workers_of,
)
from pirl.net import load_model, predict
from pricing.cf_pricer import QuadratureConfig, put_price_cf
from pricing.core import MarketState, OptionSpec, PriceResult
from pricing.fd_oracle import Grid1D, solve_bsm_rs_fd
from pricing.mc_pricer import McConfig, bsm_rs_put_mc, heston_rs_put_mc
from utils.common import ValidationError, emit_json
from utils.config import get_config

logger = logging.getLogger("regime-pricer")

METHODS = ("cf", "mc", "fd", "pirl")

# 仅支持 BSM-RS 的方法
_BSM_ONLY = {"cf", "fd"}


def register(subparsers) -> None:
    parser = subparsers.add_parser("price", help="单点定价，结果以一行 JSON 输出")
    parser.add_argument("--model", choices=MODEL_CHOICES, required=True)
    parser.add_argument("--method", choices=METHODS, required=True)
    parser.add_argument("--spot", type=float, required=True, help="标的价格 S")
    parser.add_argument("--strike", type=float, default=None, help="行权价 E（缺省取 training.strike）")
    parser.add_argument("--tau", type=float, required=True, help="剩余期限 T - t")
    parser.add_argument("--regime", type=int, choices=(1, 2), default=1)
    parser.add_argument("--variance", type=float, default=None, help="Heston 当前方差 v（缺省取 evaluation.heston.v0）")
    add_model_params(parser)
    add_mc_options(parser)
    add_seed(parser)
    parser.add_argument("--grid-space", type=int, default=None, help="FD 空间网格数")
    parser.add_argument("--grid-time", type=int, default=None, help="FD 时间网格数")
    parser.add_argument("--surface-out", default=None, help="FD 价格曲面 CSV 输出路径")
    parser.add_argument("--pirl-file", default=None, help="训练好的模型文件（--method pirl）")
    parser.set_defaults(handler=cmd_price)


def _check_combination(args) -> None:
    if args.model == "heston-rs" and args.method in _BSM_ONLY:
        raise ValidationError(f"--method {args.method} 不支持 --model heston-rs（Heston 请使用 mc 或 pirl）")
    if args.method == "pirl" and not args.pirl_file:
        raise ValidationError("--method pirl 需要 --pirl-file")
    if args.surface_out and args.method != "fd":
        raise ValidationError("--surface-out 只能与 --method fd 一起使用")
    if args.tau < 0:
        raise ValidationError("--tau 必须非负")


def _price_pirl(args, state: MarketState, spec: OptionSpec, params) -> PriceResult:
    net = load_model(args.pirl_file)
    if net.arch.model != args.model:
        raise ValidationError(f"模型文件为 {net.arch.model}，与 --model {args.model} 不符")
    trained_strike = net.meta.get("strike")
    if trained_strike is not None and abs(float(trained_strike) - spec.strike) > 1e-12:
        raise ValidationError(f"模型按行权价 {trained_strike} 训练，不能为 E={spec.strike} 定价")
    if args.model == "bsm-rs":
        row = [state.t, spec.maturity, state.spot, params.r, params.sigma[0], params.sigma[1]]
    else:
        row = [state.t, spec.maturity, state.spot, state.variance, params.r, params.kappa,
               params.gamma, params.sigma[0], params.sigma[1]]
    value = predict(net, np.array([row]))[0, state.regime - 1]
    return PriceResult(float(value), state.regime, method="pirl")


def cmd_price(args) -> int:
    _check_combination(args)
    cfg = get_config()
    strike = args.strike if args.strike is not None else float(cfg["training"]["strike"])
    spec = OptionSpec(strike, args.tau)
    if args.model == "bsm-rs":
        params = bsm_params(args)
        state = MarketState(0.0, args.spot, args.regime)
    else:
        params = heston_params(args)
        variance = args.variance if args.variance is not None else float(cfg["evaluation"]["heston"]["v0"])
        state = MarketState(0.0, args.spot, args.regime, variance=variance)

    start_ts = time.time()
    if args.method == "cf":
        result = put_price_cf(state, spec, params, QuadratureConfig.from_config(cfg["quadrature"]))
    elif args.method == "mc":
        mc_cfg = McConfig.from_config(
            cfg["monte_carlo"], seed=seed_of(args), workers=workers_of(args),
            n_paths=args.paths, n_steps=args.steps, antithetic=args.antithetic, scheme=args.scheme,
        )
        pricer = bsm_rs_put_mc if args.model == "bsm-rs" else heston_rs_put_mc
        result = pricer(state, spec, params, mc_cfg).to_result(state.regime)
    elif args.method == "fd":
        section = dict(cfg["fd"])
        if args.grid_space:
            section["n_space"] = args.grid_space
        if args.grid_time:
            section["n_time"] = args.grid_time
        surface = solve_bsm_rs_fd(spec, params, Grid1D.for_strike(strike, section))
        if args.surface_out:
            surface.to_csv(args.surface_out)
            logger.info("FD 价格曲面已写出: %s", args.surface_out)
        result = PriceResult(surface.price(state.spot, 0.0, state.regime), state.regime, method="fd")
    else:
        result = _price_pirl(args, state, spec, params)

    logger.info("定价完成: model=%s method=%s value=%.8f | %.2fs",
                args.model, args.method, result.value, time.time() - start_ts)
    emit_json({"model": args.model, "spot": args.spot, "strike": strike, "tau": args.tau,
               **result.to_dict()})
    return 0
