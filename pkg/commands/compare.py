"""
子命令：compare - 在固定参数场景上比较训练好的网络与基准解
"""

import logging

from commands.options import add_mc_options, add_seed, seed_of, workers_of
from evaluation.scenarios import (
    BSM_SCENARIOS,
    SCENARIOS,
    eval_bsm_scenario,
    eval_heston_scenario,
)
from pricing.cf_pricer import QuadratureConfig
from pricing.mc_pricer import McConfig
from utils.common import emit_json
from utils.config import get_config

logger = logging.getLogger("regime-pricer")


def register(subparsers) -> None:
    parser = subparsers.add_parser("compare", help="场景评估，输出误差表与逐点 CSV")
    parser.add_argument("--model-file", required=True)
    parser.add_argument("--scenario", choices=SCENARIOS, required=True)
    parser.add_argument("--out-dir", default="results", help="CSV / JSON 输出目录")
    add_mc_options(parser)
    add_seed(parser)
    parser.set_defaults(handler=cmd_compare)


def cmd_compare(args) -> int:
    cfg = get_config()
    seed = seed_of(args)
    if args.scenario in BSM_SCENARIOS:
        result = eval_bsm_scenario(
            args.model_file, args.scenario, cfg["evaluation"]["bsm"],
            QuadratureConfig.from_config(cfg["quadrature"]), seed,
        )
    else:
        section = cfg["evaluation"]["heston"]
        mc_cfg = McConfig.from_config(
            cfg["monte_carlo"], seed=seed, workers=workers_of(args),
            n_paths=args.paths if args.paths is not None else int(section["mc_paths"]),
            n_steps=args.steps if args.steps is not None else int(section["mc_steps"]),
            antithetic=args.antithetic, scheme=args.scheme,
        )
        result = eval_heston_scenario(args.model_file, args.scenario, section, mc_cfg)

    paths = result.write(args.out_dir)
    for record in result.summary_records():
        emit_json(record)
    if result.extra:
        emit_json({"scenario": args.scenario, **result.extra})
    logger.info("结果已写出: %s", ", ".join(str(p) for p in paths))
    return 0
