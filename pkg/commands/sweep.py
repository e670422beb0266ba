"""
子命令：sweep - 在 (层数, 宽度) 网格上逐格训练，汇总训练代价与留出集代价
"""

import logging
import pathlib

import pandas as pd

from commands.train import add_training_options, build_training
from pirl.net import NetArchitecture, save_model
from pirl.trainer import held_out_loss, train
from utils.common import PricingError, emit_json
from utils.config import get_config

logger = logging.getLogger("regime-pricer")

COLUMNS = ["layers", "width", "physics_loss", "total_loss", "test_loss", "iterations", "status"]


def register(subparsers) -> None:
    parser = subparsers.add_parser("sweep", help="网络结构网格扫描")
    add_training_options(parser)
    parser.add_argument("--layers", type=int, nargs="+", required=True, help="层数列表")
    parser.add_argument("--widths", type=int, nargs="+", required=True, help="宽度列表")
    parser.add_argument("--out", required=True, help="结果 CSV 路径")
    parser.add_argument("--models-dir", default=None, help="保存每格模型文件的目录")
    parser.set_defaults(handler=cmd_sweep)


def cmd_sweep(args) -> int:
    sets, loss_cfg, lbfgs_cfg, seed = build_training(args)
    n_test = int(get_config()["training"]["n_test"])
    rows = []
    for layers in args.layers:
        for width in args.widths:
            row = {"layers": layers, "width": width}
            try:
                arch = NetArchitecture(args.model, layers=layers, width=width)
                net, report = train(arch, sets, loss_cfg, lbfgs_cfg, seed)
                final = report.final()
                # 留出集用独立种子，与训练集不重叠
                test = held_out_loss(net, loss_cfg, sets.sizes(), seed + 1, n_test)
                row.update(physics_loss=final["c_a"], total_loss=final["total"],
                           test_loss=test["total"], iterations=report.iterations,
                           status=report.termination)
                if args.models_dir:
                    save_model(net, pathlib.Path(args.models_dir) / f"{args.model}_L{layers}_W{width}.rspirl")
            except PricingError as e:
                logger.error("扫描格 layers=%d width=%d 失败: %s", layers, width, e.message)
                row.update(status=f"error:{e.code}")
            rows.append(row)
            emit_json({"model": args.model, **row})

    out = pathlib.Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows, columns=COLUMNS).to_csv(out, index=False)
    logger.info("扫描完成: %d 格 → %s", len(rows), out)
    return 0
