"""
子命令：train - 采样、训练并保存模型文件与训练报告
"""

import logging
import pathlib

from commands.options import MODEL_CHOICES, add_seed, seed_of
from pirl.loss import LossConfig
from pirl.net import NetArchitecture, save_model
from pirl.optim import LbfgsConfig
from pirl.sampler import sample_sets, write_sets_csv
from pirl.trainer import train
from utils.common import emit_json
from utils.config import get_config

logger = logging.getLogger("regime-pricer")


def add_training_options(parser) -> None:
    parser.add_argument("--model", choices=MODEL_CHOICES, required=True)
    parser.add_argument("--iters", type=int, default=None, help="L-BFGS 迭代上限（缺省取 lbfgs.max_iter）")
    parser.add_argument("--n-inner", type=int, default=None, help="内部点数 N_A")
    parser.add_argument("--n-terminal", type=int, default=None, help="到期面点数 N_T")
    parser.add_argument("--n-lower", type=int, default=None, help="下边界点数 N_low")
    parser.add_argument("--reduction", choices=("mean", "sum"), default=None)
    add_seed(parser)


def register(subparsers) -> None:
    parser = subparsers.add_parser("train", help="训练残差网络")
    add_training_options(parser)
    parser.add_argument("--layers", type=int, default=None, help="层数 L（含输出层）")
    parser.add_argument("--width", type=int, default=None, help="隐藏层宽度")
    parser.add_argument("--out", required=True, help="模型文件输出路径")
    parser.add_argument("--report", default=None, help="训练报告 CSV（缺省为 <out>.report.csv）")
    parser.add_argument("--sets-dir", default=None, help="同时把样本集导出为 CSV 的目录")
    parser.set_defaults(handler=cmd_train)


def model_section(model: str) -> dict:
    return get_config()["training"]["bsm" if model == "bsm-rs" else "heston"]


def build_training(args):
    """由参数与配置构造样本集、代价配置和优化器配置，train 与 sweep 共用。"""
    cfg = get_config()
    section = model_section(args.model)
    seed = seed_of(args)
    sizes = tuple(
        getattr(args, flag) if getattr(args, flag) is not None else int(section[key])
        for flag, key in (("n_inner", "n_inner"), ("n_terminal", "n_terminal"), ("n_lower", "n_lower"))
    )
    sets = sample_sets(args.model, seed, *sizes)
    training = dict(cfg["training"])
    if args.reduction:
        training["reduction"] = args.reduction
    loss_cfg = LossConfig.from_config(args.model, training)
    lbfgs_cfg = LbfgsConfig.from_config(cfg["lbfgs"], max_iter=args.iters)
    return sets, loss_cfg, lbfgs_cfg, seed


def cmd_train(args) -> int:
    section = model_section(args.model)
    arch = NetArchitecture(
        args.model,
        layers=args.layers if args.layers is not None else int(section["layers"]),
        width=args.width if args.width is not None else int(section["width"]),
    )
    sets, loss_cfg, lbfgs_cfg, seed = build_training(args)
    if args.sets_dir:
        write_sets_csv(sets, args.sets_dir)

    out = pathlib.Path(args.out)
    checkpoint = out.with_name(out.name + ".last_good")
    net, report = train(arch, sets, loss_cfg, lbfgs_cfg, seed, checkpoint=checkpoint)
    save_model(net, out)
    report_path = report.to_csv(args.report or out.with_name(out.name + ".report.csv"))

    final = report.final()
    emit_json({
        "model": args.model, "layers": arch.layers, "width": arch.width,
        "parameters": arch.parameter_count(), "iterations": report.iterations,
        "termination": report.termination, "total": final.get("total"),
        "c_a": final.get("c_a"), "c_t": final.get("c_t"), "c_low": final.get("c_low"),
        "model_file": str(out), "report": str(report_path),
    })
    return 0
