"""
子命令：sample - 按训练配置采样并导出 CSV，便于检查与复现
"""

import logging

from commands.train import add_training_options, build_training
from pirl.sampler import write_sets_csv
from utils.common import emit_json

logger = logging.getLogger("regime-pricer")


def register(subparsers) -> None:
    parser = subparsers.add_parser("sample", help="导出训练样本集 CSV")
    add_training_options(parser)
    parser.add_argument("--out-dir", required=True)
    parser.set_defaults(handler=cmd_sample)


def cmd_sample(args) -> int:
    sets, _, _, seed = build_training(args)
    paths = write_sets_csv(sets, args.out_dir)
    emit_json({"model": args.model, "seed": seed, "sizes": list(sets.sizes()),
               "files": [str(p) for p in paths]})
    return 0
