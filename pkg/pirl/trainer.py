"""
训练流程 - 初始化网络，在全量样本上用 L-BFGS 最小化物理约束代价
"""

import logging
import pathlib
import time
from typing import Optional

import torch

from pirl.deriv import get_flat, set_flat
from pirl.loss import LossConfig, cost, cost_gradient
from pirl.net import NetArchitecture, ResidualNet, init_params, save_model
from pirl.optim import LbfgsConfig, TrainReport, minimize
from pirl.sampler import SampleSets, held_out_sizes, sample_sets
from utils.common import DivergedError, ValidationError

logger = logging.getLogger("regime-pricer")


def train(arch: NetArchitecture, sets: SampleSets, loss_cfg: LossConfig, lbfgs_cfg: LbfgsConfig,
          seed: int, checkpoint: Optional[pathlib.Path] = None) -> tuple[ResidualNet, TrainReport]:
    """init_params(seed) 之后做全批量 L-BFGS。

    发散时把最后一个有限代价对应的参数写入 checkpoint（若给出），再抛出 DivergedError。
    """
    if arch.model != sets.model or arch.model != loss_cfg.model:
        raise ValidationError("网络、样本集与代价函数的模型类型不一致")
    net = init_params(arch, seed, meta=loss_cfg.meta())
    logger.info("开始训练: model=%s layers=%d width=%d params=%d sizes=%s seed=%d",
                arch.model, arch.layers, arch.width, arch.parameter_count(), sets.sizes(), seed)

    def objective(theta):
        set_flat(net, theta)
        return cost_gradient(net, sets, loss_cfg)

    try:
        theta, report = minimize(objective, get_flat(net), lbfgs_cfg)
    except DivergedError as e:
        if e.last_good is not None:
            set_flat(net, e.last_good)
            if checkpoint is not None:
                e.checkpoint = str(save_model(net, checkpoint))
                e.details["checkpoint"] = e.checkpoint
        logger.error("训练发散: component=%s checkpoint=%s", e.component, e.checkpoint)
        raise
    set_flat(net, theta)
    return net, report


def held_out_loss(net: ResidualNet, loss_cfg: LossConfig, train_sizes: tuple[int, int, int],
                  seed: int, n_test: int = 5000) -> dict[str, float]:
    """在独立种子的 n_test 个留出点上评估代价，三类点按训练集比例分配。"""
    sizes = held_out_sizes(train_sizes, n_test)
    held_out = sample_sets(loss_cfg.model, seed, *sizes)
    start_ts = time.time()
    with torch.no_grad():
        terms = cost(net, held_out, loss_cfg).as_floats()
    logger.info("测试集代价: total=%.6e | n=%d | %.2fs", terms["total"], n_test, time.time() - start_ts)
    return terms
