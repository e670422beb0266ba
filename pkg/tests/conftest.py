import pathlib
import sys

import pytest

ROOT = pathlib.Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from pricing.core import BsmRsParams, HestonRsParams  # noqa: E402


@pytest.fixture
def bsm_params() -> BsmRsParams:
    """固定参数评估场景：r=0.02, σ=(0.15, 0.35), λ12=2, λ21=1。"""
    return BsmRsParams(0.02, (0.15, 0.35), 2.0, 1.0)


@pytest.fixture
def heston_params() -> HestonRsParams:
    return HestonRsParams(0.02, 2.0, 0.1, -0.8, (0.25, 0.5), 2.0, 3.0)


@pytest.fixture(autouse=True)
def _reset_config():
    """load_config 会替换全局配置，每个用例结束后恢复仓库默认配置。"""
    yield
    from utils.config import load_config

    load_config()
