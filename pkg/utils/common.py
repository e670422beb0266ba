"""
共用工具函数 - 异常体系、错误构造、随机种子解析、结果输出等
"""

import json
import logging
import os
import sys
from typing import Any, Optional

logger = logging.getLogger("regime-pricer")

# ---------------------------------------------------------------------------
# 进程退出码
# ---------------------------------------------------------------------------
EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3
EXIT_IO = 4


# ---------------------------------------------------------------------------
# 异常体系
# ---------------------------------------------------------------------------
class PricingError(Exception):
    """所有定价相关错误的基类，携带稳定的错误码和退出码。"""

    code = "pricing_error"
    error_type = "pricing_error"
    exit_code = EXIT_UNEXPECTED

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_payload(self) -> dict:
        return build_error(self.message, self.error_type, self.code, **self.details)


class ValidationError(PricingError):
    """参数非法、标志组合不兼容、未知配置项。"""

    code = "invalid_parameter"
    error_type = "invalid_request_error"
    exit_code = EXIT_USAGE


class InvalidTimeError(ValidationError):
    code = "invalid_time"


class DomainError(ValidationError):
    code = "domain_error"


class NotABoundaryError(ValidationError):
    code = "not_a_boundary"


class ShapeError(ValidationError):
    code = "shape_mismatch"


class QuadratureError(PricingError):
    """傅里叶反演积分未收敛（截断尾部或积分误差超出容差）。"""

    code = "quadrature_failure"
    error_type = "numeric_error"
    exit_code = EXIT_DIVERGED

    def __init__(self, message: str, tail_bound: float, abs_error: float = float("nan")):
        super().__init__(message, tail_bound=tail_bound, abs_error=abs_error)
        self.tail_bound = tail_bound
        self.abs_error = abs_error


class ConsistencyError(PricingError):
    """价格落在无模型界之外，通常说明积分配置有误。"""

    code = "bound_violation"
    error_type = "numeric_error"
    exit_code = EXIT_DIVERGED

    def __init__(self, message: str, value: float, low: float, high: float):
        super().__init__(message, value=value, low=low, high=high)
        self.value = value
        self.low = low
        self.high = high


class DivergedError(PricingError):
    """训练损失出现非有限值。last_good 为最后一次有限损失对应的参数向量。"""

    code = "diverged"
    error_type = "numeric_error"
    exit_code = EXIT_DIVERGED

    def __init__(self, message: str, component: str, last_good: Any = None,
                 checkpoint: Optional[str] = None):
        super().__init__(message, component=component, checkpoint=checkpoint)
        self.component = component
        self.last_good = last_good
        self.checkpoint = checkpoint


class FileAccessError(PricingError):
    """输入 / 输出文件缺失、不可读或不可写。"""

    code = "io_error"
    error_type = "io_error"
    exit_code = EXIT_IO


class ModelFileError(FileAccessError):
    code = "model_file_error"


# ---------------------------------------------------------------------------
# 错误响应构造
# ---------------------------------------------------------------------------
def build_error(
    message: str,
    error_type: str = "invalid_request_error",
    code: Optional[str] = None,
    **details: Any,
) -> dict:
    """构造统一的错误输出体（单行 JSON 输出到 stdout）。"""
    err: dict = {
        "error": {
            "message": message,
            "type": error_type,
        }
    }
    if code:
        err["error"]["code"] = code
    extra = {k: v for k, v in details.items() if v is not None and _jsonable(v)}
    if extra:
        err["error"]["details"] = extra
    return err


def _jsonable(value: Any) -> bool:
    return isinstance(value, (str, int, float, bool, list, tuple, dict))


# ---------------------------------------------------------------------------
# 随机种子
# ---------------------------------------------------------------------------
def resolve_seed(flag_seed: Optional[int], config_seed: int) -> int:
    """优先级：命令行 --seed → 环境变量 RP_SEED → 配置文件 runtime.seed。"""
    if flag_seed is not None:
        return int(flag_seed)
    env_seed = os.getenv("RP_SEED", "")
    if env_seed:
        try:
            return int(env_seed)
        except ValueError:
            raise ValidationError(f"环境变量 RP_SEED 不是整数: {env_seed!r}")
    return int(config_seed)


# ---------------------------------------------------------------------------
# 结果输出
# ---------------------------------------------------------------------------
def emit_json(payload: dict, stream=None) -> None:
    """以单行 JSON 形式输出一个对象（流式友好）。"""
    stream = stream or sys.stdout
    stream.write(json.dumps(payload, ensure_ascii=False, default=_json_default) + "\n")
    stream.flush()


def _json_default(obj: Any):
    # numpy 标量 / 数组
    if hasattr(obj, "tolist"):
        return obj.tolist()
    raise TypeError(f"无法序列化的类型: {type(obj).__name__}")
