from .gradcheck import GradCheckResult, gradcheck, relative_error
from .nn import conv1d, conv2d, l2_normalize, maxpool1d, maxpool2d
from .optim import SGD, OptimizerState, ScheduleConfig, lr_at_epoch, sgd_step
from .tensor import (
    GradError,
    Tensor,
    add,
    amax,
    as_tensor,
    backward,
    div,
    hinge,
    index,
    matmul,
    mean,
    mul,
    record_branches,
    relu,
    reshape,
    stack,
    sub,
    sum_,
    swapaxes,
    transpose,
)

__all__ = [
    "GradCheckResult", "gradcheck", "relative_error",
    "conv1d", "conv2d", "l2_normalize", "maxpool1d", "maxpool2d",
    "SGD", "OptimizerState", "ScheduleConfig", "lr_at_epoch", "sgd_step",
    "GradError", "Tensor", "add", "amax", "as_tensor", "backward", "div", "hinge",
    "index", "matmul", "mean", "mul", "record_branches", "relu", "reshape", "stack",
    "sub", "sum_", "swapaxes", "transpose",
]
