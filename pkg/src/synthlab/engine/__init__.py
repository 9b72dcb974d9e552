from synthlab.engine.gradcheck import grad_check
from synthlab.engine.optim import AdamState, LrSchedule, adam_step, lr_at
from synthlab.engine.tensor import (
    Tensor,
    add,
    concat,
    div,
    exp,
    getitem,
    layer_norm,
    leaky_relu,
    linear,
    masked_softmax,
    matmul,
    mean,
    mul,
    parameter,
    relu,
    reshape,
    square,
    sub,
    tanh,
    tensor,
    transpose,
    tsum,
)

__all__ = [
    "AdamState", "LrSchedule", "Tensor", "adam_step", "add", "concat", "div", "exp",
    "getitem", "grad_check", "layer_norm", "leaky_relu", "linear", "lr_at",
    "masked_softmax", "matmul", "mean", "mul", "parameter", "relu", "reshape",
    "square", "sub", "tanh", "tensor", "transpose", "tsum",
]
