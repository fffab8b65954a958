"""Float64 tensors, a reverse-mode tape, initialisation and Adadelta."""

from gatt.numcore.optim import (
    ADADELTA_EPS,
    ADADELTA_RHO,
    adadelta_step,
    clip_global_norm,
    global_norm,
)
from gatt.numcore.params import ParamStore, default_kind, init_param, make_rng
from gatt.numcore.tensor import (
    DegenerateMaskError,
    DimensionError,
    NumericError,
    Tape,
    Tensor,
    add,
    as_tensor,
    concat,
    group_sum,
    interleave,
    linear,
    log_softmax,
    masked_softmax,
    matmul,
    mul,
    nll,
    one_minus,
    repeat_rows,
    reshape,
    sigmoid,
    sub,
    sum_all,
    take_rows,
    tanh,
)

__all__ = [
    "ADADELTA_EPS",
    "ADADELTA_RHO",
    "DegenerateMaskError",
    "DimensionError",
    "NumericError",
    "ParamStore",
    "Tape",
    "Tensor",
    "adadelta_step",
    "add",
    "as_tensor",
    "clip_global_norm",
    "concat",
    "default_kind",
    "global_norm",
    "group_sum",
    "init_param",
    "interleave",
    "linear",
    "log_softmax",
    "make_rng",
    "masked_softmax",
    "matmul",
    "mul",
    "nll",
    "one_minus",
    "repeat_rows",
    "reshape",
    "sigmoid",
    "sub",
    "sum_all",
    "take_rows",
    "tanh",
]
