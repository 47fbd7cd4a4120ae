from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import check_gradients, numeric_grad, relative_error
from .optim import Adam, AdamState, adam_step
from .tensor import (
    ShapeError,
    Tensor,
    add,
    backward,
    concat,
    cross_entropy,
    dropout,
    embedding_lookup,
    exp,
    getitem,
    layer_norm,
    log,
    log_softmax,
    masked_softmax,
    matmul,
    mul,
    relu,
    reshape,
    segment_softmax,
    segment_sum,
    softmax,
    sparse_matmul,
    tensor,
    transpose,
)

__all__ = [
    "Adam", "AdamState", "ShapeError", "Tensor", "adam_step", "add", "backward",
    "check_gradients", "concat", "cross_entropy", "dropout", "embedding_lookup", "exp",
    "getitem", "layer_norm", "load_checkpoint", "log", "log_softmax", "masked_softmax",
    "matmul", "mul", "numeric_grad", "relative_error", "relu", "reshape", "save_checkpoint",
    "segment_softmax", "segment_sum", "softmax", "sparse_matmul", "tensor", "transpose",
]
