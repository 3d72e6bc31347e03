from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import grad_check, grad_check_report
from .layers import conv1d, dense, dropout, l2_penalty, lstm, maxpool1d, one_hot, softmax, softmax_xent
from .optim import AdamState, adam_step
from .tensor import Tensor, concat, topological_order

__all__ = [
    "AdamState",
    "Tensor",
    "adam_step",
    "concat",
    "conv1d",
    "dense",
    "dropout",
    "grad_check",
    "grad_check_report",
    "l2_penalty",
    "load_checkpoint",
    "lstm",
    "maxpool1d",
    "one_hot",
    "save_checkpoint",
    "softmax",
    "softmax_xent",
    "topological_order",
]
