"""Minimal deterministic tensor kernel: attention with rotary encoding, MLPs,
loss primitives, optimizer helpers, gradient verification, weight containers."""

from .checkpoint import load_checkpoint, load_module_state, module_state, save_checkpoint
from .gradcheck import GradCheckReport, TensorCheck, check_gradients
from .kernel import (
    DTYPE,
    MLP,
    ParamDict,
    SelfAttentionBlock,
    attention,
    attention_scores,
    freeze_module,
    linear,
    module_params,
    rope_rotate,
    seeded_generator,
)
from .losses import (
    bce_loss,
    cross_entropy,
    generalized_iou,
    giou_loss,
    info_nce,
    l1_loss,
    loss,
)
from .optim import make_adam, set_lr, stepped_lr

__all__ = [
    "DTYPE",
    "MLP",
    "GradCheckReport",
    "ParamDict",
    "SelfAttentionBlock",
    "TensorCheck",
    "attention",
    "attention_scores",
    "bce_loss",
    "check_gradients",
    "cross_entropy",
    "freeze_module",
    "generalized_iou",
    "giou_loss",
    "info_nce",
    "l1_loss",
    "linear",
    "load_checkpoint",
    "load_module_state",
    "loss",
    "make_adam",
    "module_params",
    "module_state",
    "rope_rotate",
    "save_checkpoint",
    "seeded_generator",
    "set_lr",
    "stepped_lr",
]
