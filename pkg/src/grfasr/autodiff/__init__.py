"""Minimal reverse-mode autodiff engine (float64, numpy buffers)."""

from .checkpoint import CheckpointError, load_checkpoint, load_into, save_checkpoint
from .nn import BLSTM, Conv2d, Embedding, LayerNorm, Linear, LSTMDirection, Module, Parameter
from .optim import OptimizerState, adam_noam_step, clip_grad_norm, noam_lr
from .tensor import (
    Tensor,
    add,
    as_tensor,
    clamp_min,
    concat,
    conv2d,
    cross_entropy,
    cross_entropy_with_label_smoothing,
    div,
    dropout,
    embedding,
    exp,
    getitem,
    grad_enabled,
    layer_norm,
    log,
    log_softmax,
    lstm,
    masked_fill,
    matmul,
    mean,
    mul,
    no_grad,
    pow_,
    relu,
    reshape,
    sigmoid,
    slice_,
    softmax,
    sqrt,
    sub,
    sum_,
    swapaxes,
    tanh,
    transpose,
)
