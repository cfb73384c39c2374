"""Reverse-mode autodiff over NCHW tensors."""

from .conv import conv2d, conv2d_direct
from .gradcheck import GradCheckReport, finite_diff_check, numeric_gradient
from .ops import (
    abs, add, add_const, channel_mul, concat_batch, fully_connected, global_avg_pool,
    leaky_relu, log, mean_all, mul, pixel_shuffle, pixel_unshuffle, relu, scale,
    sigmoid, slice_batch, sqrt, square, sub, sum_all,
)
from .params import ParameterStore, ScopedParams, scoped
from .tensor import DTYPE, Tape, Tensor, active_tape, check_finite, nan_scan

__all__ = [
    "DTYPE", "GradCheckReport", "ParameterStore", "ScopedParams", "Tape", "Tensor",
    "abs", "active_tape", "add", "add_const", "channel_mul", "check_finite", "concat_batch",
    "conv2d", "conv2d_direct", "finite_diff_check", "fully_connected", "global_avg_pool",
    "leaky_relu", "log", "mean_all", "mul", "nan_scan", "numeric_gradient", "pixel_shuffle",
    "pixel_unshuffle", "relu", "scale", "scoped", "sigmoid", "slice_batch", "sqrt", "square", "sub",
    "sum_all",
]
