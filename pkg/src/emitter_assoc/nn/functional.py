"""
Stateless forward/backward kernels.

Every op accepts a single example or a batch along a leading axis:
conv inputs are ``(C, L)`` or ``(B, C, L)``, dense inputs ``(n,)`` or ``(B, n)``.
Convolution uses the cross-correlation convention (no kernel flip).
"""

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import EmptyAxis, LabelOutOfRange, ShapeMismatch

# Names of deliberately broken kernels, used by the verification harness.
FAULTS = set()

Padding = Union[str, int, Tuple[int, int]]


def _pads(padding: Padding, k: int) -> Tuple[int, int]:
    if padding == "valid":
        return 0, 0
    if padding == "same":
        return (k - 1) // 2, k // 2
    if isinstance(padding, int):
        return padding, padding
    left, right = padding
    return int(left), int(right)


def _batched(x, ndim):
    x = np.asarray(x)
    if x.ndim == ndim - 1:
        return x[None], True
    if x.ndim != ndim:
        raise ShapeMismatch(f"expected {ndim - 1}-D or {ndim}-D input, got shape {x.shape}")
    return x, False


def conv1d_out_length(length: int, k: int, stride: int = 1, padding: Padding = "valid") -> int:
    left, right = _pads(padding, k)
    return (length + left + right - k) // stride + 1


def _im2col(x, k, stride, padding):
    left, right = _pads(padding, k)
    if left or right:
        x = np.pad(x, ((0, 0), (0, 0), (left, right)))
    B, C, Lp = x.shape
    if k > Lp:
        raise ShapeMismatch(f"kernel {k} longer than padded input {Lp}")
    win = sliding_window_view(x, k, axis=2)[:, :, ::stride, :]  # (B, C, L', k)
    L_out = win.shape[2]
    cols = win.transpose(0, 2, 1, 3).reshape(B * L_out, C * k)
    return cols, L_out


def conv1d_forward(x, weights, bias, stride: int = 1, padding: Padding = "valid"):
    """``out[c, t] = bias[c] + sum_{i,j} w[c, i, j] * x[i, t*stride + j - pad_left]``."""
    xb, squeeze = _batched(x, 3)
    out, _ = _conv1d_forward_cols(xb, weights, bias, stride, padding)
    return out[0] if squeeze else out


def _conv1d_forward_cols(xb, weights, bias, stride, padding):
    C_out, C_in, k = weights.shape
    if xb.shape[1] != C_in or bias.shape != (C_out,):
        raise ShapeMismatch(
            f"input channels {xb.shape[1]} / bias {bias.shape} do not match weights {weights.shape}")
    if stride < 1:
        raise ShapeMismatch(f"stride must be >= 1, got {stride}")
    cols, L_out = _im2col(xb, k, stride, padding)
    out = cols @ weights.reshape(C_out, C_in * k).T + bias
    return out.reshape(xb.shape[0], L_out, C_out).transpose(0, 2, 1), cols


def conv1d_backward(grad_out, x, weights, stride: int = 1, padding: Padding = "valid", cols=None):
    """
    Gradients of :func:`conv1d_forward`.

    Returns
    -------
    grad_input, grad_weights, grad_bias
    """
    xb, squeeze = _batched(x, 3)
    gb_out, _ = _batched(grad_out, 3)
    C_out, C_in, k = weights.shape
    B, _, L = xb.shape
    if cols is None:
        cols, L_out = _im2col(xb, k, stride, padding)
    else:
        L_out = cols.shape[0] // B
    if gb_out.shape != (B, C_out, L_out):
        raise ShapeMismatch(f"grad_out shape {gb_out.shape} != {(B, C_out, L_out)}")

    g2 = gb_out.transpose(0, 2, 1).reshape(B * L_out, C_out)
    grad_w = (g2.T @ cols).reshape(C_out, C_in, k)
    grad_b = gb_out.sum(axis=(0, 2))
    gcols = (g2 @ weights.reshape(C_out, C_in * k)).reshape(B, L_out, C_in, k).transpose(0, 2, 1, 3)

    left, right = _pads(padding, k)
    gxp = np.zeros((B, C_in, L + left + right), dtype=gcols.dtype)
    span = stride * (L_out - 1) + 1
    for j in range(k):
        gxp[:, :, j:j + span:stride] += gcols[:, :, :, j]
    grad_x = gxp[:, :, left:left + L]

    if "conv_backward_sign" in FAULTS:
        grad_x, grad_w = -grad_x, -grad_w
    return (grad_x[0] if squeeze else grad_x), grad_w, grad_b


def dense_forward(x, weights, bias):
    """Affine map ``weights @ x + bias`` with ``weights`` of shape ``(m, n)``."""
    xb, squeeze = _batched(x, 2)
    if xb.shape[1] != weights.shape[1] or bias.shape != (weights.shape[0],):
        raise ShapeMismatch(f"input {xb.shape} / bias {bias.shape} incompatible with weights {weights.shape}")
    out = xb @ weights.T + bias
    return out[0] if squeeze else out


def dense_backward(grad_out, x, weights):
    xb, squeeze = _batched(x, 2)
    gb, _ = _batched(grad_out, 2)
    if gb.shape != (xb.shape[0], weights.shape[0]):
        raise ShapeMismatch(f"grad_out shape {gb.shape} incompatible with weights {weights.shape}")
    grad_x = gb @ weights
    return (grad_x[0] if squeeze else grad_x), gb.T @ xb, gb.sum(axis=0)


@dataclass(frozen=True)
class SeluParams:
    alpha: float = 1.6732632423543772
    lambda_scale: float = 1.0507009873554805

    def __post_init__(self):
        if self.alpha <= 0 or self.lambda_scale <= 0:
            raise ValueError("SeLU alpha and lambda must be positive")


CANONICAL_SELU = SeluParams()
# lambda = 1: the unscaled two-branch form
LITERAL_SELU = SeluParams(lambda_scale=1.0)


def selu(x, params: SeluParams = CANONICAL_SELU):
    x = np.asarray(x)
    neg = params.alpha * np.expm1(np.minimum(x, 0))
    return params.lambda_scale * np.where(x > 0, x, neg).astype(x.dtype, copy=False)


def selu_grad(x, params: SeluParams = CANONICAL_SELU):
    """Derivative of :func:`selu`; at exactly 0 the left limit ``lambda * alpha`` is used."""
    x = np.asarray(x)
    d = np.where(x > 0, 1.0, params.alpha * np.exp(np.minimum(x, 0)))
    return (params.lambda_scale * d).astype(x.dtype, copy=False)


def tanh(x):
    return np.tanh(x)


def tanh_grad(x):
    t = np.tanh(x)
    return 1 - t * t


def global_average_pool(x):
    """Mean over the last (time) axis: ``(C, L) -> (C,)`` or ``(B, C, L) -> (B, C)``."""
    x = np.asarray(x)
    if x.shape[-1] < 1:
        raise EmptyAxis("cannot average over an empty time axis")
    return x.mean(axis=-1)


def global_average_pool_backward(grad_out, length: int):
    if length < 1:
        raise EmptyAxis("cannot average over an empty time axis")
    g = np.asarray(grad_out)
    return np.repeat(g[..., None] / length, length, axis=-1)


def softmax(logits):
    z = np.asarray(logits)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, label):
    """
    Cross-entropy of ``softmax(logits)`` against integer ``label``.

    For a batch ``(B, C)`` with labels ``(B,)`` the loss is the batch mean and
    the gradient is scaled accordingly.

    Returns
    -------
    loss : float
    grad : np.ndarray
        Same shape as ``logits``.
    """
    z = np.asarray(logits)
    zb, squeeze = _batched(z, 2)
    y = np.atleast_1d(np.asarray(label))
    C = zb.shape[1]
    if C < 2:
        raise ShapeMismatch("need at least 2 classes")
    if y.shape != (zb.shape[0],):
        raise ShapeMismatch(f"labels {y.shape} do not match logits {zb.shape}")
    if np.any(y < 0) or np.any(y >= C):
        raise LabelOutOfRange(f"labels must lie in [0, {C})")
    shifted = zb - zb.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(zb.shape[0])
    losses = log_z - shifted[rows, y]
    grad = np.exp(shifted - log_z[:, None])
    grad[rows, y] -= 1
    grad /= zb.shape[0]
    return float(losses.mean()), (grad[0] if squeeze else grad)
