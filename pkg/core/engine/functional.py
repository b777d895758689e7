"""
Functional Ops

Differentiable layer primitives over Tensor. Each op computes its forward
result with numpy and registers a closure for the backward pass.

Conventions:
- convolutions are cross-correlations (no kernel flip)
- leaky_relu uses the negative-side slope as its subgradient at 0
- maxpool ties route the gradient to the first maximal element
- mse and cross-entropy reduce by mean
"""

from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from core.engine.rng import Rng
from core.engine.tensor import Tensor
from core.errors import ShapeError, StatisticsError, TargetError


IntPair = Union[int, Tuple[int, int]]


def _pair(value: IntPair) -> Tuple[int, int]:
    if isinstance(value, (tuple, list)):
        return int(value[0]), int(value[1])
    return int(value), int(value)


def _cast(value: float, like: np.ndarray):
    return like.dtype.type(value)


# Convolution

def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: IntPair = 1,
    dilation: IntPair = 1,
    padding: IntPair = 0,
) -> Tensor:
    """
    2D cross-correlation.

    Args:
        x: [batch, in_ch, H, W]
        weight: [out_ch, in_ch, kh, kw]
        bias: [out_ch] or None
        stride, dilation, padding: int or per-axis pair; padding is symmetric zeros

    Returns:
        [batch, out_ch, H_out, W_out]
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and weight, got {x.shape} and {weight.shape}")
    sh, sw = _pair(stride)
    dh, dw = _pair(dilation)
    ph, pw = _pair(padding)
    if min(sh, sw, dh, dw) < 1 or min(ph, pw) < 0:
        raise ShapeError(f"conv2d: invalid stride {stride}, dilation {dilation} or padding {padding}")

    batch, channels, height, width = x.shape
    out_ch, in_ch, kh, kw = weight.shape
    if channels != in_ch:
        raise ShapeError(
            f"conv2d: input shape {x.shape} has {channels} channels, "
            f"weight shape {weight.shape} expects {in_ch}"
        )
    if bias is not None and bias.shape != (out_ch,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} does not match {out_ch} output channels")

    eff_h, eff_w = dh * (kh - 1) + 1, dw * (kw - 1) + 1
    if height + 2 * ph < eff_h or width + 2 * pw < eff_w:
        raise ShapeError(
            f"conv2d: padded input {(height + 2 * ph, width + 2 * pw)} is smaller than "
            f"the dilated kernel {(eff_h, eff_w)}"
        )

    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
    windows = sliding_window_view(xp, (eff_h, eff_w), axis=(2, 3))[:, :, ::sh, ::sw, ::dh, ::dw]
    out_h, out_w = windows.shape[2], windows.shape[3]

    out = np.tensordot(windows, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)
    w_data = weight.data

    def backward(g):
        grad_w = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        grad_cols = np.tensordot(g, w_data, axes=([1], [0]))  # [b, oh, ow, c, kh, kw]
        grad_xp = np.zeros_like(xp)
        for i in range(kh):
            r0 = i * dh
            for j in range(kw):
                c0 = j * dw
                grad_xp[:, :, r0:r0 + sh * (out_h - 1) + 1:sh, c0:c0 + sw * (out_w - 1) + 1:sw] += (
                    grad_cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                )
        grad_x = grad_xp[:, :, ph:ph + height, pw:pw + width]
        if bias is None:
            return grad_x, grad_w
        return grad_x, grad_w, g.sum(axis=(0, 2, 3))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(out, parents, backward, "conv2d")


def conv1d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    dilation: int = 1,
    padding: int = 0,
) -> Tensor:
    """1D cross-correlation over [batch, in_ch, T] with weight [out_ch, in_ch, k]."""
    if x.ndim != 3 or weight.ndim != 3:
        raise ShapeError(f"conv1d expects 3-d input and weight, got {x.shape} and {weight.shape}")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(
            f"conv1d: input shape {x.shape} has {x.shape[1]} channels, "
            f"weight shape {weight.shape} expects {weight.shape[1]}"
        )
    length, kernel = x.shape[2], weight.shape[2]
    if length + 2 * padding < dilation * (kernel - 1) + 1:
        raise ShapeError(
            f"conv1d: input length {length} (padding {padding}) is shorter than "
            f"the dilated kernel {dilation * (kernel - 1) + 1}"
        )
    out = conv2d(
        x.reshape(x.shape[0], x.shape[1], 1, length),
        weight.reshape(weight.shape[0], weight.shape[1], 1, kernel),
        bias,
        stride=(1, stride),
        dilation=(1, dilation),
        padding=(0, padding),
    )
    return out.reshape(out.shape[0], out.shape[1], out.shape[3])


def pad2d(x: Tensor, pads: Sequence[int]) -> Tensor:
    """
    Zero-pad the last two axes of a 4-d tensor.

    Args:
        x: [batch, ch, H, W]
        pads: (top, bottom, left, right)
    """
    top, bottom, left, right = (int(p) for p in pads)
    if min(top, bottom, left, right) < 0:
        raise ShapeError(f"pad2d: negative padding {pads}")
    if not (top or bottom or left or right):
        return x
    height, width = x.shape[2], x.shape[3]
    out = np.pad(x.data, ((0, 0), (0, 0), (top, bottom), (left, right)))

    def backward(g):
        return (g[:, :, top:top + height, left:left + width],)

    return Tensor.from_op(out, (x,), backward, "pad2d")


# Dense

def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """y = x W^T + b for x [batch, f_in], W [f_out, f_in]."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear: input shape {x.shape} incompatible with weight shape {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"linear: bias shape {bias.shape} does not match weight shape {weight.shape}")
    x_data, w_data = x.data, weight.data
    out = x_data @ w_data.T
    if bias is not None:
        out = out + bias.data

    def backward(g):
        grad_x = g @ w_data
        grad_w = g.T @ x_data
        if bias is None:
            return grad_x, grad_w
        return grad_x, grad_w, g.sum(axis=0)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(out, parents, backward, "linear")


# Activations and regularization

def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    if not 0.0 <= slope < 1.0:
        raise ValueError(f"leaky_relu slope must lie in [0, 1), got {slope}")
    data = x.data
    s = _cast(slope, data)
    out = np.where(data >= 0, data, s * data)

    def backward(g):
        return (np.where(data > 0, g, s * g),)

    return Tensor.from_op(out, (x,), backward, "leaky_relu")


def dropout(x: Tensor, p: float, training: bool, rng: Optional[Rng] = None) -> Tensor:
    """Inverted dropout; identity in eval mode or when p == 0."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("train-mode dropout needs an Rng")
    scale = _cast(1.0 / (1.0 - p), x.data)
    mask = rng.keep_mask(x.shape, 1.0 - p).astype(x.dtype) * scale

    def backward(g):
        return (g * mask,)

    return Tensor.from_op(x.data * mask, (x,), backward, "dropout")


def batchnorm1d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    momentum: float = 0.1,
    eps: float = 1e-5,
    training: bool = True,
) -> Tensor:
    """
    Batch normalization over [batch, ch, T] per channel.

    Train mode normalizes with the (biased) batch variance and updates the
    running statistics in place; the running variance tracks the unbiased
    estimate. Eval mode normalizes with the running statistics.
    """
    if x.ndim != 3 or x.shape[1] != gamma.shape[0]:
        raise ShapeError(f"batchnorm1d: input shape {x.shape} incompatible with {gamma.shape[0]} channels")
    data = x.data
    dtype = data.dtype
    g_ = gamma.data[None, :, None]
    b_ = beta.data[None, :, None]

    if training:
        n = data.shape[0] * data.shape[2]
        if n < 2:
            raise StatisticsError(
                f"batchnorm1d: train mode needs at least 2 values per channel, got {n}"
            )
        mean = data.mean(axis=(0, 2))
        var = data.var(axis=(0, 2))
        inv_std = (1.0 / np.sqrt(var + _cast(eps, data))).astype(dtype)
        xhat = (data - mean[None, :, None]) * inv_std[None, :, None]
        m = _cast(momentum, data)
        running_mean[...] = (1 - m) * running_mean + m * mean
        running_var[...] = (1 - m) * running_var + m * var * _cast(n / (n - 1), data)

        def backward(g):
            grad_gamma = (g * xhat).sum(axis=(0, 2))
            grad_beta = g.sum(axis=(0, 2))
            dxhat = g * g_
            grad_x = (inv_std[None, :, None] / n) * (
                n * dxhat
                - dxhat.sum(axis=(0, 2), keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=(0, 2), keepdims=True)
            )
            return grad_x, grad_gamma, grad_beta
    else:
        inv_std = (1.0 / np.sqrt(running_var + _cast(eps, data))).astype(dtype)
        xhat = (data - running_mean[None, :, None]) * inv_std[None, :, None]

        def backward(g):
            grad_x = g * g_ * inv_std[None, :, None]
            return grad_x, (g * xhat).sum(axis=(0, 2)), g.sum(axis=(0, 2))

    out = (g_ * xhat + b_).astype(dtype)
    return Tensor.from_op(out, (x, gamma, beta), backward, "batchnorm1d")


def maxpool1d(x: Tensor, kernel: int, stride: int) -> Tensor:
    """Max pooling over [batch, ch, T]; T_out = floor((T - k) / stride) + 1."""
    if x.ndim != 3:
        raise ShapeError(f"maxpool1d expects [batch, ch, T], got {x.shape}")
    length = x.shape[2]
    if length < kernel:
        raise ShapeError(f"maxpool1d: input length {length} is shorter than kernel {kernel}")
    if stride < 1 or kernel < 1:
        raise ShapeError(f"maxpool1d: invalid kernel {kernel} or stride {stride}")
    windows = sliding_window_view(x.data, kernel, axis=2)[:, :, ::stride, :]
    arg = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]
    out_len = out.shape[2]
    shape = x.shape

    def backward(g):
        grad_x = np.zeros(shape, dtype=g.dtype)
        for j in range(kernel):
            grad_x[:, :, j:j + stride * (out_len - 1) + 1:stride] += np.where(arg == j, g, 0)
        return (grad_x,)

    return Tensor.from_op(np.ascontiguousarray(out), (x,), backward, "maxpool1d")


# Losses

def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean over all elements of (a - b)^2."""
    if a.shape != b.shape:
        raise ShapeError(f"mse: shapes {a.shape} and {b.shape} differ")
    diff = a.data - b.data
    scale = _cast(2.0 / diff.size, diff)

    def backward(g):
        grad = g * scale * diff
        return grad, -grad

    return Tensor.from_op(np.asarray(np.mean(diff * diff), dtype=diff.dtype), (a, b), backward, "mse")


def cosine_sim(a: Tensor, b: Tensor, eps: float = 1e-8) -> Tensor:
    """Row-wise a.b / (max(|a|, eps) * max(|b|, eps)) for [batch, f] inputs."""
    if a.shape != b.shape or a.ndim != 2 or a.shape[1] < 1:
        raise ShapeError(f"cosine_sim: expected matching [batch, f] shapes, got {a.shape} and {b.shape}")
    x, y = a.data, b.data
    e = _cast(eps, x)
    norm_x = np.sqrt((x * x).sum(axis=1))
    norm_y = np.sqrt((y * y).sum(axis=1))
    den_x = np.maximum(norm_x, e)
    den_y = np.maximum(norm_y, e)
    dot = (x * y).sum(axis=1)
    out = dot / (den_x * den_y)

    def backward(g):
        # d max(|v|, eps)/dv is v/|v| above eps and 0 below
        unit_x = np.where((norm_x > e)[:, None], x / np.where(norm_x > 0, norm_x, 1)[:, None], 0)
        unit_y = np.where((norm_y > e)[:, None], y / np.where(norm_y > 0, norm_y, 1)[:, None], 0)
        base = (1.0 / (den_x * den_y))[:, None]
        grad_x = g[:, None] * (y * base - (dot / (den_x ** 2 * den_y))[:, None] * unit_x)
        grad_y = g[:, None] * (x * base - (dot / (den_x * den_y ** 2))[:, None] * unit_y)
        return grad_x.astype(x.dtype), grad_y.astype(y.dtype)

    return Tensor.from_op(out.astype(x.dtype), (a, b), backward, "cosine_sim")


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction (no graph)."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def weighted_cross_entropy(
    logits: Tensor,
    targets: Sequence[int],
    class_weights: Optional[Union[Tensor, np.ndarray, Sequence[float]]] = None,
) -> Tensor:
    """
    Mean over the batch of -w[y] * log softmax(logits)[y].

    Args:
        logits: [batch, C]
        targets: class indices in [0, C)
        class_weights: [C] per-class weights, uniform when None
    """
    if logits.ndim != 2:
        raise ShapeError(f"weighted_cross_entropy expects [batch, C] logits, got {logits.shape}")
    batch, n_classes = logits.shape
    t = np.asarray(targets, dtype=np.int64).reshape(-1)
    if t.shape[0] != batch:
        raise ShapeError(f"weighted_cross_entropy: {t.shape[0]} targets for batch of {batch}")
    if t.size and (t.min() < 0 or t.max() >= n_classes):
        bad = int(t[(t < 0) | (t >= n_classes)][0])
        raise TargetError(f"target index {bad} outside [0, {n_classes})")

    z = logits.data
    if class_weights is None:
        w = np.ones(n_classes, dtype=z.dtype)
    else:
        w = np.asarray(class_weights.data if isinstance(class_weights, Tensor) else class_weights, dtype=z.dtype)
        if w.shape != (n_classes,):
            raise ShapeError(f"class weights shape {w.shape} does not match {n_classes} classes")

    shifted = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(batch)
    log_p = shifted[rows, t] - lse
    w_y = w[t]
    loss = np.asarray(-(w_y * log_p).mean(), dtype=z.dtype)

    def backward(g):
        grad = np.exp(shifted - lse[:, None])
        grad[rows, t] -= 1
        return (grad * (g * w_y / batch)[:, None],)

    return Tensor.from_op(loss, (logits,), backward, "cross_entropy")
