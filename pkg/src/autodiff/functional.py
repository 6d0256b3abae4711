"""
Layer primitives: convolution, gated/sigmoid linear units, instance
normalization and pixel shuffling.

All ops accept C×H×W or B×C×H×W input; a 3-D input comes back 3-D.
"""

from typing import Optional, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from ..errors import ShapeError
from .tensor import DiffTensor

IntPair = Union[int, Tuple[int, int]]


def _pair(value: IntPair) -> Tuple[int, int]:
    if isinstance(value, int):
        return value, value
    return int(value[0]), int(value[1])


def _as_batched(x: DiffTensor, op: str) -> Tuple[DiffTensor, bool]:
    if x.ndim == 4:
        return x, False
    if x.ndim == 3:
        return x.reshape((1,) + x.shape), True
    raise ShapeError(f"{op} expects C×H×W or B×C×H×W input, got shape {x.shape}")


def _unbatch(x: DiffTensor, squeezed: bool) -> DiffTensor:
    return x.reshape(x.shape[1:]) if squeezed else x


def conv2d(
    x: DiffTensor,
    weight: DiffTensor,
    bias: Optional[DiffTensor] = None,
    stride: IntPair = 1,
    padding: IntPair = 0,
) -> DiffTensor:
    """2-D cross-correlation (no kernel flip)"""
    x, squeezed = _as_batched(x, "conv2d")
    if weight.ndim != 4:
        raise ShapeError(f"conv2d weight must be C_out×C_in×kH×kW, got shape {weight.shape}")
    batch, channels, height, width = x.shape
    out_channels, in_channels, kh, kw = weight.shape
    if channels != in_channels:
        raise ShapeError(f"conv2d input has {channels} channels but weight expects {in_channels}")
    if bias is not None and bias.shape != (out_channels,):
        raise ShapeError(f"conv2d bias must have shape ({out_channels},), got {bias.shape}")
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    out_h = (height + 2 * ph - kh) // sh + 1
    out_w = (width + 2 * pw - kw) // sw + 1
    if out_h < 1 or out_w < 1:
        raise ShapeError(
            f"conv2d output would be empty: input {height}×{width}, kernel {kh}×{kw}, "
            f"stride {sh}×{sw}, padding {ph}×{pw}"
        )

    padded = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    # (B, C, out_h, out_w, kh, kw)
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw][:, :, :out_h, :out_w]
    w = weight.data
    out = np.tensordot(windows, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data.reshape(1, -1, 1, 1)
    out = np.ascontiguousarray(out, dtype=x.dtype)

    def backward(g):
        grad_w = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3])).astype(w.dtype, copy=False)
        grad_padded = np.zeros_like(padded)
        for i in range(kh):
            for j in range(kw):
                contribution = np.tensordot(g, w[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
                grad_padded[:, :, i : i + sh * out_h : sh, j : j + sw * out_w : sw] += contribution
        grad_x = grad_padded[:, :, ph : ph + height, pw : pw + width]
        grads = [grad_x, grad_w]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _unbatch(DiffTensor._from_op(out, parents, backward), squeezed)


def glu(x: DiffTensor, channel_axis: int = -3) -> DiffTensor:
    """Gated linear unit: first half ⊙ sigmoid(second half) along `channel_axis`"""
    axis = channel_axis % x.ndim
    size = x.shape[axis]
    if size % 2:
        raise ShapeError(f"glu needs an even size along axis {axis}, got {size}")
    half = size // 2
    first = [slice(None)] * x.ndim
    second = [slice(None)] * x.ndim
    first[axis] = slice(0, half)
    second[axis] = slice(half, size)
    return x[tuple(first)] * x[tuple(second)].sigmoid()


def silu(x: DiffTensor) -> DiffTensor:
    """Sigmoid linear unit x·σ(x)"""
    a = x.data
    s = expit(a)

    def backward(g):
        return (g * s * (1 + a * (1 - s)),)

    return DiffTensor._from_op(a * s, (x,), backward)


def instance_norm(x: DiffTensor, gamma: DiffTensor, beta: DiffTensor, eps: float = 1e-5) -> DiffTensor:
    """Per-instance, per-channel normalization followed by an affine map"""
    if eps <= 0:
        raise ValueError("instance_norm eps must be positive")
    x, squeezed = _as_batched(x, "instance_norm")
    channels = x.shape[1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise ShapeError(f"instance_norm gamma/beta must have shape ({channels},)")
    axes = (2, 3)
    centred = x - x.mean(axis=axes, keepdims=True)
    variance = (centred * centred).mean(axis=axes, keepdims=True)
    normalized = centred * (variance + eps) ** -0.5
    out = normalized * gamma.reshape(1, channels, 1, 1) + beta.reshape(1, channels, 1, 1)
    return _unbatch(out, squeezed)


def pixel_shuffle(x: DiffTensor, r: int) -> DiffTensor:
    """Depth-to-space: out(c, r·h+i, r·w+j) = in(c·r²+i·r+j, h, w)"""
    x, squeezed = _as_batched(x, "pixel_shuffle")
    batch, channels, height, width = x.shape
    if r < 1 or channels % (r * r):
        raise ShapeError(f"pixel_shuffle needs channels divisible by r²={r * r}, got {channels}")
    c = channels // (r * r)
    out = (
        x.reshape(batch, c, r, r, height, width)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(batch, c, height * r, width * r)
    )
    return _unbatch(out, squeezed)


def space_to_depth(x: DiffTensor, r: int) -> DiffTensor:
    """Inverse of pixel_shuffle under the same index convention"""
    x, squeezed = _as_batched(x, "space_to_depth")
    batch, channels, height, width = x.shape
    if r < 1 or height % r or width % r:
        raise ShapeError(f"space_to_depth needs H and W divisible by {r}, got {height}×{width}")
    h, w = height // r, width // r
    out = (
        x.reshape(batch, channels, h, r, w, r)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(batch, channels * r * r, h, w)
    )
    return _unbatch(out, squeezed)
