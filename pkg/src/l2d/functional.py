"""Differentiable neural-network primitives built on :class:`l2d.tensor.Tensor`.

Stride-1 convolutions (every convolution the models use) go through real FFTs
sized to the padded input, which keeps the 11x11 style kernels cheap. Strided
convolutions fall back to a loop over kernel offsets.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, _as_tensor

EPS = 1e-5


def _check_conv(x: np.ndarray, kernel: np.ndarray, in_axis: int, name: str) -> None:
    if x.ndim != 4:
        raise ValueError(f"{name}: input must be 4-D (B, C, H, W), got shape {x.shape}")
    if kernel.ndim != 4 or kernel.shape[2] != kernel.shape[3]:
        raise ValueError(f"{name}: kernel must be square 4-D, got shape {kernel.shape}")
    if x.shape[1] != kernel.shape[in_axis]:
        raise ValueError(
            f"{name}: input has {x.shape[1]} channels but kernel {kernel.shape} expects {kernel.shape[in_axis]}"
        )


def _pad(x, padding):
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x


def _rfft(a, size):
    return np.fft.rfft2(a, s=size, axes=(-2, -1))


def _irfft(a, size):
    return np.fft.irfft2(a, s=size, axes=(-2, -1))


def _conv_forward(x, w, stride, padding):
    # x: (B, C, H, W), w: (O, C, k, k) -> (B, O, H', W')
    k = w.shape[-1]
    B, _, H, W = x.shape
    Ho = (H + 2 * padding - k) // stride + 1
    Wo = (W + 2 * padding - k) // stride + 1
    if Ho < 1 or Wo < 1:
        raise ValueError(f"conv2d: kernel {k} too large for input {H}x{W} with padding {padding}")
    xp = _pad(x, padding)
    if stride == 1:
        size = xp.shape[-2:]
        spec = np.einsum("bcuv,ocuv->bouv", _rfft(xp, size), _rfft(w[:, :, ::-1, ::-1], size))
        return np.ascontiguousarray(_irfft(spec, size)[:, :, k - 1 :, k - 1 :])
    out = np.zeros((B, Ho, Wo, w.shape[0]))
    for i in range(k):
        for j in range(k):
            patch = xp[:, :, i : i + stride * Ho : stride, j : j + stride * Wo : stride]
            out += np.tensordot(patch, w[:, :, i, j], axes=([1], [1]))
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def _conv_input_grad(g, w, x_shape, stride, padding):
    # adjoint of _conv_forward w.r.t. x; g: (B, O, Ho, Wo)
    k = w.shape[-1]
    B, C, H, W = x_shape
    Ho, Wo = g.shape[2], g.shape[3]
    size = (H + 2 * padding, W + 2 * padding)
    if stride == 1:
        gx = _irfft(np.einsum("bouv,ocuv->bcuv", _rfft(g, size), _rfft(w, size)), size)
    else:
        gx = np.zeros((B, size[0], size[1], C))
        for i in range(k):
            for j in range(k):
                gx[:, i : i + stride * Ho : stride, j : j + stride * Wo : stride] += np.tensordot(
                    g, w[:, :, i, j], axes=([1], [0])
                )
        gx = gx.transpose(0, 3, 1, 2)
    if padding:
        gx = gx[:, :, padding:-padding, padding:-padding]
    return np.ascontiguousarray(gx)


def _conv_kernel_grad(g, x, k, stride, padding):
    Ho, Wo = g.shape[2], g.shape[3]
    xp = _pad(x, padding)
    if stride == 1:
        size = xp.shape[-2:]
        spec = np.einsum("bouv,bcuv->ocuv", np.conj(_rfft(g, size)), _rfft(xp, size))
        return np.ascontiguousarray(_irfft(spec, size)[:, :, :k, :k])
    gw = np.empty((g.shape[1], x.shape[1], k, k))
    for i in range(k):
        for j in range(k):
            patch = xp[:, :, i : i + stride * Ho : stride, j : j + stride * Wo : stride]
            gw[:, :, i, j] = np.tensordot(g, patch, axes=([0, 2, 3], [0, 2, 3]))
    return gw


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x`` (B, Cin, H, W) with ``kernel`` (Cout, Cin, k, k)."""
    x, kernel = _as_tensor(x), _as_tensor(kernel)
    _check_conv(x.data, kernel.data, 1, "conv2d")
    xd, wd = x.data, kernel.data
    k = wd.shape[-1]
    out = _conv_forward(xd, wd, stride, padding)

    def backward(g):
        gx = _conv_input_grad(g, wd, xd.shape, stride, padding) if x.requires_grad else None
        gw = _conv_kernel_grad(g, xd, k, stride, padding) if kernel.requires_grad else None
        return gx, gw

    return Tensor._from_op(out, (x, kernel), backward, "conv2d")


def conv_transpose2d(x: Tensor, kernel: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Transposed convolution: ``kernel`` is (Cin, Cout, k, k).

    Output spatial size is ``(H - 1) * stride - 2 * padding + k``, so it undoes
    the shape change of :func:`conv2d` run with the same settings.
    """
    x, kernel = _as_tensor(x), _as_tensor(kernel)
    _check_conv(x.data, kernel.data, 0, "conv_transpose2d")
    xd, wd = x.data, kernel.data
    k = wd.shape[-1]
    B, _, H, W = xd.shape
    Ho = (H - 1) * stride - 2 * padding + k
    Wo = (W - 1) * stride - 2 * padding + k
    if Ho < 1 or Wo < 1:
        raise ValueError(f"conv_transpose2d: padding {padding} too large for input {H}x{W}")
    # conv_transpose(x, w) is the input-gradient of conv2d with kernel w viewed as (Cin=O, Cout=C)
    out = _conv_input_grad(xd, wd, (B, wd.shape[1], Ho, Wo), stride, padding)

    def backward(g):
        gx = _conv_forward(g, wd, stride, padding) if x.requires_grad else None
        gw = _conv_kernel_grad(xd, g, k, stride, padding) if kernel.requires_grad else None
        return gx, gw

    return Tensor._from_op(out, (x, kernel), backward, "conv_transpose2d")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Row-wise affine map ``x @ weight.T + bias``."""
    x, weight = _as_tensor(x), _as_tensor(weight)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ValueError(f"linear: input {x.shape} incompatible with weight {weight.shape}")
    out = x @ weight.T
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.shape != (weight.shape[0],):
            raise ValueError(f"linear: bias shape {bias.shape} does not match {weight.shape[0]} outputs")
        out = out + bias
    return out


def max_pool2d(x: Tensor, size: int = 2) -> Tensor:
    """Non-overlapping ``size`` x ``size`` max pooling (odd trailing rows/cols dropped)."""
    x = _as_tensor(x)
    B, C, H, W = x.shape
    Ho, Wo = H // size, W // size
    if Ho < 1 or Wo < 1:
        raise ValueError(f"max_pool2d: input {H}x{W} smaller than window {size}")
    xd = x.data[:, :, : Ho * size, : Wo * size]
    blocks = xd.reshape(B, C, Ho, size, Wo, size).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, Ho, Wo, size * size)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gb = np.zeros_like(blocks)
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        gb = gb.reshape(B, C, Ho, Wo, size, size).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, Ho * size, Wo * size)
        full = np.zeros((B, C, H, W))
        full[:, :, : Ho * size, : Wo * size] = gb
        return (full,)

    return Tensor._from_op(out, (x,), backward, "max_pool2d")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def backward(g):
        return (g - soft * g.sum(axis=axis, keepdims=True),)

    return Tensor._from_op(out, (x,), backward, "log_softmax")


def l2_normalize(x: Tensor, eps: float = 1e-12) -> Tensor:
    """Scale each row of a (N, D) tensor to unit Euclidean norm."""
    x = _as_tensor(x)
    norm = ((x * x).sum(axis=1, keepdims=True) + eps).sqrt()
    return x / norm


def instance_mean_var(f: Tensor) -> tuple[Tensor, Tensor]:
    """Per-sample, per-channel mean and population variance over H and W."""
    f = _as_tensor(f)
    if f.ndim != 4:
        raise ValueError(f"instance_mean_var: expected (B, C, H, W), got {f.shape}")
    B, C = f.shape[:2]
    mean = f.mean(axis=(2, 3), keepdims=True)
    centered = f - mean
    var = (centered * centered).mean(axis=(2, 3))
    return mean.reshape(B, C), var


def pairwise_sq_dists(a: Tensor, b: Tensor) -> Tensor:
    """Squared Euclidean distances between rows of ``a`` (n, D) and ``b`` (m, D)."""
    a, b = _as_tensor(a), _as_tensor(b)
    aa = (a * a).sum(axis=1, keepdims=True)
    bb = (b * b).sum(axis=1, keepdims=True)
    return aa + bb.T - 2.0 * (a @ b.T)
