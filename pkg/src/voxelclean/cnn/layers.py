"""Forward and backward kernels for the layer kinds used by the patch CNN.

Tensors are laid out channel-first with any number of batch axes between
the channel axis and the three trailing spatial axes, e.g. ``(C, D, H, W)``
for one instance or ``(C, B, D, H, W)`` for a minibatch.
"""
from __future__ import annotations

import itertools

import numpy as np

_OFFSETS = tuple(itertools.product(range(3), repeat=3))
_SPATIAL = (-3, -2, -1)


def _pad_spatial(x: np.ndarray) -> np.ndarray:
    return np.pad(x, [(0, 0)] * (x.ndim - 3) + [(1, 1)] * 3)


def conv3d_same(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """3x3x3 cross-correlation with one voxel of zero padding per side."""
    cin = x.shape[0]
    cout = kernel.shape[0]
    if kernel.shape[1:] != (cin, 3, 3, 3):
        raise ValueError(f"kernel shape {kernel.shape} incompatible with {cin} input channels")
    d, h, w = x.shape[-3:]
    xp = _pad_spatial(x)
    dtype = np.result_type(x, kernel, bias)
    out = np.empty((cout,) + x.shape[1:], dtype=dtype)
    out[...] = np.asarray(bias).reshape((cout,) + (1,) * (x.ndim - 1))
    flat = out.reshape(cout, -1)
    taps = np.ascontiguousarray(kernel.transpose(2, 3, 4, 0, 1))
    for a, b, c in _OFFSETS:
        xs = xp[..., a:a + d, b:b + h, c:c + w].reshape(cin, -1)
        flat += taps[a, b, c] @ xs
    return out


def conv3d_same_backward(x: np.ndarray, kernel: np.ndarray, grad_out: np.ndarray):
    """Gradients ``(d_input, d_kernel, d_bias)`` of :func:`conv3d_same`."""
    cin = x.shape[0]
    cout = kernel.shape[0]
    d, h, w = x.shape[-3:]
    xp = _pad_spatial(x)
    gp = np.zeros_like(xp, dtype=np.result_type(x, grad_out))
    g = grad_out.reshape(cout, -1)
    d_kernel = np.empty_like(kernel)
    taps = np.ascontiguousarray(kernel.transpose(2, 3, 4, 0, 1))
    batch_shape = x.shape[1:]
    for a, b, c in _OFFSETS:
        xs = xp[..., a:a + d, b:b + h, c:c + w].reshape(cin, -1)
        d_kernel[:, :, a, b, c] = g @ xs.T
        gp[..., a:a + d, b:b + h, c:c + w] += (taps[a, b, c].T @ g).reshape((cin,) + batch_shape)
    d_bias = g.sum(axis=1)
    return gp[..., 1:-1, 1:-1, 1:-1], d_kernel, d_bias


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * (x > 0)


def _norm_axes(x: np.ndarray, per_instance: bool) -> tuple[int, ...]:
    if per_instance:
        return tuple(range(x.ndim - 3, x.ndim))
    return tuple(range(1, x.ndim))


def _channel_view(v: np.ndarray, ndim: int) -> np.ndarray:
    return np.asarray(v).reshape((-1,) + (1,) * (ndim - 1))


def normalize_forward(x, scale, shift, eps, per_instance=True, stats=None):
    """Shared instance/batch normalisation.

    ``per_instance`` normalises each channel of each sample over its spatial
    extent (instance norm); otherwise statistics pool the whole minibatch
    (batch norm).  ``stats`` overrides the statistics with fixed
    ``(mean, var)`` per channel, as batch norm does at inference time.
    Returns ``(out, cache)``.
    """
    axes = _norm_axes(x, per_instance)
    if stats is None:
        mean = x.mean(axis=axes, keepdims=True)
        xc = x - mean
        var = (xc * xc).mean(axis=axes, keepdims=True)
    else:
        mean = _channel_view(stats[0], x.ndim).astype(x.dtype)
        var = _channel_view(stats[1], x.ndim).astype(x.dtype)
        xc = x - mean
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std
    out = xhat
    if scale is not None:
        out = xhat * _channel_view(scale, x.ndim) + _channel_view(shift, x.ndim)
    return out, (xhat, inv_std, axes, mean, var)


def normalize_backward(grad_out, scale, cache):
    """Returns ``(d_input, d_scale, d_shift)``; the last two are None when not affine."""
    xhat, inv_std, axes, _, _ = cache
    param_axes = tuple(range(1, grad_out.ndim))
    if scale is not None:
        d_scale = (grad_out * xhat).sum(axis=param_axes)
        d_shift = grad_out.sum(axis=param_axes)
        dxhat = grad_out * _channel_view(scale, grad_out.ndim)
    else:
        d_scale = d_shift = None
        dxhat = grad_out
    dx = inv_std * (dxhat - dxhat.mean(axis=axes, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=axes, keepdims=True))
    return dx, d_scale, d_shift


def instance_norm(x, scale=None, shift=None, eps: float = 1e-5) -> np.ndarray:
    """Per-sample, per-channel standardisation over the spatial extent."""
    return normalize_forward(x, scale, shift, eps, per_instance=True)[0]


def batch_norm(x, scale=None, shift=None, eps: float = 1e-5) -> np.ndarray:
    """Per-channel standardisation pooled over the minibatch (training-mode statistics)."""
    return normalize_forward(x, scale, shift, eps, per_instance=False)[0]
