"""Differentiable layer operations on :class:`Tensor`.

Convolution and pooling accept an optional leading batch axis: ``conv2d``
takes ``(C, F, T)`` or ``(B, C, F, T)`` and returns the matching rank.
"""

from __future__ import annotations

import numpy as np
import scipy.fft
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError
from .tensor import Tensor, as_tensor

SELU_ALPHA = 1.6732632423543772
SELU_SCALE = 1.0507009873554805

# conv1d switches to FFT correlation above this kernel length (stride 1 only)
FFT_KERNEL_THRESHOLD = 64


def _pair(v):
    return (v, v) if isinstance(v, int) else tuple(v)


def _pad_spec(padding):
    """Normalise padding to ((top, bottom), (left, right))."""
    if isinstance(padding, int):
        return ((padding, padding), (padding, padding))
    out = []
    for p in padding:
        out.append((p, p) if isinstance(p, int) else tuple(p))
    return tuple(out)


def _batched(x, rank):
    if x.ndim == rank:
        return x.unsqueeze(0), True
    if x.ndim == rank + 1:
        return x, False
    raise ShapeError(f"expected rank {rank} or {rank + 1} input, got shape {x.shape}")


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """Cross-correlation of ``x`` (C_in, F, T) with ``weight`` (C_out, C_in, kF, kT).

    ``padding`` is an int, a per-axis pair, or per-axis (before, after) pairs,
    so even kernels can keep the input size, e.g. ``((1, 0), (1, 1))`` for a
    (2, 3) kernel.
    """
    x, squeeze = _batched(as_tensor(x), 3)
    weight = as_tensor(weight)
    if weight.ndim != 4:
        raise ShapeError(f"conv2d weight must be rank 4, got shape {weight.shape}")
    B, C, H, W = x.shape
    O, Cw, kh, kw = weight.shape
    if Cw != C:
        raise ShapeError(
            f"conv2d channel axis mismatch: input has {C} channels, weight expects {Cw}")
    sh, sw = _pair(stride)
    (pt, pb), (pl, pr) = _pad_spec(padding)
    Hp, Wp = H + pt + pb, W + pl + pr
    if kh > Hp:
        raise ShapeError(f"conv2d kernel height {kh} exceeds padded frequency axis {Hp}")
    if kw > Wp:
        raise ShapeError(f"conv2d kernel width {kw} exceeds padded time axis {Wp}")
    Ho, Wo = (Hp - kh) // sh + 1, (Wp - kw) // sw + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    out = np.tensordot(win, weight.data, axes=([1, 4, 5], [1, 2, 3]))
    out = out.transpose(0, 3, 1, 2)
    w_data = weight.data

    def backward(g):
        gx = gw = None
        if weight.requires_grad:
            gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    contrib = np.tensordot(g, w_data[:, :, i, j], axes=([1], [0]))
                    gxp[:, :, i:i + sh * Ho:sh, j:j + sw * Wo:sw] += \
                        contrib.transpose(0, 3, 1, 2)
            gx = gxp[:, :, pt:pt + H, pl:pl + W]
        return gx, gw

    y = Tensor._from_op(np.ascontiguousarray(out), (x, weight), backward)
    if bias is not None:
        y = y + as_tensor(bias).reshape(1, O, 1, 1)
    return y[0] if squeeze else y


def _conv1d_fft(x, weight):
    """Stride-1, unpadded correlation through real FFTs."""
    B, C, L = x.shape
    O, _, K = weight.shape
    Lo = L - K + 1
    n = scipy.fft.next_fast_len(L + K - 1, real=True)
    X = scipy.fft.rfft(x.data, n, axis=-1)
    Wr = scipy.fft.rfft(weight.data[:, :, ::-1], n, axis=-1)
    Y = np.einsum("bcf,ocf->bof", X, Wr)
    out = scipy.fft.irfft(Y, n, axis=-1)[:, :, K - 1:K - 1 + Lo]
    w_data = weight.data

    def backward(g):
        gx = gw = None
        G = scipy.fft.rfft(g, n, axis=-1)
        if weight.requires_grad:
            R = np.einsum("bcf,bof->ocf", X, np.conj(G))
            gw = scipy.fft.irfft(R, n, axis=-1)[:, :, :K]
        if x.requires_grad:
            Wf = scipy.fft.rfft(w_data, n, axis=-1)
            gx = scipy.fft.irfft(np.einsum("bof,ocf->bcf", G, Wf), n, axis=-1)[:, :, :L]
        return gx, gw

    return Tensor._from_op(np.ascontiguousarray(out), (x, weight), backward)


def conv1d(x, weight, bias=None, stride=1, padding=0):
    """Cross-correlation of ``x`` (C_in, L) with ``weight`` (C_out, C_in, K).

    Output length is ``floor((L + 2*padding - K) / stride) + 1``.
    """
    x, squeeze = _batched(as_tensor(x), 2)
    weight = as_tensor(weight)
    if weight.ndim != 3:
        raise ShapeError(f"conv1d weight must be rank 3, got shape {weight.shape}")
    B, C, L = x.shape
    O, Cw, K = weight.shape
    if Cw != C:
        raise ShapeError(
            f"conv1d channel axis mismatch: input has {C} channels, weight expects {Cw}")
    if K > L + 2 * padding:
        raise ShapeError(
            f"conv1d kernel length {K} exceeds padded length axis {L + 2 * padding}")
    if stride == 1 and K >= FFT_KERNEL_THRESHOLD:
        if padding:
            x = pad(x, ((0, 0), (0, 0), (padding, padding)))
        y = _conv1d_fft(x, weight)
    else:
        y = conv2d(x.unsqueeze(2), weight.unsqueeze(2), stride=(1, stride),
                   padding=((0, 0), (padding, padding)))
        y = y.reshape(y.shape[0], y.shape[1], y.shape[3])
    if bias is not None:
        y = y + as_tensor(bias).reshape(1, O, 1)
    return y[0] if squeeze else y


def pad(x, widths):
    x = as_tensor(x)
    widths = tuple(tuple(w) for w in widths)
    region = tuple(slice(lo, lo + n) for (lo, _), n in zip(widths, x.shape))
    return Tensor._from_op(np.pad(x.data, widths), (x,), lambda g: (g[region],))


def maxpool2d(x, k):
    """Non-overlapping max pooling with window = stride = ``k`` (int or pair).

    Trailing rows/columns that do not fill a window are dropped.
    """
    x, squeeze = _batched(as_tensor(x), 3)
    kh, kw = _pair(k)
    B, C, H, W = x.shape
    Ho, Wo = H // kh, W // kw
    if Ho == 0 or Wo == 0:
        raise ShapeError(f"maxpool2d window {(kh, kw)} larger than input {(H, W)}")
    crop = x.data[:, :, :Ho * kh, :Wo * kw]
    blocks = crop.reshape(B, C, Ho, kh, Wo, kw).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(B, C, Ho, Wo, kh * kw)
    idx = np.argmax(blocks, axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gb = np.zeros((B, C, Ho, Wo, kh * kw))
        np.put_along_axis(gb, idx[..., None], g[..., None], axis=-1)
        gb = gb.reshape(B, C, Ho, Wo, kh, kw).transpose(0, 1, 2, 4, 3, 5)
        full = np.zeros((B, C, H, W))
        full[:, :, :Ho * kh, :Wo * kw] = gb.reshape(B, C, Ho * kh, Wo * kw)
        return (full,)

    y = Tensor._from_op(out, (x,), backward)
    return y[0] if squeeze else y


def selu(x):
    x = as_tensor(x)
    pos = x.data > 0
    neg_part = SELU_SCALE * SELU_ALPHA * np.expm1(np.minimum(x.data, 0.0))
    out = np.where(pos, SELU_SCALE * x.data, neg_part)
    slope = np.where(pos, SELU_SCALE, neg_part + SELU_SCALE * SELU_ALPHA)
    return Tensor._from_op(out, (x,), lambda g: (g * slope,))


def batchnorm(x, gamma, beta, running_mean, running_var, training,
              momentum=0.1, eps=1e-5):
    """Normalise over every axis except axis 1 (the channel axis).

    In training mode the batch statistics are used and ``running_mean`` /
    ``running_var`` (plain ndarrays) are updated in place; the running
    variance uses the unbiased estimate.
    """
    x = as_tensor(x)
    C = x.shape[1]
    axes = tuple(i for i in range(x.ndim) if i != 1)
    bshape = [1] * x.ndim
    bshape[1] = C
    if training:
        mu = x.mean(axis=axes, keepdims=True)
        centred = x - mu
        var = (centred * centred).mean(axis=axes, keepdims=True)
        n = x.size // C
        with np.errstate(all="ignore"):
            running_mean *= 1.0 - momentum
            running_mean += momentum * mu.data.reshape(C)
            unbiased = var.data.reshape(C) * (n / max(n - 1, 1))
            running_var *= 1.0 - momentum
            running_var += momentum * unbiased
        xhat = centred / (var + eps) ** 0.5
    else:
        xhat = (x - running_mean.reshape(bshape)) / np.sqrt(
            running_var.reshape(bshape) + eps)
    return xhat * as_tensor(gamma).reshape(bshape) + as_tensor(beta).reshape(bshape)


def softmax(x, axis=-1):
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._from_op(out, (x,), backward)


def log_softmax(x, axis=-1):
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def backward(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return Tensor._from_op(out, (x,), backward)


def weighted_cross_entropy(logits, labels, class_weights=None):
    """Mean over the batch of ``-w[label] * log_softmax(logits)[label]``."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or logits.shape[0] != labels.shape[0]:
        raise ShapeError(
            f"logits {logits.shape} do not match {labels.shape[0]} labels")
    if class_weights is None:
        class_weights = np.ones(logits.shape[1])
    w = np.asarray(class_weights, dtype=np.float64)[labels]
    logp = log_softmax(logits, axis=1)
    picked = logp[np.arange(len(labels)), labels]
    return -(picked * w).mean()


def linear(x, weight, bias=None):
    y = as_tensor(x) @ weight
    return y + bias if bias is not None else y


def dropout(x, p, rng, training):
    if not training or p <= 0.0:
        return x
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * keep
