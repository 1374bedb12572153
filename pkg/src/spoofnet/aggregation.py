"""Turn the encoder map S (C, F, T) into temporal and spectral node sets.

Both aggregators return ``t`` shaped (T, C) and ``f`` shaped (F, C), with a
leading batch axis when S carries one.
"""

from __future__ import annotations

from .numerics import BatchNorm, Conv2d, Module, Tensor, selu, softmax


def _batched(S):
    S = S if isinstance(S, Tensor) else Tensor(S)
    if S.ndim == 3:
        return S.unsqueeze(0), True
    return S, False


def max_abs_aggregate(S):
    """Max of |S| over frequency (temporal nodes) and over time (spectral nodes)."""
    S, squeeze = _batched(S)
    a = S.abs()
    t = a.max(axis=2).transpose(0, 2, 1)
    f = a.max(axis=3).transpose(0, 2, 1)
    return (t[0], f[0]) if squeeze else (t, f)


class AttentionMap(Module):
    """1x1 conv -> SeLU -> BN -> 1x1 conv to one channel, softmax over F x T."""

    def __init__(self, channels, rng, hidden=128):
        self.conv1 = Conv2d(channels, hidden, 1, rng)
        self.bn = BatchNorm(hidden)
        self.conv2 = Conv2d(hidden, 1, 1, rng)

    def forward(self, S):
        return attention_map(S, self)


def attention_map(S, params):
    """Attention weights W (F, T), jointly normalised over the whole grid."""
    S, squeeze = _batched(S)
    B, _, F, T = S.shape
    logits = params.conv2(params.bn(selu(params.conv1(S))))
    W = softmax(logits.reshape(B, F * T), axis=1).reshape(B, F, T)
    return W[0] if squeeze else W


def self_attentive_aggregate(S, W):
    """t[j, c] = sum_f S[c, f, j] W[f, j];  f[i, c] = sum_t S[c, i, t] W[i, t]."""
    S, squeeze = _batched(S)
    W = W if isinstance(W, Tensor) else Tensor(W)
    if W.ndim == 2:
        W = W.unsqueeze(0)
    weighted = S * W.unsqueeze(1)
    t = weighted.sum(axis=2).transpose(0, 2, 1)
    f = weighted.sum(axis=3).transpose(0, 2, 1)
    return (t[0], f[0]) if squeeze else (t, f)


class SelfAttentiveAggregation(Module):
    def __init__(self, channels, rng, hidden=128):
        self.attention = AttentionMap(channels, rng, hidden)

    def forward(self, S):
        return self_attentive_aggregate(S, self.attention(S))


class MaxAbsAggregation(Module):
    def forward(self, S):
        return max_abs_aggregate(S)
