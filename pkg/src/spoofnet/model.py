"""Full countermeasure: front-end -> residual encoder -> aggregation -> back-end.

Logit column 0 is bona fide and column 1 spoof; the CM score is their
difference, so higher means more bona fide.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .aggregation import MaxAbsAggregation, SelfAttentiveAggregation
from .errors import ConfigError
from .frontend import (PROJ_DIM, SEGMENT_LENGTH, SSL_DIM, PostProcessing, ProjectionHead,
                       ResidualEncoder, StubSslEncoder, mel_init_filterbank, sinc_forward)
from .graphnet import AasistBackend, SimplifiedBackend
from .numerics import Module, Tensor

FRONT_ENDS = ("sinc", "ssl_file", "ssl_stub")
AGGREGATIONS = ("max_abs", "self_attentive")
BACKENDS = ("aasist", "simplified")
BONA_FIDE, SPOOF = 0, 1


def _pair(v):
    return tuple(v) if isinstance(v, (list, tuple)) else (v, v)


@dataclass(frozen=True)
class ModelConfig:
    front_end: str = "ssl_stub"
    aggregation: str = "self_attentive"
    backend: str = "aasist"
    segment_length: int = SEGMENT_LENGTH
    sinc_filters: int = 70
    sinc_kernel: int = 129
    post_pool: tuple = (3, 3)
    ssl_dim: int = SSL_DIM
    ssl_hidden: int = 64
    proj_dim: int = PROJ_DIM
    encoder_stages: tuple = ((32, 2), (64, 4))
    attention_hidden: int = 128
    gat_dim: int = 64
    hs_dim: int = 64
    branch_dim: int = 32
    pool_ratio: float = 0.5
    branch_second_pool_ratio: float = 1.0
    simple_dim: int = 64
    dropout: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "post_pool", _pair(self.post_pool))
        object.__setattr__(self, "encoder_stages",
                           tuple((int(w), int(n)) for w, n in self.encoder_stages))
        problems = []
        for name, choices in (("front_end", FRONT_ENDS), ("aggregation", AGGREGATIONS),
                              ("backend", BACKENDS)):
            if getattr(self, name) not in choices:
                problems.append(f"{name} must be one of {', '.join(choices)}, "
                                f"got {getattr(self, name)!r}")
        if self.backend == "simplified" and self.aggregation != "max_abs":
            problems.append("the simplified back-end pools with max-abs; set aggregation = max_abs")
        if not 0 < self.pool_ratio <= 1 or not 0 < self.branch_second_pool_ratio <= 1:
            problems.append("pooling ratios must lie in (0, 1]")
        if not self.encoder_stages:
            problems.append("encoder_stages must not be empty")
        if not 0 <= self.dropout < 1:
            problems.append("dropout must lie in [0, 1)")
        if problems:
            raise ConfigError("; ".join(problems))

    @classmethod
    def from_mapping(cls, mapping):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise ConfigError(f"unknown model keys: {', '.join(sorted(unknown))}")
        return cls(**mapping)


class CountermeasureModel(Module):
    def __init__(self, cfg, rng):
        self.cfg = cfg
        if cfg.front_end == "sinc":
            self.filterbank = mel_init_filterbank(cfg.sinc_filters, cfg.sinc_kernel)
        else:
            self.ssl = StubSslEncoder(rng, cfg.ssl_dim, cfg.ssl_hidden) \
                if cfg.front_end == "ssl_stub" else None
            self.head = ProjectionHead(rng, cfg.ssl_dim, cfg.proj_dim)
        self.post = PostProcessing(cfg.post_pool)
        self.encoder = ResidualEncoder(rng, cfg.encoder_stages)
        channels = self.encoder.channels
        if cfg.backend == "simplified":
            self.backend = SimplifiedBackend(channels, rng, cfg.simple_dim)
            self.aggregator = None
        else:
            self.aggregator = (SelfAttentiveAggregation(channels, rng, cfg.attention_hidden)
                               if cfg.aggregation == "self_attentive" else MaxAbsAggregation())
            self.backend = AasistBackend(channels, rng, cfg.gat_dim, cfg.hs_dim, cfg.branch_dim,
                                         cfg.pool_ratio, cfg.branch_second_pool_ratio,
                                         cfg.dropout)

    def front(self, x, trace=None):
        """Waveforms (B, L), or SSL features (B, T, D) for ``ssl_file``, -> (B, 1, F, T)."""
        x = x if isinstance(x, Tensor) else Tensor(x)
        if self.cfg.front_end == "sinc":
            m = sinc_forward(x, self.filterbank, self.cfg.segment_length)
            _note(trace, "sinc", m)
        else:
            feat = self.ssl(x) if self.ssl is not None else x
            if feat.ndim == 2:
                feat = feat.unsqueeze(0)
            _note(trace, "ssl", feat)
            proj = self.head(feat)
            _note(trace, "projection", proj)
            m = proj.transpose(0, 2, 1)
            _note(trace, "transpose", m)
            m = m.unsqueeze(1)
            _note(trace, "add_channel", m)
        m = self.post(m)
        _note(trace, "post_processing", m)
        return m

    def forward(self, x, trace=None):
        m = self.front(x, trace)
        blocks = [] if trace is not None else None
        S = self.encoder(m, blocks)
        if trace is not None:
            trace["res_blocks"] = [b[1:] for b in blocks]
        _note(trace, "encoder", S)
        if self.aggregator is None:
            return self.backend(S)
        t, f = self.aggregator(S)
        _note(trace, "t", t)
        _note(trace, "f", f)
        return self.backend(t, f, trace)


def _note(trace, key, t):
    if trace is not None:
        trace[key] = t.shape[1:]


def cm_scores(logits):
    """Bona fide logit minus spoof logit."""
    data = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    return data[:, BONA_FIDE] - data[:, SPOOF]


def build_model(cfg, seed):
    return CountermeasureModel(cfg, np.random.default_rng(seed))
