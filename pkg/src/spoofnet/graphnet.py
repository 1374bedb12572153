"""Graph attention back-end.

Temporal and spectral node sets each pass a graph module (attention layer
plus top-k pooling). A heterogeneous stacking layer fuses them with a stack
node; two parallel branches of (stacking layer -> pooling) x 2 are merged by
an element-wise maximum, read out into five pooled vectors and classified.

Pairwise attention scores are a learned scalar projection of the element-wise
product of the two projected node vectors, ``score_ij = a . (h_i * h_j)``; in
the heterogeneous layer ``a`` depends on the pair type (temporal-temporal,
spectral-spectral or cross-domain).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .aggregation import max_abs_aggregate
from .numerics import (Linear, Module, Tensor, concat, dropout, maximum,
                       parameter, selu, softmax)

TEMPORAL, SPECTRAL, HETEROGENEOUS = "temporal", "spectral", "heterogeneous"


@dataclass
class Graph:
    """Nodes (B, N, d). For heterogeneous graphs the first ``n_temporal``
    rows are temporal nodes and the rest spectral."""

    nodes: Tensor
    domain: str
    n_temporal: int = 0

    def __post_init__(self):
        if self.nodes.ndim == 2:
            self.nodes = self.nodes.unsqueeze(0)
        if self.nodes.shape[1] < 1:
            raise ValueError("a graph needs at least one node")
        if self.domain == TEMPORAL:
            self.n_temporal = self.nodes.shape[1]
        elif self.domain == SPECTRAL:
            self.n_temporal = 0

    @property
    def n_nodes(self):
        return self.nodes.shape[1]

    @property
    def dim(self):
        return self.nodes.shape[2]

    @property
    def n_spectral(self):
        return self.n_nodes - self.n_temporal

    def split(self):
        """Temporal and spectral sub-graphs of a heterogeneous graph."""
        nt = self.n_temporal
        return (Graph(self.nodes[:, :nt], TEMPORAL), Graph(self.nodes[:, nt:], SPECTRAL))


def _init_vector(rng, d):
    return parameter(rng.uniform(-1.0, 1.0, d) / np.sqrt(d))


def pair_scores(h, a, g=None):
    """score[b, i, j] = sum_k a_k h[b,i,k] g[b,j,k]."""
    g = h if g is None else g
    return (h * a) @ g.transpose(0, 2, 1)


class GATLayer(Module):
    def __init__(self, d_in, d_out, rng):
        self.proj = Linear(d_in, d_out, rng)
        self.att = _init_vector(rng, d_out)

    def attention(self, h):
        return softmax(pair_scores(h, self.att), axis=-1)

    def forward(self, g):
        h = self.proj(g.nodes)
        return Graph(selu(self.attention(h) @ h), g.domain)


def gat_layer(g, params):
    return params(g)


class GraphPool(Module):
    """Keep the ``max(1, floor(k N))`` best-scoring nodes (original order
    preserved), each scaled by the logistic of its score. Equal scores are
    broken in favour of the lower node index."""

    def __init__(self, d, rng, ratio=0.5):
        self.proj = Linear(d, 1, rng)
        self.ratio = ratio

    def keep_count(self, n):
        return max(1, int(np.floor(self.ratio * n)))

    def select(self, scores):
        """Indices kept per batch row, shape (B, keep), ascending."""
        keep = self.keep_count(scores.shape[1])
        order = np.argsort(-scores, axis=1, kind="stable")[:, :keep]
        return np.sort(order, axis=1)

    def forward(self, g):
        x = g.nodes
        B, N, d = x.shape
        s = self.proj(x).reshape(B, N)
        idx = self.select(s.data)
        rows = np.arange(B)[:, None]
        kept = x[rows, idx] * s[rows, idx].sigmoid().unsqueeze(2)
        return Graph(kept, g.domain)


def graph_pool(g, params):
    return params(g)


class HSGAL(Module):
    """Heterogeneous stacking graph attention layer.

    Both node sets are projected to a common dimension ``d`` and attended as
    one graph with a scorer per pair type. The stack node attends over all
    projected nodes; an incoming stack node initialises it, otherwise the node
    mean does.
    """

    def __init__(self, d_t, d_s, d, rng, d_stack=None):
        self.proj_t = Linear(d_t, d, rng)
        self.proj_s = Linear(d_s, d, rng)
        self.att_tt = _init_vector(rng, d)
        self.att_ss = _init_vector(rng, d)
        self.att_ts = _init_vector(rng, d)
        self.att_stack = _init_vector(rng, d)
        self.out = Linear(d, d, rng)
        self.stack_in = Linear(d_stack, d, rng) if d_stack is not None else None
        self.stack_agg = Linear(d, d, rng)
        self.stack_self = Linear(d, d, rng, bias=False)

    def projected(self, gt, gs):
        return concat([self.proj_t(gt.nodes), self.proj_s(gs.nodes)], axis=1)

    def attention(self, h, n_temporal):
        N = h.shape[1]
        is_t = np.arange(N) < n_temporal
        tt = np.outer(is_t, is_t).astype(float)
        ss = np.outer(~is_t, ~is_t).astype(float)
        cross = 1.0 - tt - ss
        scores = (pair_scores(h, self.att_tt) * tt + pair_scores(h, self.att_ss) * ss
                  + pair_scores(h, self.att_ts) * cross)
        return softmax(scores, axis=-1)

    def forward(self, gt, gs, stack=None):
        h = self.projected(gt, gs)
        alpha = self.attention(h, gt.n_nodes)
        nodes = selu(self.out(alpha @ h))
        if stack is None:
            s0 = h.mean(axis=1)
        elif self.stack_in is not None:
            s0 = self.stack_in(stack)
        else:
            s0 = stack
        beta = softmax((h * (s0 * self.att_stack).unsqueeze(1)).sum(axis=2), axis=1)
        agg = (beta.unsqueeze(2) * h).sum(axis=1)
        new_stack = selu(self.stack_agg(agg) + self.stack_self(s0))
        return Graph(nodes, HETEROGENEOUS, n_temporal=gt.n_nodes), new_stack


def hs_gal(gt, gs, stack, params):
    return params(gt, gs, stack)


class Branch(Module):
    """(HS-GAL -> domain-wise pooling) twice; the first layer sets the width."""

    def __init__(self, d_in, d, rng, ratio=0.5, second_ratio=1.0):
        self.hs1 = HSGAL(d_in, d_in, d, rng, d_stack=d_in)
        self.pool_t1 = GraphPool(d, rng, ratio)
        self.pool_s1 = GraphPool(d, rng, ratio)
        self.hs2 = HSGAL(d, d, d, rng, d_stack=d)
        self.pool_t2 = GraphPool(d, rng, second_ratio)
        self.pool_s2 = GraphPool(d, rng, second_ratio)

    def forward(self, g, stack):
        for hs, pool_t, pool_s in ((self.hs1, self.pool_t1, self.pool_s1),
                                   (self.hs2, self.pool_t2, self.pool_s2)):
            gt, gs = g.split()
            g, stack = hs(gt, gs, stack)
            gt, gs = g.split()
            gt, gs = pool_t(gt), pool_s(gs)
            g = Graph(concat([gt.nodes, gs.nodes], axis=1), HETEROGENEOUS, gt.n_nodes)
        return g, stack


def mgo(branch_a, branch_b):
    """Element-wise maximum of two (graph, stack) branch outputs."""
    ga, sa = branch_a
    gb, sb = branch_b
    if ga.nodes.shape != gb.nodes.shape or ga.n_temporal != gb.n_temporal:
        raise ValueError("branch outputs must share node layout")
    return Graph(maximum(ga.nodes, gb.nodes), HETEROGENEOUS, ga.n_temporal), maximum(sa, sb)


def readout(g, stack):
    """[max_t, mean_t, max_s, mean_s, stack] concatenated -> (B, 5 d)."""
    gt, gs = g.split()
    if stack.ndim == 1:
        stack = stack.unsqueeze(0)
    parts = [gt.nodes.max(axis=1), gt.nodes.mean(axis=1),
             gs.nodes.max(axis=1), gs.nodes.mean(axis=1), stack]
    return concat(parts, axis=1)


def classify(vec, head):
    return head(vec)


class AasistBackend(Module):
    def __init__(self, channels, rng, gat_dim=64, hs_dim=64, branch_dim=32,
                 pool_ratio=0.5, second_pool_ratio=1.0, dropout=0.0):
        self.gat_t = GATLayer(channels, gat_dim, rng)
        self.pool_t = GraphPool(gat_dim, rng, pool_ratio)
        self.gat_s = GATLayer(channels, gat_dim, rng)
        self.pool_s = GraphPool(gat_dim, rng, pool_ratio)
        self.fusion = HSGAL(gat_dim, gat_dim, hs_dim, rng)
        self.branches = [Branch(hs_dim, branch_dim, rng, pool_ratio, second_pool_ratio)
                         for _ in range(2)]
        self.head = Linear(5 * branch_dim, 2, rng)
        self.dropout = dropout
        self._drop_rng = np.random.default_rng(int(rng.integers(2 ** 32)))

    def forward(self, t_nodes, f_nodes, trace=None):
        gt = self.pool_t(self.gat_t(Graph(t_nodes, TEMPORAL)))
        gs = self.pool_s(self.gat_s(Graph(f_nodes, SPECTRAL)))
        g_st, stack = self.fusion(gt, gs)
        outs = [branch(g_st, stack) for branch in self.branches]
        g, stack = mgo(*outs)
        vec = readout(g, stack)
        logits = self.head(dropout(vec, self.dropout, self._drop_rng, self.training))
        if trace is not None:
            trace.update({"G_t": gt.nodes.shape[1:], "G_s": gs.nodes.shape[1:],
                          "G_st": g_st.nodes.shape[1:],
                          "branch": [(o[0].nodes.shape[1:], o[1].shape[1:]) for o in outs],
                          "mgo": (g.nodes.shape[1:], stack.shape[1:]),
                          "readout": vec.shape[1:], "output": logits.shape[1:]})
        return logits


class SimplifiedBackend(Module):
    """Max-abs pooling, one graph attention layer, node mean, linear head."""

    def __init__(self, channels, rng, dim=64):
        self.gat = GATLayer(channels, dim, rng)
        self.head = Linear(dim, 2, rng)

    def forward(self, S):
        S = S if isinstance(S, Tensor) else Tensor(S)
        if S.ndim == 3:
            S = S.unsqueeze(0)
        t, f = max_abs_aggregate(S)
        g = self.gat(Graph(concat([t, f], axis=1), HETEROGENEOUS, n_temporal=t.shape[1]))
        return self.head(g.nodes.mean(axis=1))


def simplified_backend(S, params):
    return params(S)
