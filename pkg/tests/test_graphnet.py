import math

import numpy as np
import pytest

from spoofnet.graphnet import (HETEROGENEOUS, SPECTRAL, TEMPORAL, AasistBackend,
                               GATLayer, Graph, GraphPool, HSGAL, SimplifiedBackend,
                               classify, gat_layer, graph_pool, hs_gal, mgo, readout)
from spoofnet.numerics import Linear, Tensor, no_grad
from spoofnet.numerics.gradcheck import check_gradients

TOL = 1e-10
ALPHA, SCALE = 1.6732632423543772, 1.0507009873554805


def selu_scalar(v):
    return SCALE * v if v > 0 else SCALE * ALPHA * math.expm1(v)


def affine(layer, x):
    W, b = layer.weight.data, layer.bias.data if layer.bias is not None else None
    out = [[sum(x[i][k] * W[k][o] for k in range(len(x[i]))) for o in range(W.shape[1])]
           for i in range(len(x))]
    if b is not None:
        out = [[v + b[o] for o, v in enumerate(row)] for row in out]
    return out


def softmax_list(v):
    m = max(v)
    e = [math.exp(x - m) for x in v]
    return [x / sum(e) for x in e]


def oracle_attend(h, scorer):
    """out_i = selu(sum_j alpha_ij h_j), alpha_i = softmax_j(score(i, j))."""
    n, d = len(h), len(h[0])
    out = []
    for i in range(n):
        scores = [sum(scorer(i, j)[k] * h[i][k] * h[j][k] for k in range(d)) for j in range(n)]
        alpha = softmax_list(scores)
        out.append([sum(alpha[j] * h[j][k] for j in range(n)) for k in range(d)])
    return out


def rand_graph(rng, n, d, domain=TEMPORAL):
    return Graph(Tensor(rng.normal(size=(n, d))), domain)


# -- gat_layer ---------------------------------------------------------------------

@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_gat_matches_double_loop_oracle(n):
    rng = np.random.default_rng(n)
    layer = GATLayer(3, 2, rng)
    x = rng.normal(size=(n, 3))
    got = gat_layer(Graph(Tensor(x), TEMPORAL), layer).nodes.data[0]
    h = affine(layer.proj, x.tolist())
    att = layer.att.data
    agg = oracle_attend(h, lambda i, j: att)
    expect = [[selu_scalar(v) for v in row] for row in agg]
    np.testing.assert_allclose(got, expect, atol=TOL, rtol=0)


def test_gat_single_node_and_identical_nodes():
    rng = np.random.default_rng(0)
    layer = GATLayer(4, 3, rng)
    x = rng.normal(size=(1, 4))
    out = layer(Graph(Tensor(x), SPECTRAL)).nodes.data[0, 0]
    expect = [selu_scalar(v) for v in affine(layer.proj, x.tolist())[0]]
    np.testing.assert_allclose(out, expect, atol=TOL)
    out = layer(Graph(Tensor(np.repeat(x, 3, axis=0)), SPECTRAL)).nodes.data[0]
    np.testing.assert_allclose(out, out[[0, 0, 0]], atol=1e-15)


def test_gat_permutation_equivariance_and_rows_sum_to_one():
    rng = np.random.default_rng(7)
    layer = GATLayer(5, 4, rng)
    for _ in range(20):
        x = rng.normal(size=(6, 5))
        perm = rng.permutation(6)
        a = layer(Graph(Tensor(x), TEMPORAL)).nodes.data[0]
        b = layer(Graph(Tensor(x[perm]), TEMPORAL)).nodes.data[0]
        np.testing.assert_allclose(b, a[perm], atol=1e-12)
        alpha = layer.attention(layer.proj(Tensor(x[None]))).data[0]
        assert np.all(alpha >= 0)
        np.testing.assert_allclose(alpha.sum(axis=1), 1.0, atol=1e-12)


# -- graph_pool -----------------------------------------------------------------------

def oracle_pool(layer, x):
    s = [row[0] for row in affine(layer.proj, x.tolist())]
    keep = max(1, math.floor(layer.ratio * len(s)))
    ranked = sorted(range(len(s)), key=lambda i: (-s[i], i))[:keep]
    return [[v / (1 + math.exp(-s[i])) for v in x[i]] for i in sorted(ranked)]


@pytest.mark.parametrize("n,ratio", [(1, 0.5), (2, 0.5), (3, 0.5), (4, 0.5), (4, 0.75), (4, 1.0)])
def test_pool_matches_sort_oracle(n, ratio):
    rng = np.random.default_rng(n * 10 + int(ratio * 4))
    layer = GraphPool(3, rng, ratio)
    x = rng.normal(size=(n, 3))
    got = graph_pool(Graph(Tensor(x), SPECTRAL), layer).nodes.data[0]
    np.testing.assert_allclose(got, oracle_pool(layer, x), atol=TOL, rtol=0)


def test_pool_reference_counts_and_ties():
    rng = np.random.default_rng(0)
    layer = GraphPool(4, rng)
    assert layer.keep_count(42) == 21 and layer.keep_count(67) == 33
    assert layer.keep_count(1) == 1
    assert layer.select(np.array([[1.0, 2.0, 2.0, 2.0, 0.0]])).tolist() == [[1, 2]]
    full = GraphPool(4, rng, 1.0)
    x = rng.normal(size=(5, 4))
    out = full(Graph(Tensor(x), TEMPORAL)).nodes.data[0]
    s = x @ full.proj.weight.data[:, 0] + full.proj.bias.data[0]
    np.testing.assert_allclose(out, x / (1 + np.exp(-s))[:, None], atol=1e-14)


# -- hs_gal -------------------------------------------------------------------------

def oracle_hs_gal(layer, xt, xs, stack):
    ht = affine(layer.proj_t, xt.tolist())
    hs = affine(layer.proj_s, xs.tolist())
    h = ht + hs
    nt = len(ht)

    def scorer(i, j):
        if i < nt and j < nt:
            return layer.att_tt.data
        if i >= nt and j >= nt:
            return layer.att_ss.data
        return layer.att_ts.data

    agg = oracle_attend(h, scorer)
    nodes = [[selu_scalar(v) for v in row] for row in affine(layer.out, agg)]
    d = len(h[0])
    if stack is None:
        s0 = [sum(row[k] for row in h) / len(h) for k in range(d)]
    else:
        s0 = affine(layer.stack_in, [list(stack)])[0]
    a = layer.att_stack.data
    beta = softmax_list([sum(a[k] * row[k] * s0[k] for k in range(d)) for row in h])
    pooled = [sum(beta[i] * h[i][k] for i in range(len(h))) for k in range(d)]
    agg_part = affine(layer.stack_agg, [pooled])[0]
    self_part = affine(layer.stack_self, [s0])[0]
    new_stack = [selu_scalar(u + v) for u, v in zip(agg_part, self_part)]
    return nodes, new_stack


@pytest.mark.parametrize("nt,ns,with_stack", [(1, 1, False), (2, 2, False), (2, 2, True),
                                              (1, 3, True), (3, 1, False)])
def test_hs_gal_matches_pairwise_enumeration(nt, ns, with_stack):
    rng = np.random.default_rng(nt * 7 + ns)
    layer = HSGAL(3, 2, 4, rng, d_stack=5 if with_stack else None)
    xt, xs = rng.normal(size=(nt, 3)), rng.normal(size=(ns, 2))
    stack = rng.normal(size=5) if with_stack else None
    g, s = hs_gal(Graph(Tensor(xt), TEMPORAL), Graph(Tensor(xs), SPECTRAL),
                  None if stack is None else Tensor(stack[None]), layer)
    nodes, new_stack = oracle_hs_gal(layer, xt, xs, stack)
    assert g.domain == HETEROGENEOUS and g.n_temporal == nt
    np.testing.assert_allclose(g.nodes.data[0], nodes, atol=TOL, rtol=0)
    np.testing.assert_allclose(s.data[0], new_stack, atol=TOL, rtol=0)


def test_hs_gal_degenerate_symmetry():
    rng = np.random.default_rng(3)
    layer = HSGAL(3, 3, 4, rng)
    layer.proj_s.weight.data[:] = layer.proj_t.weight.data
    layer.proj_s.bias.data[:] = layer.proj_t.bias.data
    layer.att_ss.data[:] = layer.att_tt.data
    layer.att_ts.data[:] = layer.att_tt.data
    x = rng.normal(size=(1, 3))
    g, _ = layer(Graph(Tensor(x), TEMPORAL), Graph(Tensor(x), SPECTRAL))
    np.testing.assert_allclose(g.nodes.data[0, 0], g.nodes.data[0, 1], atol=1e-15)


def test_hs_gal_attention_rows_are_distributions():
    rng = np.random.default_rng(1)
    layer = HSGAL(3, 3, 4, rng)
    h = layer.projected(rand_graph(rng, 4, 3), rand_graph(rng, 3, 3, SPECTRAL))
    alpha = layer.attention(h, 4).data[0]
    assert np.all(alpha >= 0)
    np.testing.assert_allclose(alpha.sum(axis=1), 1.0, atol=1e-12)


# -- mgo, readout, classify ---------------------------------------------------------

def test_mgo_commutative_and_idempotent():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n, nt, d = int(rng.integers(2, 6)), 1, int(rng.integers(1, 5))
        nt = int(rng.integers(1, n))

        def branch():
            return (Graph(Tensor(rng.normal(size=(n, d))), HETEROGENEOUS, nt),
                    Tensor(rng.normal(size=(1, d))))

        a, b = branch(), branch()
        ab, ba = mgo(a, b), mgo(b, a)
        np.testing.assert_array_equal(ab[0].nodes.data, ba[0].nodes.data)
        np.testing.assert_array_equal(ab[1].data, ba[1].data)
        aa = mgo(a, a)
        np.testing.assert_array_equal(aa[0].nodes.data, a[0].nodes.data)
        np.testing.assert_array_equal(aa[1].data, a[1].data)
        np.testing.assert_array_equal(ab[0].nodes.data,
                                      np.maximum(a[0].nodes.data, b[0].nodes.data))


def test_mgo_rejects_mismatched_layouts():
    rng = np.random.default_rng(0)
    a = (Graph(Tensor(rng.normal(size=(3, 2))), HETEROGENEOUS, 1), Tensor(np.zeros((1, 2))))
    b = (Graph(Tensor(rng.normal(size=(3, 2))), HETEROGENEOUS, 2), Tensor(np.zeros((1, 2))))
    with pytest.raises(ValueError):
        mgo(a, b)


@pytest.mark.parametrize("n,nt", [(2, 1), (3, 2), (4, 1), (4, 3)])
def test_readout_matches_loop_oracle(n, nt):
    rng = np.random.default_rng(n + nt)
    x, s = rng.normal(size=(n, 3)), rng.normal(size=3)
    got = readout(Graph(Tensor(x), HETEROGENEOUS, nt), Tensor(s)).data[0]
    expect = []
    for rows in (range(nt), range(nt, n)):
        expect += [max(x[i, k] for i in rows) for k in range(3)]
        expect += [sum(x[i, k] for i in rows) / len(rows) for k in range(3)]
    expect += list(s)
    np.testing.assert_allclose(got, expect, atol=TOL, rtol=0)


def test_readout_identical_nodes_max_equals_mean():
    x = np.tile(np.arange(4.0), (5, 1))
    v = readout(Graph(Tensor(x), HETEROGENEOUS, 2), Tensor(np.zeros(4))).data[0]
    np.testing.assert_array_equal(v[0:4], v[4:8])
    np.testing.assert_array_equal(v[8:12], v[12:16])


def test_classify_zero_head_and_score_monotonicity():
    rng = np.random.default_rng(0)
    head = Linear(160, 2, rng)
    head.weight.data[:] = 0
    head.bias.data[:] = 0
    logits = classify(Tensor(rng.normal(size=(1, 160))), head).data[0]
    assert logits.tolist() == [0.0, 0.0]
    z = rng.normal(size=(200, 2)) * 3
    score = z[:, 0] - z[:, 1]
    posterior = np.exp(z[:, 0]) / np.exp(z).sum(axis=1)
    order = np.argsort(score)
    assert np.all(np.diff(posterior[order]) >= 0)


# -- back-ends ---------------------------------------------------------------------------

def test_aasist_reference_shapes():
    rng = np.random.default_rng(0)
    backend = AasistBackend(64, rng)
    trace = {}
    with no_grad():
        out = backend(Tensor(rng.normal(size=(67, 64))), Tensor(rng.normal(size=(42, 64))), trace)
    assert out.shape == (1, 2)
    assert trace["G_t"] == (33, 64) and trace["G_s"] == (21, 64) and trace["G_st"] == (54, 64)
    assert trace["branch"] == [((26, 32), (32,))] * 2
    assert trace["mgo"] == ((26, 32), (32,)) and trace["readout"] == (160,)


def test_simplified_backend_is_smaller_and_shape_agnostic():
    rng = np.random.default_rng(0)
    simple = SimplifiedBackend(64, rng)
    full = AasistBackend(64, rng)
    assert simple.num_parameters() < full.num_parameters()
    # closed forms: GAT (64*64 + 64 + 64) + head (64*2 + 2)
    assert simple.num_parameters() == 64 * 64 + 64 + 64 + 64 * 2 + 2
    with no_grad():
        for shape in [(64, 1, 1), (64, 3, 9), (2, 64, 5, 4)]:
            out = simple(Tensor(rng.normal(size=shape)))
            assert out.shape == ((1, 2) if len(shape) == 3 else (2, 2))


def test_backend_gradients_reduced_dims():
    rng = np.random.default_rng(2)
    backend = AasistBackend(3, rng, gat_dim=4, hs_dim=4, branch_dim=3)
    t = Tensor(rng.normal(size=(2, 5, 3)), requires_grad=True)
    f = Tensor(rng.normal(size=(2, 4, 3)), requires_grad=True)
    w = rng.normal(size=(2, 2))
    params = [t, f] + [p for _, p in backend.named_parameters()]
    err = check_gradients(lambda: (backend(t, f) * w).sum(), params,
                          max_entries=12, rng=np.random.default_rng(0))
    assert err < 1e-4
