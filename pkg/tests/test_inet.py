from dataclasses import replace

import numpy as np
import pytest
from conftest import random_graphs, tiny_graph

from trackgnn import fxp
from trackgnn.errors import DomainError, StructuralError, ValidationError
from trackgnn.fxp import Fx, fx_add, fx_hard_sigmoid, fx_mul
from trackgnn.geom import HitGraph, partition
from trackgnn.inet import (MLP, Dense, InferConfig, ModelParams, aggregate, aggregate_canonical,
                           as_state, classify_edges, edge_block, infer, infer_partitioned,
                           node_block, random_params)
from trackgnn.synthetic import generate_synthetic

CFG = InferConfig()


# -- scalar oracle built from Fx objects only ------------------------------------

def mlp_oracle(mlp, row):
    x = [Fx(int(v)) for v in row]
    for k, layer in enumerate(mlp):
        w, b = layer.weight_raw, layer.bias_raw
        out = []
        for j in range(w.shape[1]):
            acc = Fx(0)
            for i in range(w.shape[0]):
                acc = fx_add(acc, fx_mul(x[i], Fx(int(w[i, j]))))
            acc = fx_add(acc, Fx(int(b[j])))
            if k < len(mlp) - 1:
                acc = max(acc, Fx(0))
            out.append(acc)
        x = out
    return [v.raw for v in x]


def infer_oracle(g: HitGraph, params: ModelParams):
    nodes = [list(map(int, r)) for r in g.node_features]
    edges = [list(map(int, r)) for r in g.edge_features]
    snd, rcv = g.senders.tolist(), g.receivers.tolist()
    pair = g.edge_pair_index().tolist()
    upd = [mlp_oracle(params.edge_mlp, nodes[s] + nodes[r] + e)
           for s, r, e in zip(snd, rcv, edges)]
    agg = [[0] * g.d_edge for _ in nodes]
    for k in range(13):
        part = {}
        for e in range(g.n_edges):
            if pair[e] == k:
                cur = part.setdefault(rcv[e], [0] * g.d_edge)
                part[rcv[e]] = [fx_add(Fx(a), Fx(b)).raw for a, b in zip(cur, upd[e])]
        for n, vals in part.items():
            agg[n] = [fx_add(Fx(a), Fx(b)).raw for a, b in zip(agg[n], vals)]
    new_nodes = [mlp_oracle(params.node_mlp, nodes[n] + agg[n]) for n in range(len(nodes))]
    out = []
    for s, r, e in zip(snd, rcv, upd):
        logit = mlp_oracle(params.classifier_mlp, new_nodes[s] + new_nodes[r] + e)[0]
        out.append(fx_hard_sigmoid(Fx(logit)).value)
    return np.array(out)


def params_for(seed, cfg=CFG, **kw):
    return random_params(cfg, np.random.default_rng(seed), **kw)


# -- configuration and parameters ----------------------------------------------

def test_config_validation():
    with pytest.raises(DomainError):
        InferConfig(hidden=0)
    with pytest.raises(DomainError):
        InferConfig(mode="double")
    assert CFG.mlp_shapes()["edge"] == [10, 8, 8, 4]


def test_dense_keeps_quantized_copy():
    d = Dense(np.array([[0.5, 1 / 256]]), np.array([2.0, -100.0]))
    assert d.weight_raw.tolist() == [[64, 0]]
    assert d.bias_raw.tolist() == [256, fxp.RAW_MIN]
    with pytest.raises(StructuralError):
        Dense(np.zeros((2, 3)), np.zeros(2))
    with pytest.raises(StructuralError):
        Dense(np.zeros((1, 1)), np.zeros(1), weight_raw=[[1]])


def test_mlp_width_chain_checked():
    with pytest.raises(StructuralError):
        MLP([Dense(np.zeros((2, 3)), np.zeros(3)), Dense(np.zeros((2, 1)), np.zeros(1))])


def test_model_params_dimension_checks():
    p = params_for(0)
    with pytest.raises(StructuralError):
        ModelParams(p.edge_mlp, p.node_mlp, p.edge_mlp)


def test_random_params_within_unit_range():
    for fan_in in (True, False):
        p = params_for(1, fan_in=fan_in)
        for mlp in p.mlps().values():
            for layer in mlp:
                assert np.abs(layer.weight).max() <= 1 and np.abs(layer.bias).max() <= 1


# -- blocks against the oracle -------------------------------------------------

def test_mlp_fixed_matches_oracle(rng):
    p = params_for(2, fan_in=False)
    x = rng.integers(-600, 600, (40, 10))
    got = p.edge_mlp(x, fixed=True)
    assert got.tolist() == [mlp_oracle(p.edge_mlp, row) for row in x]


def test_mlp_saturates_instead_of_wrapping():
    big = Dense(np.full((2, 1), 60.0), np.zeros(1))
    out = MLP([big])(np.array([[fxp.RAW_MAX, fxp.RAW_MAX]]), fixed=True)
    assert out.tolist() == [[fxp.RAW_MAX]]


def test_infer_matches_scalar_oracle():
    for seed, g in enumerate(random_graphs(3, 6, 10, 40)):
        p = params_for(seed, fan_in=seed % 2 == 0)
        np.testing.assert_array_equal(infer(g, p), infer_oracle(g, p))


def test_infer_small_graph_against_oracle():
    g = tiny_graph()
    p = params_for(4, fan_in=False)
    np.testing.assert_array_equal(infer(g, p), infer_oracle(g, p))


def test_scores_in_unit_interval():
    g = generate_synthetic(5)
    for mode in ("fixed", "real"):
        s = infer(g, params_for(5, fan_in=False), replace(CFG, mode=mode))
        assert s.min() >= 0 and s.max() <= 1 and s.shape == (g.n_edges,)


def test_fixed_scores_are_representable():
    s = infer(generate_synthetic(6), params_for(6))
    assert np.array_equal(s * 128, np.round(s * 128))


# -- aggregation ---------------------------------------------------------------

def aggregate_oracle(vals, rcv, n):
    out = []
    for node in range(n):
        acc = [0] * vals.shape[1]
        for e in range(len(rcv)):
            if rcv[e] == node:
                acc = [fx_add(Fx(a), Fx(int(b))).raw for a, b in zip(acc, vals[e])]
        out.append(acc)
    return out


def test_aggregate_matches_filtered_sum(rng):
    for _ in range(30):
        n = int(rng.integers(1, 20))
        m = int(rng.integers(0, 60))
        vals = rng.integers(-3000, 3000, (m, 3))
        rcv = rng.integers(0, n, m)
        assert aggregate(vals, rcv, n).tolist() == aggregate_oracle(vals, rcv, n)


def test_aggregate_order_matters_under_saturation():
    vals = np.array([[fxp.RAW_MAX], [100], [-100]])
    assert aggregate(vals, [0, 0, 0], 1).tolist() == [[fxp.RAW_MAX - 100]]
    assert aggregate(vals[::-1], [0, 0, 0], 1).tolist() == [[fxp.RAW_MAX]]


def test_aggregate_real_is_plain_sum(rng):
    vals = rng.normal(size=(50, 4))
    rcv = rng.integers(0, 7, 50)
    expect = np.zeros((7, 4))
    for v, r in zip(vals, rcv):
        expect[r] += v
    np.testing.assert_allclose(aggregate(vals, rcv, 7), expect, rtol=0, atol=1e-12)


def test_aggregate_rejects_bad_index():
    with pytest.raises(StructuralError):
        aggregate(np.zeros((2, 1), np.int64), [0, 5], 3)
    with pytest.raises(StructuralError):
        aggregate(np.zeros((2, 1), np.int64), [0], 3)


def test_aggregate_canonical_equals_flat_without_saturation(rng):
    g = generate_synthetic(7)
    vals = rng.integers(-50, 50, (g.n_edges, 4))
    flat = aggregate(vals, g.receivers, g.n_nodes)
    two = aggregate_canonical(vals, g.receivers, g.n_nodes, g.edge_pair_index())
    assert np.array_equal(flat, two)


# -- partitioned equivalence and invariances -----------------------------------

def test_partitioned_equals_whole_graph():
    for seed, g in enumerate(random_graphs(11, 15, 10, 500)):
        p = params_for(seed, fan_in=seed % 3 != 0)
        for mode in ("fixed", "real"):
            cfg = replace(CFG, mode=mode)
            a = infer(g, p, cfg)
            b = infer_partitioned(partition(g), p, cfg)
            if mode == "fixed":
                assert np.array_equal(a, b)
            else:
                np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_partitioned_equal_under_heavy_saturation():
    g = generate_synthetic(12)
    p = random_params(CFG, np.random.default_rng(12), low=-8, high=8, fan_in=False)
    assert np.array_equal(infer(g, p), infer_partitioned(partition(g), p))


def test_node_relabelling_permutes_nothing():
    g = generate_synthetic(13)
    p = params_for(13)
    perm = np.random.default_rng(0).permutation(g.n_nodes)
    inv = np.argsort(perm)
    h = HitGraph(g.node_features[perm], g.node_layers[perm], g.edge_features,
                 inv[g.senders], inv[g.receivers])
    assert np.array_equal(infer(g, p), infer(h, p))


def test_edge_reordering_real_mode():
    g = generate_synthetic(14)
    p = params_for(14)
    perm = np.random.default_rng(1).permutation(g.n_edges)
    h = HitGraph(g.node_features, g.node_layers, g.edge_features[perm], g.senders[perm],
                 g.receivers[perm])
    cfg = replace(CFG, mode="real")
    np.testing.assert_allclose(infer(g, p, cfg)[perm], infer(h, p, cfg), rtol=0, atol=1e-12)


def test_iterations_change_result():
    g = generate_synthetic(15)
    p = params_for(15)
    one = infer(g, p)
    two = infer(g, p, replace(CFG, iterations=2))
    assert one.shape == two.shape and not np.array_equal(one, two)
    assert np.array_equal(two, infer_partitioned(partition(g), p, replace(CFG, iterations=2)))


def test_blocks_compose_to_infer():
    g = generate_synthetic(16)
    p = params_for(16)
    s = as_state(g)
    e = edge_block(s, p)
    agg = aggregate_canonical(e, s.receivers, g.n_nodes, s.edge_pair)
    s2 = replace(s, nodes=node_block(replace(s, edges=e), agg, p), edges=e)
    assert np.array_equal(classify_edges(s2, p), infer(g, p))


def test_fixed_close_to_real_without_saturation():
    g = generate_synthetic(17)
    p = params_for(17, fan_in=True)
    d = np.abs(infer(g, p) - infer(g, p, replace(CFG, mode="real")))
    assert d.max() <= 0.05


def test_infer_rejects_invalid_and_mismatched():
    g = tiny_graph()
    bad = HitGraph(g.node_features, g.node_layers, np.zeros((1, 4), np.int64), [1], [0])
    with pytest.raises(ValidationError):
        infer(bad, params_for(0))
    with pytest.raises(StructuralError):
        infer(g, params_for(0, InferConfig(d_node=2, d_edge=4)))
    with pytest.raises(StructuralError):
        infer(g, params_for(0), InferConfig(d_node=2))


def test_empty_graph():
    assert infer(HitGraph.empty(), params_for(0)).shape == (0,)
    assert infer_partitioned(partition(HitGraph.empty()), params_for(0)).shape == (0,)
