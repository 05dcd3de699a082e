import numpy as np
import pytest

from fgbsim.backdoor import (
    TriggerGraph,
    build_poison_plan,
    gen_universal_trigger,
    inject_graph_level,
    inject_node_level,
    optimize_adaptive_trigger,
    plan_to_json,
    select_positions,
)
from fgbsim.errors import (
    IndexOutOfRange,
    InvalidModelParams,
    InvalidRho,
    PositionCountMismatch,
    SurrogateUntrained,
    TooFewNodes,
)
from fgbsim.graph import build_graph, degree, induced_subgraph
from fgbsim.nn import OptimizerSpec, init_opt_state, init_params, loss_and_gradients, optimizer_step
from fgbsim.partition import split_iid
from fgbsim.rng import derive_rng


def random_host(rng, n, p=0.3, feature_dim=4):
    edges = [(u, v) for u in range(n) for v in range(u + 1, n)
             if rng.uniform() < p]
    return build_graph(edges, rng.normal(size=(n, feature_dim)),
                       labels=rng.integers(0, 3, size=n))


# ------------------------------------------------------------- generators

def test_renyi_degenerate_p():
    trig = gen_universal_trigger("renyi", 3, {"p": 1.0}, feature_dim=4, seed=0)
    assert trig.topology.edges.tolist() == [[0, 1], [0, 2], [1, 2]]
    empty = gen_universal_trigger("renyi", 3, {"p": 0.0}, feature_dim=4, seed=0)
    assert empty.topology.num_edges == 0


def test_renyi_edge_count_matches_binomial_mean():
    n, p = 6, 0.3
    pairs = n * (n - 1) // 2
    counts = [gen_universal_trigger("renyi", n, {"p": p}, 2, seed=s).topology.num_edges
              for s in range(1000)]
    mean = np.mean(counts)
    sigma = np.sqrt(pairs * p * (1 - p))
    assert abs(mean - pairs * p) < 3 * sigma / np.sqrt(1000)


def test_ws_ring_degree_before_rewiring():
    trig = gen_universal_trigger("ws", 8, {"k": 4, "beta": 0.0}, 2, seed=1)
    for v in range(8):
        assert degree(trig.topology, v) == 4


def test_ws_rewiring_preserves_edge_count():
    for seed in range(20):
        trig = gen_universal_trigger("ws", 10, {"k": 4, "beta": 0.5}, 2, seed=seed)
        assert trig.topology.num_edges == 10 * 4 // 2


def test_ws_rejects_odd_or_large_k():
    with pytest.raises(InvalidModelParams):
        gen_universal_trigger("ws", 8, {"k": 3, "beta": 0.1}, 2, seed=0)
    with pytest.raises(InvalidModelParams):
        gen_universal_trigger("ws", 4, {"k": 4, "beta": 0.1}, 2, seed=0)


def test_ba_constant_edge_count():
    # complete seed of m nodes: C(m,2) + (n-m)*m edges, constant across seeds
    for seed in range(100):
        trig = gen_universal_trigger("ba", 10, {"m": 2}, 2, seed=seed)
        assert trig.topology.num_edges == 17
    trig = gen_universal_trigger("ba", 7, {"m": 3}, 2, seed=0)
    assert trig.topology.num_edges == 3 + 4 * 3


def test_rr_exact_regularity():
    for seed in range(50):
        trig = gen_universal_trigger("rr", 6, {"d": 3}, 2, seed=seed)
        for v in range(6):
            assert degree(trig.topology, v) == 3


def test_rr_rejects_odd_product():
    with pytest.raises(InvalidModelParams):
        gen_universal_trigger("rr", 5, {"d": 3}, 2, seed=0)


def test_generator_determinism_and_features():
    for kind, params in [("renyi", {"p": 0.6}), ("ws", {"k": 2, "beta": 0.3}),
                         ("ba", {"m": 2}), ("rr", {"d": 2})]:
        a = gen_universal_trigger(kind, 6, params, 3, seed=42, target_label=2,
                                  feature_value=0.5)
        b = gen_universal_trigger(kind, 6, params, 3, seed=42, target_label=2,
                                  feature_value=0.5)
        assert a.topology.edges.tolist() == b.topology.edges.tolist()
        assert np.all(a.trigger_features == 0.5)
        assert a.trigger_features.shape == (6, 3)
        assert a.target_label == 2
        c = gen_universal_trigger(kind, 6, params, 3, seed=43)
        if kind != "rr":   # a 2-regular 6-cycle family has few outcomes
            pass
        assert c.topology.edges.shape[1] == 2


def test_unknown_kind_and_tiny_n():
    with pytest.raises(InvalidModelParams):
        gen_universal_trigger("tree", 4, {}, 2, seed=0)
    with pytest.raises(InvalidModelParams):
        gen_universal_trigger("renyi", 1, {"p": 0.5}, 2, seed=0)


# -------------------------------------------------------------- positions

def test_positions_degree_star():
    g = build_graph([(0, i) for i in range(1, 5)], np.zeros((5, 1)))
    assert select_positions(g, 1, "degree", seed=0) == [0]


def test_positions_cluster_triangle_pendant():
    g = build_graph([[0, 1], [1, 2], [0, 2], [0, 3]], np.zeros((4, 1)))
    # brute force: nodes 1 and 2 have coefficient 1.0, node 0 has 1/3
    assert select_positions(g, 2, "cluster", seed=0) == [1, 2]


def test_positions_random_deterministic():
    rng = derive_rng("backdoor-test", "positions")
    g = random_host(rng, 20)
    a = select_positions(g, 5, "random", seed=123)
    b = select_positions(g, 5, "random", seed=123)
    assert a == b and len(set(a)) == 5
    c = select_positions(g, 5, "random", seed=124)
    assert a != c


def test_positions_degree_tie_breaks_small_index():
    g = build_graph([[0, 1], [2, 3]], np.zeros((4, 1)))
    assert select_positions(g, 2, "degree", seed=0) == [0, 1]


def test_positions_too_few_nodes():
    g = build_graph([[0, 1]], np.zeros((2, 1)))
    with pytest.raises(TooFewNodes):
        select_positions(g, 3, "random", seed=0)


# -------------------------------------------------------------- injection

def k3_trigger(feature_dim=4, tau=0):
    return gen_universal_trigger("renyi", 3, {"p": 1.0}, feature_dim, seed=0,
                                 target_label=tau)


def test_inject_graph_level_empty_host():
    host = build_graph([], np.zeros((5, 4)), labels=1)
    out = inject_graph_level(host, k3_trigger(), [0, 2, 4])
    assert out.num_edges == 3
    sub = induced_subgraph(out, [0, 2, 4])
    assert sub.edges.tolist() == [[0, 1], [0, 2], [1, 2]]
    assert out.graph_label == 0


def test_inject_graph_level_replaces_induced_edges():
    edges = [(u, v) for u in range(5) for v in range(u + 1, 5)]
    host = build_graph(edges, np.zeros((5, 4)), labels=1)
    empty = TriggerGraph(topology=build_graph([], np.zeros((3, 1))),
                         trigger_features=np.ones((3, 4)), target_label=0,
                         kind="renyi")
    out = inject_graph_level(host, empty, [0, 1, 2])
    got = {(int(u), int(v)) for u, v in out.edges}
    assert got == {(0, 3), (0, 4), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)}


def test_inject_graph_level_feature_overwrite_and_order():
    rng = derive_rng("backdoor-test", "inject-feat")
    host = random_host(rng, 8)
    host = build_graph(host.edges, host.features, labels=2)
    trig = k3_trigger()
    trig.trigger_features = np.arange(12, dtype=float).reshape(3, 4)
    pos = [6, 1, 4]
    out = inject_graph_level(host, trig, pos)
    for i, p in enumerate(pos):
        assert out.features[p].tolist() == trig.trigger_features[i].tolist()


def test_inject_graph_level_matches_induced_oracle():
    rng = derive_rng("backdoor-test", "inject-oracle")
    for trial in range(50):
        n = int(rng.integers(5, 15))
        host = random_host(rng, n)
        host = build_graph(host.edges, host.features, labels=1)
        size = int(rng.integers(2, min(n, 6)))
        trig = gen_universal_trigger("renyi", size, {"p": 0.5}, 4, seed=trial)
        pos = select_positions(host, size, "random", seed=trial)
        out = inject_graph_level(host, trig, pos)
        sub = induced_subgraph(out, pos)
        assert sub.edges.tolist() == trig.topology.edges.tolist()
        # nodes outside the positions keep all their mutual edges
        outside = [v for v in range(n) if v not in pos]
        before = induced_subgraph(host, outside)
        after = induced_subgraph(out, outside)
        assert before.edges.tolist() == after.edges.tolist()


def test_inject_graph_level_position_validation():
    host = build_graph([], np.zeros((5, 4)), labels=0)
    with pytest.raises(PositionCountMismatch):
        inject_graph_level(host, k3_trigger(), [0, 1])
    with pytest.raises(PositionCountMismatch):
        inject_graph_level(host, k3_trigger(), [0, 1, 1])
    with pytest.raises(IndexOutOfRange):
        inject_graph_level(host, k3_trigger(), [0, 1, 9])


def test_inject_node_level_counting():
    host = build_graph([], np.ones((1, 4)), labels=np.array([1]))
    out = inject_node_level(host, k3_trigger(), 0)
    assert out.num_nodes == 4
    assert out.num_edges == 4
    assert degree(out, 0) == 1


def test_inject_node_level_victim_degree_and_restore():
    rng = derive_rng("backdoor-test", "node-inject")
    for trial in range(20):
        n = int(rng.integers(3, 12))
        host = random_host(rng, n)
        victim = int(rng.integers(n))
        trig = k3_trigger(tau=2)
        out = inject_node_level(host, trig, victim)
        assert degree(out, victim) == degree(host, victim) + 1
        # structural diff: dropping appended nodes restores the host
        restored = induced_subgraph(out, list(range(n)))
        assert restored.edges.tolist() == host.edges.tolist()
        assert np.array_equal(restored.features, host.features)
        labels = np.asarray(out.labels)
        assert labels[victim] == 2
        assert np.all(labels[n:] == 2)
        mask = np.ones(n, dtype=bool)
        mask[victim] = False
        assert np.array_equal(labels[:n][mask], np.asarray(host.labels)[mask])


def test_inject_node_level_range_check():
    host = build_graph([], np.ones((2, 4)), labels=np.array([0, 1]))
    with pytest.raises(IndexOutOfRange):
        inject_node_level(host, k3_trigger(), 5)


# ------------------------------------------------------------------ plans

def node_shard(seed=0, n=60):
    rng = derive_rng("backdoor-test", "shard", seed)
    g = random_host(rng, n, p=0.1)
    return split_iid(g, 2, "node", seed=seed).shards[0]


def graph_shard(seed=0, count=63, tau_label=0):
    rng = derive_rng("backdoor-test", "gshard", seed)
    graphs = []
    for j in range(count):
        g = random_host(rng, int(rng.integers(4, 9)))
        graphs.append(build_graph(g.edges, g.features, labels=int(j % 2)))
    return split_iid(graphs, 1, "graph", seed=seed).shards[0]


def test_plan_full_poisoning_node():
    shard = node_shard()
    plan = build_poison_plan(shard, 1.0, k3_trigger(), "random", seed=0)
    assert set(plan.poisoned_sample_ids) == set(shard.node_task.train_mask)
    assert plan.rho == 1.0


def test_plan_ceiling_counts_graph():
    shard = graph_shard(count=63)   # 50 train graphs at the 80/20 split
    assert len(shard.graph_task.train_graphs) == 50
    plan = build_poison_plan(shard, 0.1, k3_trigger(), "random", seed=1)
    assert len(plan.poisoned_sample_ids) == 5
    assert plan.rho == pytest.approx(0.1)
    for pos in plan.injection_positions:
        assert len(pos) == 3


def test_plan_disjoint_and_within_budget():
    shard = node_shard(seed=3)
    for rho in (0.05, 0.1, 0.37, 1.0):
        plan = build_poison_plan(shard, rho, k3_trigger(), "random", seed=2)
        train = set(int(x) for x in shard.node_task.train_mask)
        poisoned = set(int(x) for x in plan.poisoned_sample_ids)
        assert poisoned <= train
        assert len(poisoned) == int(np.ceil(rho * len(train)))
        assert plan.rho <= rho + 1.0 / len(train)


def test_plan_eval_sets_exclude_target_label():
    shard = graph_shard(count=63)
    plan = build_poison_plan(shard, 0.5, k3_trigger(tau=0), "random", seed=3)
    for gid in plan.eval_sample_ids:
        assert shard.graph_task.test_graphs[int(gid)].graph_label != 0
    keep = build_poison_plan(shard, 0.5, k3_trigger(tau=0), "random", seed=3,
                             exclude_target_on_eval=False)
    labels = [shard.graph_task.test_graphs[int(gid)].graph_label
              for gid in keep.eval_sample_ids]
    assert len(keep.eval_sample_ids) >= len(plan.eval_sample_ids)


def test_plan_poisoned_training_samples_carry_target_label():
    shard = graph_shard(count=40)
    trig = k3_trigger(tau=1)
    plan = build_poison_plan(shard, 0.2, trig, "random", seed=4)
    for gid, pos in zip(plan.poisoned_sample_ids, plan.injection_positions):
        host = shard.graph_task.train_graphs[int(gid)]
        assert inject_graph_level(host, trig, pos).graph_label == 1


def test_plan_rejects_bad_rho():
    shard = node_shard()
    for rho in (0.0, -0.1, 1.5):
        with pytest.raises(InvalidRho):
            build_poison_plan(shard, rho, k3_trigger(), "random", seed=0)


def test_plan_deterministic_and_serializable():
    shard = graph_shard(count=30)
    a = build_poison_plan(shard, 0.3, k3_trigger(), "random", seed=9)
    b = build_poison_plan(shard, 0.3, k3_trigger(), "random", seed=9)
    assert a.poisoned_sample_ids.tolist() == b.poisoned_sample_ids.tolist()
    assert a.injection_positions == b.injection_positions
    blob = plan_to_json(a)
    assert blob["trigger"]["size"] == 3
    assert blob["rho"] == a.rho


# ---------------------------------------------------------------- adaptive

def trained_surrogate(shard, epochs=15, seed=0):
    t = shard.node_task
    model = init_params("gcn", t.subgraph.feature_dim, 8, 2,
                        int(np.asarray(t.subgraph.labels).max()) + 1, seed=seed)
    state = init_opt_state(model)
    spec = OptimizerSpec(algo="adam", lr=0.05)
    labels = np.asarray(t.subgraph.labels)
    for _ in range(epochs):
        _, grads = loss_and_gradients(model, t.subgraph, labels, t.train_mask)
        model, state = optimizer_step(model, grads, state, spec)
    return model


def test_adaptive_requires_surrogate():
    shard = node_shard()
    with pytest.raises(SurrogateUntrained):
        optimize_adaptive_trigger(None, shard, 3, 0, steps=5, lr=0.1, seed=0)


def test_adaptive_zero_steps_is_shard_mean():
    shard = node_shard()
    surrogate = trained_surrogate(shard)
    trig = optimize_adaptive_trigger(surrogate, shard, 3, 0, steps=0, lr=0.1,
                                     seed=0)
    mean = shard.node_task.subgraph.features.mean(axis=0)
    assert np.allclose(trig.trigger_features, np.tile(mean, (3, 1)))
    assert trig.kind == "adaptive"
    # complete topology
    assert trig.topology.num_edges == 3


def test_adaptive_zero_weight_surrogate_keeps_init():
    shard = node_shard()
    surrogate = trained_surrogate(shard)
    for w in surrogate.layer_weights:
        w[:] = 0.0
    surrogate.readout_weight[:] = 0.0
    trig = optimize_adaptive_trigger(surrogate, shard, 3, 0, steps=10, lr=0.1,
                                     seed=0)
    mean = shard.node_task.subgraph.features.mean(axis=0)
    assert np.allclose(trig.trigger_features, np.tile(mean, (3, 1)))


def test_adaptive_never_worse_than_init():
    """Oracle: evaluate the surrogate loss at the initial and final features."""
    shard = node_shard(seed=5, n=40)
    surrogate = trained_surrogate(shard, seed=5)
    t = shard.node_task

    def loss_with(features):
        from fgbsim.backdoor import _complete_topology
        trig = TriggerGraph(topology=_complete_topology(3),
                            trigger_features=features, target_label=0,
                            kind="adaptive")
        g = t.subgraph
        for vid in np.sort(t.train_mask):
            g = inject_node_level(g, trig, int(vid))
        loss, _ = loss_and_gradients(surrogate, g, np.asarray(g.labels),
                                     np.sort(t.train_mask))
        return loss

    init_feats = np.tile(t.subgraph.features.mean(axis=0), (3, 1))
    trig = optimize_adaptive_trigger(surrogate, shard, 3, 0, steps=25, lr=0.5,
                                     seed=5)
    assert loss_with(trig.trigger_features) <= loss_with(init_feats) + 1e-12


def test_adaptive_graph_task():
    shard = graph_shard(count=25)
    graphs = shard.graph_task.train_graphs
    batchable = graphs[0]
    model = init_params("gcn", batchable.feature_dim, 8, 2, 2, seed=1)
    trig = optimize_adaptive_trigger(model, shard, 3, 1, steps=5, lr=0.2, seed=2)
    assert trig.trigger_features.shape == (3, graphs[0].feature_dim)
    assert np.all(np.isfinite(trig.trigger_features))
