"""Trigger generation and injection, and per-client poison plans.

A trigger is a small graph g_tau with features and a target label tau.
Universal triggers come from classic random-graph generators; the adaptive
trigger keeps a complete topology and optimizes its features against a
surrogate model.  Injection rewires trigger edges into a host graph
(graph task) or appends the trigger next to a victim node (node task).
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .errors import (
    IndexOutOfRange,
    InvalidModelParams,
    InvalidRho,
    PositionCountMismatch,
    ShapeMismatch,
    SurrogateUntrained,
    TooFewNodes,
)
from .graph import Graph, build_graph, clustering_coefficient
from .nn import ModelParams, loss_and_gradients, make_batch
from .rng import derive_rng, derive_seed

UNIVERSAL_KINDS = ("renyi", "ws", "ba", "rr")


@dataclass
class TriggerGraph:
    topology: Graph                   # over N_tau nodes, features unused
    trigger_features: np.ndarray      # (N_tau, feature_dim)
    target_label: int
    kind: str
    warning: Optional[str] = None

    @property
    def size(self) -> int:
        return self.topology.num_nodes


@dataclass
class PoisonPlan:
    client_id: int
    poisoned_sample_ids: np.ndarray   # training victims, ascending
    injection_positions: list         # node task: victim nodes; graph task: per-sample position lists
    trigger: TriggerGraph
    rho: float                        # realized training poisoning rate
    eval_sample_ids: np.ndarray       # test-time victims for attack metrics
    eval_positions: list
    warning: Optional[str] = None


# ------------------------------------------------------------- generators

def _gen_renyi(n, p, rng):
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            if rng.uniform() < p:
                edges.append((u, v))
    return edges


def _gen_ws(n, k, beta, rng):
    # ring lattice: each node tied to k/2 neighbors per side
    edges = set()
    for j in range(1, k // 2 + 1):
        for u in range(n):
            v = (u + j) % n
            edges.add((min(u, v), max(u, v)))
    # rewire pass in construction order
    for j in range(1, k // 2 + 1):
        for u in range(n):
            v = (u + j) % n
            key = (min(u, v), max(u, v))
            if key not in edges or rng.uniform() >= beta:
                continue
            free = [w for w in range(n)
                    if w != u and (min(u, w), max(u, w)) not in edges]
            if not free:
                continue
            w = free[int(rng.integers(len(free)))]
            edges.remove(key)
            edges.add((min(u, w), max(u, w)))
    return sorted(edges)


def _gen_ba(n, m, rng):
    edges = []
    repeated = []                     # one entry per degree unit
    for u in range(m):
        for v in range(u + 1, m):
            edges.append((u, v))
            repeated += [u, v]
    for t in range(m, n):
        targets: List[int] = []
        while len(targets) < m:
            if repeated:
                pick = repeated[int(rng.integers(len(repeated)))]
            else:
                pick = int(rng.integers(t))
            if pick not in targets:
                targets.append(pick)
        for v in targets:
            edges.append((v, t))
        repeated += targets + [t] * m
    return edges


def _gen_rr(n, d, rng, max_tries=10000):
    for _ in range(max_tries):
        stubs = np.repeat(np.arange(n), d)
        rng.shuffle(stubs)
        pairs = stubs.reshape(-1, 2)
        seen = set()
        ok = True
        for a, b in pairs:
            key = (min(int(a), int(b)), max(int(a), int(b)))
            if a == b or key in seen:
                ok = False
                break
            seen.add(key)
        if ok:
            return sorted(seen)
    raise InvalidModelParams(f"no d-regular pairing found for n={n}, d={d}")


def gen_universal_trigger(kind: str, n: int, params: dict, feature_dim: int,
                          seed, target_label: int = 0,
                          feature_value: float = 1.0) -> TriggerGraph:
    """Random-graph trigger topology with constant features.

    params carries the generator knobs: renyi p, ws (k, beta), ba m, rr d.
    """
    kind = kind.lower()
    if kind not in UNIVERSAL_KINDS:
        raise InvalidModelParams(f"unknown trigger kind {kind!r}")
    if n < 2:
        raise InvalidModelParams("trigger needs at least 2 nodes")
    rng = derive_rng("trigger", kind, n, seed)
    if kind == "renyi":
        p = float(params.get("p", 0.8))
        if not 0.0 <= p <= 1.0:
            raise InvalidModelParams(f"renyi p={p} outside [0,1]")
        edges = _gen_renyi(n, p, rng)
    elif kind == "ws":
        k = int(params.get("k", 2))
        beta = float(params.get("beta", 0.3))
        if k % 2 or not 0 < k < n:
            raise InvalidModelParams(f"ws needs even 0 < k < n, got k={k}, n={n}")
        if not 0.0 <= beta <= 1.0:
            raise InvalidModelParams(f"ws beta={beta} outside [0,1]")
        edges = _gen_ws(n, k, beta, rng)
    elif kind == "ba":
        m = int(params.get("m", 2))
        if not 0 < m < n:
            raise InvalidModelParams(f"ba needs 0 < m < n, got m={m}, n={n}")
        edges = _gen_ba(n, m, rng)
    else:
        d = int(params.get("d", 2))
        if (d * n) % 2 or not 0 < d < n:
            raise InvalidModelParams(f"rr needs d*n even and 0 < d < n")
        edges = _gen_rr(n, d, rng)
    feats = np.full((n, feature_dim), float(feature_value))
    topology = build_graph(edges, np.zeros((n, 1)))
    return TriggerGraph(topology=topology, trigger_features=feats,
                        target_label=int(target_label), kind=kind)


def _complete_topology(n: int) -> Graph:
    edges = [(u, v) for u in range(n) for v in range(u + 1, n)]
    return build_graph(edges, np.zeros((n, 1)))


def optimize_adaptive_trigger(surrogate: Optional[ModelParams], shard, n: int,
                              target: int, steps: int, lr: float, seed,
                              max_candidates: int = 32) -> TriggerGraph:
    """Feature-optimized trigger on a fixed complete topology.

    Starts from the shard's mean feature vector and walks the input-feature
    gradient of the surrogate's cross-entropy toward the target label on a
    seeded subset of trigger-injected training samples.  Keeps the iterate
    with the lowest loss, so the result is never worse than the start.
    """
    if surrogate is None:
        raise SurrogateUntrained("adaptive trigger needs a trained surrogate")
    topology = _complete_topology(n)
    rng = derive_rng("adaptive", n, target, seed)
    warning = None

    if shard.node_task is not None:
        host = shard.node_task.subgraph
        feature_dim = host.feature_dim
        base = host.features.mean(axis=0)
        victims = np.sort(shard.node_task.train_mask)
        if len(victims) > max_candidates:
            victims = np.sort(rng.choice(victims, size=max_candidates, replace=False))
    else:
        graphs = shard.graph_task.train_graphs
        feature_dim = graphs[0].feature_dim
        base = np.concatenate([g.features for g in graphs], axis=0).mean(axis=0)
        ids = np.arange(len(graphs))
        eligible = ids[[g.num_nodes >= n for g in graphs]]
        if len(eligible) == 0:
            return TriggerGraph(topology=topology,
                                trigger_features=np.tile(base, (n, 1)),
                                target_label=int(target), kind="adaptive",
                                warning="no graph large enough to host the trigger")
        if len(eligible) > max_candidates:
            eligible = np.sort(rng.choice(eligible, size=max_candidates, replace=False))
        victims = eligible

    feats = np.tile(base, (n, 1))
    best = feats.copy()
    trig = TriggerGraph(topology=topology, trigger_features=feats,
                        target_label=int(target), kind="adaptive")

    # the injected structure never changes, build it once and swap features
    if shard.node_task is not None:
        injected = host
        trigger_rows = []
        for vid in victims:
            trigger_rows.append(np.arange(injected.num_nodes,
                                          injected.num_nodes + n))
            injected = inject_node_level(injected, trig, int(vid))
        labels = np.asarray(injected.labels)
        mask = victims
        pool = None
        task = "node"
    else:
        poisoned = []
        trigger_rows = []
        offset = 0
        for gid in victims:
            g = graphs[int(gid)]
            pos = select_positions(g, n, "random",
                                   derive_seed("adaptive-pos", seed, int(gid)))
            poisoned.append(inject_graph_level(g, trig, pos))
            trigger_rows.append(offset + np.asarray(pos, dtype=np.int64))
            offset += g.num_nodes
        batch = make_batch(poisoned)
        injected = batch.graph
        labels = batch.labels
        mask = np.arange(batch.num_graphs)
        pool = batch.pool
        task = "graph"

    def injected_loss_and_grad(current: np.ndarray):
        full = injected.features.copy()
        for rows in trigger_rows:
            full[rows] = current
        g2 = injected.with_features(full)
        loss, grads = loss_and_gradients(surrogate, g2, labels, mask,
                                         task=task, pool=pool,
                                         want_input_grad=True)
        dfeats = np.zeros_like(current)
        for rows in trigger_rows:
            dfeats += grads.input_features[rows]
        return loss, dfeats

    best_loss, _ = injected_loss_and_grad(best)
    for _ in range(int(steps)):
        loss, dfeats = injected_loss_and_grad(feats)
        if not (np.isfinite(loss) and np.all(np.isfinite(dfeats))):
            warning = "non-finite gradient, optimization aborted"
            break
        if loss < best_loss:
            best_loss = loss
            best = feats.copy()
        feats = feats - lr * dfeats
    if np.all(np.isfinite(feats)):
        final_loss, _ = injected_loss_and_grad(feats)
        if np.isfinite(final_loss) and final_loss < best_loss:
            best = feats
    trig.trigger_features = best
    trig.warning = warning
    return trig


# -------------------------------------------------------------- injection

def select_positions(g: Graph, n: int, strategy: str, seed,
                     candidates: Optional[Sequence[int]] = None) -> List[int]:
    """Pick n injection nodes; ties always favor the smaller node index."""
    if candidates is None:
        candidates = np.arange(g.num_nodes)
    else:
        candidates = np.asarray(candidates, dtype=np.int64)
    if n > len(candidates):
        raise TooFewNodes(f"need {n} positions, have {len(candidates)} nodes")
    strategy = strategy.lower()
    if strategy == "random":
        rng = derive_rng("positions", seed)
        return [int(x) for x in rng.choice(candidates, size=n, replace=False)]
    if strategy == "degree":
        scores = g.degrees[candidates]
    elif strategy == "cluster":
        scores = np.array([clustering_coefficient(g, int(v)) for v in candidates])
    else:
        raise InvalidModelParams(f"unknown position strategy {strategy!r}")
    order = np.lexsort((candidates, -scores))
    return [int(candidates[i]) for i in order[:n]]


def inject_graph_level(g: Graph, trig: TriggerGraph, positions: Sequence[int]) -> Graph:
    """Replace the induced topology at `positions` with the trigger."""
    positions = [int(p) for p in positions]
    if len(positions) != trig.size:
        raise PositionCountMismatch(
            f"{len(positions)} positions for a {trig.size}-node trigger")
    if len(set(positions)) != len(positions):
        raise PositionCountMismatch("positions must be distinct")
    if min(positions) < 0 or max(positions) >= g.num_nodes:
        raise IndexOutOfRange("position outside host graph")
    if trig.trigger_features.shape[1] != g.feature_dim:
        raise ShapeMismatch("trigger feature dim does not match host")
    pos = np.asarray(positions, dtype=np.int64)
    inside = np.zeros(g.num_nodes, dtype=bool)
    inside[pos] = True
    if len(g.edges):
        keep = ~(inside[g.edges[:, 0]] & inside[g.edges[:, 1]])
        kept = g.edges[keep]
    else:
        kept = g.edges
    trig_edges = pos[trig.topology.edges] if len(trig.topology.edges) else \
        np.zeros((0, 2), dtype=np.int64)
    edges = np.concatenate([kept, trig_edges]) if len(trig_edges) else kept
    feats = g.features.copy()
    feats[pos] = trig.trigger_features
    return build_graph(edges, feats, labels=trig.target_label)


def inject_node_level(shard_graph: Graph, trig: TriggerGraph, victim: int) -> Graph:
    """Append the trigger subgraph and tie it to the victim with one edge."""
    if not 0 <= victim < shard_graph.num_nodes:
        raise IndexOutOfRange(f"victim {victim} outside graph")
    if trig.trigger_features.shape[1] != shard_graph.feature_dim:
        raise ShapeMismatch("trigger feature dim does not match host")
    n0 = shard_graph.num_nodes
    parts = [shard_graph.edges, trig.topology.edges + n0,
             np.array([[victim, n0]], dtype=np.int64)]
    edges = np.concatenate([p for p in parts if len(p)])
    feats = np.concatenate([shard_graph.features, trig.trigger_features], axis=0)
    labels = shard_graph.labels
    if isinstance(labels, np.ndarray):
        labels = np.concatenate([labels, np.full(trig.size, trig.target_label,
                                                 dtype=np.int64)])
        labels[victim] = trig.target_label
    return build_graph(edges, feats, labels=labels)


# ------------------------------------------------------------------ plans

def _pick_victims(g: Graph, sample_ids: np.ndarray, count: int, strategy: str,
                  seed) -> np.ndarray:
    """Node-task victim choice by position strategy over given candidates."""
    chosen = select_positions(g, count, strategy, seed, candidates=sample_ids)
    return np.sort(np.asarray(chosen, dtype=np.int64))


def _pick_graphs(graphs, sample_ids: np.ndarray, count: int, min_nodes: int,
                 seed):
    eligible = np.array([gid for gid in sample_ids
                         if graphs[int(gid)].num_nodes >= min_nodes],
                        dtype=np.int64)
    warning = None
    if count > len(eligible):
        warning = (f"only {len(eligible)} of {len(sample_ids)} samples can host "
                   f"a {min_nodes}-node trigger")
        count = len(eligible)
    rng = derive_rng("graph-victims", seed)
    chosen = rng.choice(eligible, size=count, replace=False) if count else \
        np.array([], dtype=np.int64)
    return np.sort(chosen.astype(np.int64)), warning


def build_poison_plan(shard, rho: float, trig: TriggerGraph, strategy: str,
                      seed, exclude_target_on_eval: bool = True,
                      client_id: Optional[int] = None) -> PoisonPlan:
    """Training and test-time victim selection under the poisoning budget.

    Training victims: ceil(rho * train size), chosen by `strategy` for the
    node task and by seeded uniform sampling among large-enough graphs for
    the graph task.  Test-time victims are drawn the same way over the test
    samples, optionally skipping samples already labeled with the target.
    """
    if not 0.0 < rho <= 1.0:
        raise InvalidRho(f"rho={rho} outside (0, 1]")
    cid = shard.client_id if client_id is None else client_id
    warnings = []

    if shard.node_task is not None:
        g = shard.node_task.subgraph
        labels = np.asarray(g.labels)
        train_ids = np.sort(shard.node_task.train_mask)
        test_ids = np.sort(shard.node_task.test_mask)
        count = math.ceil(rho * len(train_ids))
        victims = _pick_victims(g, train_ids, count, strategy,
                                derive_seed(seed, "train"))
        eval_pool = test_ids
        if exclude_target_on_eval:
            eval_pool = test_ids[labels[test_ids] != trig.target_label]
        eval_count = min(math.ceil(rho * len(test_ids)), len(eval_pool))
        if eval_count == 0 and len(eval_pool):
            eval_count = 1
        eval_victims = _pick_victims(g, eval_pool, eval_count, strategy,
                                     derive_seed(seed, "eval"))
        realized = len(victims) / max(len(train_ids), 1)
        return PoisonPlan(client_id=cid, poisoned_sample_ids=victims,
                          injection_positions=[int(v) for v in victims],
                          trigger=trig, rho=realized,
                          eval_sample_ids=eval_victims,
                          eval_positions=[int(v) for v in eval_victims])

    graphs = shard.graph_task.train_graphs
    test_graphs = shard.graph_task.test_graphs
    n_tau = trig.size
    train_ids = np.arange(len(graphs), dtype=np.int64)
    count = math.ceil(rho * len(graphs))
    victims, warn = _pick_graphs(graphs, train_ids, count, n_tau,
                                 derive_seed(seed, "train"))
    if warn:
        warnings.append(warn)
    positions = [select_positions(graphs[int(gid)], n_tau, strategy,
                                  derive_seed(seed, "pos", int(gid)))
                 for gid in victims]

    test_ids = np.arange(len(test_graphs), dtype=np.int64)
    eval_pool = test_ids
    if exclude_target_on_eval:
        eval_pool = np.array([gid for gid in test_ids
                              if test_graphs[int(gid)].graph_label
                              != trig.target_label], dtype=np.int64)
    eval_count = min(math.ceil(rho * len(test_ids)), len(eval_pool))
    if eval_count == 0 and len(eval_pool):
        eval_count = 1
    eval_victims, warn = _pick_graphs(test_graphs, eval_pool, eval_count, n_tau,
                                      derive_seed(seed, "eval"))
    if warn:
        warnings.append(warn)
    eval_positions = [select_positions(test_graphs[int(gid)], n_tau, strategy,
                                       derive_seed(seed, "eval-pos", int(gid)))
                      for gid in eval_victims]
    realized = len(victims) / max(len(graphs), 1)
    return PoisonPlan(client_id=cid, poisoned_sample_ids=victims,
                      injection_positions=positions, trigger=trig, rho=realized,
                      eval_sample_ids=eval_victims, eval_positions=eval_positions,
                      warning="; ".join(warnings) if warnings else None)


def plan_to_json(plan: PoisonPlan) -> dict:
    trig = plan.trigger
    return {
        "client_id": plan.client_id,
        "poisoned_sample_ids": [int(x) for x in plan.poisoned_sample_ids],
        "injection_positions": plan.injection_positions,
        "eval_sample_ids": [int(x) for x in plan.eval_sample_ids],
        "eval_positions": plan.eval_positions,
        "rho": plan.rho,
        "warning": plan.warning,
        "trigger": {
            "kind": trig.kind,
            "size": trig.size,
            "target_label": trig.target_label,
            "edges": trig.topology.edges.tolist(),
            "features": trig.trigger_features.tolist(),
            "warning": trig.warning,
        },
    }
