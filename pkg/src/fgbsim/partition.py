"""Client data partitioning and the cross-client overlap knob.

Node-level shards are induced subgraphs over disjoint node sets; cross-client
edges are dropped at split time and only reappear when apply_overlap copies
nodes between clients and re-induces from the original global graph.
"""

import math
from dataclasses import dataclass, replace
from typing import List, Optional

import networkx as nx
import numpy as np

from .errors import (
    InvalidAlpha,
    InvalidProbability,
    NotNodeLevel,
    TooFewSamples,
)
from .graph import Graph, induced_subgraph
from .rng import derive_rng

SCHEMES = ("iid", "louvain", "label_skew", "quantity_skew")


@dataclass
class NodeTask:
    subgraph: Graph
    train_mask: np.ndarray        # local node ids
    test_mask: np.ndarray
    global_ids: np.ndarray        # local id -> global node id, ascending


@dataclass
class GraphTask:
    train_graphs: List[Graph]
    test_graphs: List[Graph]
    train_ids: np.ndarray         # dataset indices
    test_ids: np.ndarray


@dataclass
class ClientShard:
    client_id: int
    node_task: Optional[NodeTask] = None
    graph_task: Optional[GraphTask] = None

    @property
    def size(self) -> int:
        """Training sample count N_i."""
        if self.node_task is not None:
            return len(self.node_task.train_mask)
        return len(self.graph_task.train_graphs)


@dataclass
class PartitionPlan:
    shards: List[ClientShard]
    scheme: str
    overlap_rate: float
    seed: int
    global_graph: Optional[Graph] = None   # node task only
    warning: Optional[str] = None


TRAIN_FRACTION = 0.8


def _train_test_split(n: int, client_id: int, seed, train_fraction: float):
    rng = derive_rng("train-split", seed, client_id)
    perm = rng.permutation(n)
    train_n = max(1, round(train_fraction * n))
    if n >= 2:
        train_n = min(train_n, n - 1)   # keep the test side non-empty
    return np.sort(perm[:train_n]), np.sort(perm[train_n:])


def _node_shard(global_graph: Graph, global_ids: np.ndarray, client_id: int,
                seed, train_fraction: float = TRAIN_FRACTION) -> ClientShard:
    global_ids = np.sort(np.asarray(global_ids, dtype=np.int64))
    sub = induced_subgraph(global_graph, global_ids)
    train, test = _train_test_split(len(global_ids), client_id, seed,
                                    train_fraction)
    return ClientShard(client_id=client_id,
                       node_task=NodeTask(subgraph=sub, train_mask=train,
                                          test_mask=test, global_ids=global_ids))


def _graph_shard(graphs, ids: np.ndarray, client_id: int, seed,
                 train_fraction: float = TRAIN_FRACTION) -> ClientShard:
    ids = np.sort(np.asarray(ids, dtype=np.int64))
    train, test = _train_test_split(len(ids), client_id, seed, train_fraction)
    train_ids, test_ids = ids[train], ids[test]
    return ClientShard(client_id=client_id,
                       graph_task=GraphTask(
                           train_graphs=[graphs[int(i)] for i in train_ids],
                           test_graphs=[graphs[int(i)] for i in test_ids],
                           train_ids=train_ids, test_ids=test_ids))


def split_iid(data, k: int, task: str, seed,
              train_fraction: float = TRAIN_FRACTION) -> PartitionPlan:
    """Seeded shuffle plus round-robin deal."""
    rng = derive_rng("split-iid", seed)
    if task == "node":
        n = data.num_nodes
        if n < k:
            raise TooFewSamples(f"{n} nodes for {k} clients")
        perm = rng.permutation(n)
        shards = [_node_shard(data, perm[i::k], i, seed, train_fraction)
                  for i in range(k)]
        return PartitionPlan(shards=shards, scheme="iid", overlap_rate=0.0,
                             seed=seed, global_graph=data)
    if len(data) < k:
        raise TooFewSamples(f"{len(data)} graphs for {k} clients")
    perm = rng.permutation(len(data))
    shards = [_graph_shard(data, perm[i::k], i, seed, train_fraction)
              for i in range(k)]
    return PartitionPlan(shards=shards, scheme="iid", overlap_rate=0.0, seed=seed)


def _bfs_halves(g: Graph, nodes: List[int], rng) -> tuple:
    """Split a node set into two halves by BFS order from a seeded start."""
    members = sorted(nodes)
    member_set = set(members)
    start = members[int(rng.integers(len(members)))]
    order, seen = [], set()
    frontier = [start]
    while len(order) < len(members):
        if not frontier:
            rest = [v for v in members if v not in seen]
            frontier = [rest[0]]
        nxt = []
        for v in frontier:
            if v in seen:
                continue
            seen.add(v)
            order.append(v)
            nxt.extend(int(u) for u in g.neighbors(v) if u in member_set
                       and u not in seen)
        frontier = sorted(set(nxt))
    half = math.ceil(len(order) / 2)
    return order[:half], order[half:]


def split_louvain(g: Graph, k: int, seed,
                  train_fraction: float = TRAIN_FRACTION) -> PartitionPlan:
    """Louvain communities assigned to clients by greedy size balancing.

    When Louvain yields fewer than k communities the largest ones are split
    by seeded BFS halving until k parts exist; the plan carries a warning
    flag instead of failing.
    """
    if g.num_nodes < k:
        raise TooFewSamples(f"{g.num_nodes} nodes for {k} clients")
    nxg = nx.Graph()
    nxg.add_nodes_from(range(g.num_nodes))
    nxg.add_edges_from((int(u), int(v)) for u, v in g.edges)
    comms = nx.community.louvain_communities(nxg, seed=seed % (2 ** 32))
    comms = [sorted(c) for c in comms]
    comms.sort(key=lambda c: (-len(c), c[0]))
    warning = None
    rng = derive_rng("louvain-fallback", seed)
    while len(comms) < k:
        warning = "fewer communities than clients, split largest by BFS halving"
        big = comms.pop(0)
        if len(big) < 2:
            raise TooFewSamples("cannot split singleton community further")
        a, b = _bfs_halves(g, big, rng)
        comms.extend([a, b])
        comms.sort(key=lambda c: (-len(c), c[0]))
    totals = [0] * k
    buckets = [[] for _ in range(k)]
    for comm in comms:
        tgt = min(range(k), key=lambda i: (totals[i], i))
        buckets[tgt].extend(comm)
        totals[tgt] += len(comm)
    shards = [_node_shard(g, np.array(sorted(b), dtype=np.int64), i, seed,
                          train_fraction)
              for i, b in enumerate(buckets)]
    return PartitionPlan(shards=shards, scheme="louvain", overlap_rate=0.0,
                         seed=seed, global_graph=g, warning=warning)


def split_label_skew(graphs, k: int, p: float, seed,
                     train_fraction: float = TRAIN_FRACTION) -> PartitionPlan:
    """Label-driven assignment: label l lands on client l mod k w.p. p."""
    if not 0.0 <= p <= 1.0:
        raise InvalidProbability(f"p={p} outside [0,1]")
    if len(graphs) < k:
        raise TooFewSamples(f"{len(graphs)} graphs for {k} clients")
    rng = derive_rng("split-label-skew", seed)
    buckets = [[] for _ in range(k)]
    for j, g in enumerate(graphs):
        home = int(g.graph_label) % k
        if k == 1 or rng.uniform() < p:
            buckets[home].append(j)
        else:
            others = [c for c in range(k) if c != home]
            buckets[others[int(rng.integers(k - 1))]].append(j)
    # repair empty shards from the largest one
    for c in range(k):
        while not buckets[c]:
            donor = max(range(k), key=lambda i: (len(buckets[i]), -i))
            buckets[c].append(buckets[donor].pop())
    shards = [_graph_shard(graphs, np.array(sorted(b), dtype=np.int64), i,
                           seed, train_fraction)
              for i, b in enumerate(buckets)]
    return PartitionPlan(shards=shards, scheme="label_skew", overlap_rate=0.0,
                         seed=seed)


def split_quantity_skew(graphs, k: int, seed, concentration: float = 0.5,
                        train_fraction: float = TRAIN_FRACTION) -> PartitionPlan:
    """Dirichlet shard sizes over a seeded shuffle, every shard non-empty."""
    total = len(graphs)
    if total < k:
        raise TooFewSamples(f"{total} graphs for {k} clients")
    rng = derive_rng("split-quantity-skew", seed)
    prop = rng.dirichlet(np.full(k, concentration))
    bounds = np.round(np.cumsum(prop) * total).astype(np.int64)
    bounds[-1] = total
    sizes = np.diff(np.concatenate([[0], bounds]))
    while (sizes < 1).any():
        sizes[np.argmin(sizes)] += 1
        sizes[np.argmax(sizes)] -= 1
    perm = rng.permutation(total)
    shards, at = [], 0
    for i, s in enumerate(sizes):
        ids = perm[at:at + int(s)]
        at += int(s)
        shards.append(_graph_shard(graphs, np.sort(ids), i, seed, train_fraction))
    return PartitionPlan(shards=shards, scheme="quantity_skew",
                         overlap_rate=0.0, seed=seed)


def apply_overlap(plan: PartitionPlan, alpha: float, seed) -> PartitionPlan:
    """Copy ceil(alpha * n_i) foreign nodes into each shard.

    The enlarged node set is re-induced from the original global graph, so
    cross-client edges incident to the copied nodes materialize.  Copied
    nodes join the receiving client's training mask.
    """
    if not 0.0 <= alpha <= 1.0:
        raise InvalidAlpha(f"alpha={alpha} outside [0,1]")
    if plan.global_graph is None or any(s.node_task is None for s in plan.shards):
        raise NotNodeLevel("overlap applies to node-level plans only")
    if alpha == 0.0:
        return plan
    g = plan.global_graph
    original = [s.node_task.global_ids for s in plan.shards]
    shards = []
    for i, shard in enumerate(plan.shards):
        own = original[i]
        own_set = set(int(x) for x in own)
        pool = np.array(sorted({int(x) for j, ids in enumerate(original)
                                if j != i for x in ids} - own_set),
                        dtype=np.int64)
        want = math.ceil(alpha * len(own))
        take = min(want, len(pool))
        rng = derive_rng("overlap", seed, i)
        added = np.sort(rng.choice(pool, size=take, replace=False)) if take \
            else np.array([], dtype=np.int64)
        new_ids = np.sort(np.concatenate([own, added]))
        sub = induced_subgraph(g, new_ids)
        pos = {int(gid): local for local, gid in enumerate(new_ids)}
        old = shard.node_task
        train = sorted(pos[int(own[t])] for t in old.train_mask)
        train += [pos[int(a)] for a in added]
        test = sorted(pos[int(own[t])] for t in old.test_mask)
        shards.append(ClientShard(
            client_id=shard.client_id,
            node_task=NodeTask(subgraph=sub,
                               train_mask=np.array(sorted(train), dtype=np.int64),
                               test_mask=np.array(sorted(test), dtype=np.int64),
                               global_ids=new_ids)))
    return replace(plan, shards=shards, overlap_rate=alpha)


def plan_to_json(plan: PartitionPlan) -> dict:
    """Shard membership snapshot for run reproducibility."""
    shards = []
    for s in plan.shards:
        if s.node_task is not None:
            t = s.node_task
            shards.append({
                "client_id": s.client_id,
                "global_ids": t.global_ids.tolist(),
                "train_mask": t.train_mask.tolist(),
                "test_mask": t.test_mask.tolist(),
            })
        else:
            t = s.graph_task
            shards.append({
                "client_id": s.client_id,
                "train_ids": t.train_ids.tolist(),
                "test_ids": t.test_ids.tolist(),
            })
    return {"scheme": plan.scheme, "overlap_rate": plan.overlap_rate,
            "seed": plan.seed, "warning": plan.warning, "shards": shards}
