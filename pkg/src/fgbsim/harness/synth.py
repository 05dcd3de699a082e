"""Synthetic stand-in datasets.

This sandbox has no network access, so benchmark datasets cannot be
downloaded.  The generators here produce graphs whose published headline
statistics (graph counts, node counts, edge counts, class counts) match the
reference corpora, with planted class signal so the classification tasks are
learnable at desk scale.  `write_*` emit the same on-disk formats the loaders
in `datasets` read, so real corpora drop in without code changes.
"""

from pathlib import Path

import numpy as np

from ..errors import InvalidValue
from ..graph import Graph, build_graph
from ..rng import derive_rng
from .datasets import GraphSet

# name -> (num_nodes, num_edges, classes)
NODE_PRESETS = {
    "cora": (2708, 5278, 7),
    "citeseer": (3327, 4552, 6),
    "pubmed": (19717, 44324, 3),
    "cs": (18333, 163788, 15),
    "physics": (34493, 495924, 5),
    "photo": (7484, 126530, 8),
    "computers": (13381, 259159, 10),
}

# name -> (num_graphs, avg_nodes, avg_edges, classes)
GRAPH_PRESETS = {
    "aids": (2000, 15.69, 16.20, 2),
    "nci1": (4110, 29.87, 32.30, 2),
    "proteins": (1113, 39.06, 72.82, 2),
    "enzymes": (600, 32.63, 64.14, 2),
    "dd": (1178, 284.32, 715.66, 2),
    "colors3": (10500, 61.31, 91.03, 11),
}

DEFAULT_FEATURE_DIM = 500      # node-task bag-of-words vocabulary
DEFAULT_ATOM_TYPES = 16        # graph-task one-hot alphabet
WORDS_PER_NODE = 40
BLOCK_SHARE = 0.7              # share of a node's words from its class block
HOMOPHILY = 0.85
HUBS_PER_CLASS = 2             # citation-style heavy tail: per-class hub nodes
HUB_SHARE = 0.75               # share of same-class edges that land on a hub
CLASS_BOOST = 3.0              # class-block weight multiplier for atom draws
FEATURE_NOISE = 0.55           # dense noise that masks plain feature mass


def synth_node_graph(name: str, feature_dim: int = None, seed: int = 0) -> Graph:
    """Homophilous citation-style graph with class-blocked word features."""
    if name not in NODE_PRESETS:
        raise InvalidValue(f"unknown node preset {name!r}")
    n, m, c = NODE_PRESETS[name]
    f = DEFAULT_FEATURE_DIM if feature_dim is None else int(feature_dim)
    if f < c:
        raise InvalidValue(f"feature_dim {f} below class count {c}")
    rng = derive_rng("synth-node", name, n, m, c, f, seed)

    labels = rng.permutation(np.arange(n, dtype=np.int64) % c)
    by_class = [np.flatnonzero(labels == y) for y in range(c)]
    hubs = [pool[:HUBS_PER_CLASS] for pool in by_class]

    # Hub-and-spoke wiring: every node anchors to one same-class hub, then
    # a homophilous fill (mostly hub-bound) tops up to the exact edge count.
    # Ordinary nodes keep degree ~1-2, so class context reaches them through
    # high-degree hubs rather than same-class leaf cliques.
    edges = set()
    for u in range(n):
        h = int(hubs[labels[u]][u % HUBS_PER_CLASS])
        if u != h:
            edges.add((min(u, h), max(u, h)))
    while len(edges) < m:
        u = int(rng.integers(n))
        if rng.random() < HOMOPHILY:
            pool = hubs[labels[u]] if rng.random() < HUB_SHARE \
                else by_class[labels[u]]
            v = int(pool[rng.integers(len(pool))])
        else:
            v = int(rng.integers(n))
        if u != v:
            edges.add((min(u, v), max(u, v)))

    block = f // c
    k_block = int(round(WORDS_PER_NODE * BLOCK_SHARE))
    k_any = WORDS_PER_NODE - k_block
    feats = np.zeros((n, f))
    rows = np.repeat(np.arange(n), k_block)
    cols = (labels[:, None] * block
            + rng.integers(0, block, size=(n, k_block))).ravel()
    feats[rows, cols] = 1.0
    rows = np.repeat(np.arange(n), k_any)
    feats[rows, rng.integers(0, f, size=n * k_any)] = 1.0
    return build_graph(sorted(edges), feats, labels=labels)


def _exact_sizes(count, lo, hi, total, rng):
    sizes = rng.integers(lo, hi + 1, size=count)
    diff = int(total - sizes.sum())
    step = 1 if diff > 0 else -1
    while diff != 0:
        i = int(rng.integers(count))
        if lo <= sizes[i] + step <= hi:
            sizes[i] += step
            diff -= step
    return sizes


def _random_connected(n, extra, rng):
    """Random recursive tree plus `extra` uniform non-tree edges."""
    have = set()
    if n > 1:
        parents = rng.integers(0, np.arange(1, n))
        have = {(int(p), i + 1) for i, p in enumerate(parents)}
    need = int(extra)
    while need > 0:
        u, v = (int(x) for x in rng.integers(0, n, size=2))
        if u == v:
            continue
        pair = (min(u, v), max(u, v))
        if pair in have:
            continue
        have.add(pair)
        need -= 1
    return sorted(have)


def synth_graph_set(name: str, seed: int = 0,
                    atom_types: int = DEFAULT_ATOM_TYPES) -> GraphSet:
    """Connected random graphs with class-conditioned atom-type features.

    Node features are one-hot atom types plus dense half-normal noise; the
    noise keeps total feature mass from being a free giveaway channel while
    the class-blocked atom draw carries the label signal.
    """
    if name not in GRAPH_PRESETS:
        raise InvalidValue(f"unknown graph preset {name!r}")
    count, avg_nodes, avg_edges, classes = GRAPH_PRESETS[name]
    a = int(atom_types)
    if a < classes:
        raise InvalidValue(f"atom_types {a} below class count {classes}")
    rng = derive_rng("synth-graph", name, count, a, seed)

    lo = max(4, int(np.floor(avg_nodes * 0.5)))
    hi = int(np.ceil(avg_nodes * 1.5))
    sizes = _exact_sizes(count, lo, hi, int(round(count * avg_nodes)), rng)

    total_edges = int(round(count * avg_edges))
    tree_edges = int(sizes.sum()) - count
    extra_total = total_edges - tree_edges
    if extra_total < 0:
        raise InvalidValue(f"preset {name!r} wants fewer edges than a tree")
    caps = sizes * (sizes - 1) // 2 - (sizes - 1)
    extras = rng.multinomial(extra_total, caps / caps.sum())
    extras = np.minimum(extras, caps)
    leftover = extra_total - int(extras.sum())
    room = caps - extras
    for g in np.argsort(-room, kind="stable"):
        if leftover == 0:
            break
        take = min(leftover, int(room[g]))
        extras[g] += take
        leftover -= take

    labels = rng.permutation(np.arange(count, dtype=np.int64) % classes)
    block = a // classes
    weights = np.ones((classes, a))
    for y in range(classes):
        weights[y, y * block:(y + 1) * block] += CLASS_BOOST
    weights /= weights.sum(axis=1, keepdims=True)

    graphs = []
    for g in range(count):
        n = int(sizes[g])
        edges = _random_connected(n, extras[g], rng)
        types = rng.choice(a, size=n, p=weights[labels[g]])
        feats = np.abs(rng.normal(0.0, FEATURE_NOISE, size=(n, a)))
        feats[np.arange(n), types] += 1.0
        graphs.append(build_graph(edges, feats, labels=int(labels[g])))
    return GraphSet(graphs=graphs, class_count=classes, feature_dim=a,
                    name=name)


def synth_dataset(name: str, task: str, feature_dim: int = None,
                  seed: int = 0):
    if task == "node":
        return synth_node_graph(name, feature_dim=feature_dim, seed=seed)
    return synth_graph_set(name, seed=seed)


# ----------------------------------------------------------------- writers

def _fmt(x: float) -> str:
    return f"{int(x)}" if float(x).is_integer() else repr(float(x))


def write_node_dataset(g: Graph, out_dir, name: str) -> Path:
    """Emit `<name>.content` and `<name>.cites` readable by the loader."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    labels = np.asarray(g.labels)
    with open(out_dir / f"{name}.content", "w") as fh:
        for i in range(g.num_nodes):
            feats = " ".join(_fmt(x) for x in g.features[i])
            fh.write(f"n{i} {feats} c{labels[i]}\n")
    with open(out_dir / f"{name}.cites", "w") as fh:
        for u, v in g.edges:
            fh.write(f"n{u} n{v}\n")
    return out_dir


def write_graph_dataset(gs: GraphSet, out_dir) -> Path:
    """Emit a TU-convention directory named after the set."""
    root = Path(out_dir) / gs.name
    root.mkdir(parents=True, exist_ok=True)
    def tu(suffix):
        return root / f"{gs.name}_{suffix}.txt"
    offset = 1
    with open(tu("A"), "w") as adj, open(tu("graph_indicator"), "w") as ind, \
            open(tu("node_attributes"), "w") as attr:
        for gid, g in enumerate(gs.graphs, start=1):
            for u, v in g.edges:
                adj.write(f"{u + offset}, {v + offset}\n")
                adj.write(f"{v + offset}, {u + offset}\n")
            for i in range(g.num_nodes):
                ind.write(f"{gid}\n")
                attr.write(", ".join(_fmt(x) for x in g.features[i]) + "\n")
            offset += g.num_nodes
    with open(tu("graph_labels"), "w") as fh:
        for g in gs.graphs:
            fh.write(f"{int(g.graph_label)}\n")
    return root
