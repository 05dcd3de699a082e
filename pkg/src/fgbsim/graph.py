"""Sparse undirected graph with node features and labels.

Graphs are immutable after construction: every operation that "modifies" a
graph returns a new one.  Edges are stored canonically as an (m, 2) int array
with u < v, sorted lexicographically, no self-loops, no duplicates.
"""

from dataclasses import dataclass, replace
from functools import cached_property
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .errors import DuplicateNode, IndexOutOfRange, ShapeMismatch


class NodeScore(NamedTuple):
    node: int
    value: float


@dataclass(frozen=True)
class Graph:
    """Undirected graph over ``num_nodes`` nodes.

    ``labels`` is a per-node int array for node-classification graphs, a
    single int for graph-classification samples, or None when unlabeled.
    """

    num_nodes: int
    edges: np.ndarray                     # (m, 2) int64, canonical
    features: np.ndarray                  # (num_nodes, feature_dim) float64
    labels: Union[np.ndarray, int, None] = None

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric boolean structure as a 0/1 float CSR matrix."""
        n = self.num_nodes
        if len(self.edges) == 0:
            return sp.csr_matrix((n, n))
        u, v = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * len(self.edges))
        a = sp.coo_matrix((data, (np.r_[u, v], np.r_[v, u])), shape=(n, n))
        return a.tocsr()

    @cached_property
    def degrees(self) -> np.ndarray:
        adj = self.adjacency
        return np.diff(adj.indptr).astype(np.int64)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def graph_label(self) -> Optional[int]:
        return self.labels if isinstance(self.labels, (int, np.integer)) else None

    def neighbors(self, v: int) -> np.ndarray:
        """Sorted neighbor indices of v."""
        if not 0 <= v < self.num_nodes:
            raise IndexOutOfRange(f"node {v} out of range [0, {self.num_nodes})")
        adj = self.adjacency
        return adj.indices[adj.indptr[v]:adj.indptr[v + 1]]

    def with_features(self, features: np.ndarray) -> "Graph":
        if features.shape[0] != self.num_nodes:
            raise ShapeMismatch("feature rows must match node count")
        out = replace(self, features=np.asarray(features, dtype=np.float64))
        # structure is unchanged, so structural caches stay valid
        for key in ("adjacency", "degrees", "_layer_cache"):
            if key in self.__dict__:
                out.__dict__[key] = self.__dict__[key]
        return out


def _canonical_edges(edge_list, num_nodes: int) -> np.ndarray:
    edges = np.asarray(edge_list, dtype=np.int64)
    if edges.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    edges = edges.reshape(-1, 2)
    if edges.min() < 0 or edges.max() >= num_nodes:
        raise IndexOutOfRange(
            f"edge endpoint out of range [0, {num_nodes})"
        )
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    keep = lo != hi                       # drop self-loops
    lo, hi = lo[keep], hi[keep]
    if len(lo) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    canon = np.unique(np.stack([lo, hi], axis=1), axis=0)
    return canon


def build_graph(edge_list, features, labels=None) -> Graph:
    """Construct a canonical Graph.

    Deduplicates edges, symmetrizes directed input, drops self-loops.  Node
    order is taken from the feature matrix rows.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ShapeMismatch("features must be a 2-d matrix")
    num_nodes = features.shape[0]
    edges = _canonical_edges(edge_list, num_nodes)
    if isinstance(labels, (int, np.integer)):
        labels = int(labels)
    elif labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (num_nodes,):
            raise ShapeMismatch(
                f"labels shape {labels.shape} != ({num_nodes},)"
            )
    return Graph(num_nodes=num_nodes, edges=edges, features=features, labels=labels)


def degree(g: Graph, v: int) -> int:
    """Number of distinct neighbors of v."""
    if not 0 <= v < g.num_nodes:
        raise IndexOutOfRange(f"node {v} out of range [0, {g.num_nodes})")
    return int(g.degrees[v])


def clustering_coefficient(g: Graph, v: int) -> float:
    """Local clustering coefficient: 2*triangles / (deg*(deg-1)).

    Returns 0.0 for nodes of degree < 2.
    """
    nbrs = g.neighbors(v)
    d = len(nbrs)
    if d < 2:
        return 0.0
    adj = g.adjacency
    # count edges among neighbors: each triangle through v counted twice
    links = 0
    nbr_set = nbrs
    for u in nbrs:
        u_nbrs = adj.indices[adj.indptr[u]:adj.indptr[u + 1]]
        links += len(np.intersect1d(u_nbrs, nbr_set, assume_unique=True))
    triangles = links // 2
    return 2.0 * triangles / (d * (d - 1))


def all_degrees(g: Graph) -> np.ndarray:
    return g.degrees.copy()


def all_clustering_coefficients(g: Graph) -> np.ndarray:
    return np.array([clustering_coefficient(g, v) for v in range(g.num_nodes)])


def induced_subgraph(g: Graph, nodes: Sequence[int]) -> Graph:
    """Subgraph over ``nodes``, relabeled to 0..len(nodes)-1 in input order."""
    nodes = np.asarray(nodes, dtype=np.int64)
    if nodes.size and (nodes.min() < 0 or nodes.max() >= g.num_nodes):
        raise IndexOutOfRange("subgraph node out of range")
    if len(np.unique(nodes)) != len(nodes):
        raise DuplicateNode("duplicate node in subgraph selection")
    new_id = -np.ones(g.num_nodes, dtype=np.int64)
    new_id[nodes] = np.arange(len(nodes))
    if len(g.edges):
        u, v = g.edges[:, 0], g.edges[:, 1]
        keep = (new_id[u] >= 0) & (new_id[v] >= 0)
        sub_edges = np.stack([new_id[u[keep]], new_id[v[keep]]], axis=1)
    else:
        sub_edges = np.zeros((0, 2), dtype=np.int64)
    labels = g.labels
    if isinstance(labels, np.ndarray):
        labels = labels[nodes]
    return build_graph(sub_edges, g.features[nodes], labels)


def normalized_adjacency(g: Graph) -> sp.csr_matrix:
    """Symmetric-normalized propagation operator D~^{-1/2} (A+I) D~^{-1/2}."""
    n = g.num_nodes
    a_hat = g.adjacency + sp.identity(n, format="csr")
    deg = np.asarray(a_hat.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(deg)
    d = sp.diags(inv_sqrt)
    return (d @ a_hat @ d).tocsr()


def disjoint_union(graphs: Sequence[Graph]) -> tuple[Graph, np.ndarray]:
    """Stack graphs into one block-diagonal graph.

    Returns the union graph (labels dropped) and the per-node graph index.
    """
    if not graphs:
        raise ShapeMismatch("cannot union zero graphs")
    sizes = np.array([g.num_nodes for g in graphs])
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    edge_parts = [g.edges + off for g, off in zip(graphs, offsets) if len(g.edges)]
    edges = np.concatenate(edge_parts) if edge_parts else np.zeros((0, 2), dtype=np.int64)
    features = np.concatenate([g.features for g in graphs], axis=0)
    segment = np.repeat(np.arange(len(graphs)), sizes)
    union = Graph(num_nodes=int(sizes.sum()), edges=edges, features=features, labels=None)
    return union, segment
