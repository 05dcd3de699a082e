"""Deterministic simulator of federated GNN training under graph backdoor
attack: trigger generation, trigger injection, FedAvg rounds, and the
ACC/ASR/TASR evaluation suite, for node- and graph-level classification."""

from . import backdoor, errors, federation, graph, harness, metrics, nn
from . import partition, rng
from .graph import Graph, build_graph, disjoint_union, induced_subgraph
from .rng import derive_rng, derive_seed

__version__ = "0.1.0"

__all__ = [
    "backdoor", "errors", "federation", "graph", "harness", "metrics",
    "nn", "partition", "rng",
    "Graph", "build_graph", "disjoint_union", "induced_subgraph",
    "derive_rng", "derive_seed",
    "__version__",
]
