"""Dataset ingestion.

Node datasets use the citation-network text convention: a `.content` file
with rows `id feat_1 ... feat_d label` and a `.cites` file with `cited citing`
id pairs.  Graph datasets use the TU text convention (`DS_A.txt`,
`DS_graph_indicator.txt`, `DS_graph_labels.txt`, optional node labels or
attributes, all 1-based).  Both kinds also round-trip through a canonical
JSON form for audit and caching.
"""

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import List

import numpy as np

from ..errors import InconsistentIndicator, MalformedRow, ParseError
from ..graph import Graph, build_graph


@dataclass
class GraphSet:
    graphs: List[Graph]
    class_count: int
    feature_dim: int
    name: str


def load_node_dataset(content_path, cites_path) -> Graph:
    """Citation-style node-classification graph.

    Nodes take file order; string labels map to indices by first appearance;
    edges referencing unknown ids are dropped with a counted warning.
    """
    content_path, cites_path = Path(content_path), Path(cites_path)
    ids = {}
    rows, labels, label_index = [], [], {}
    with open(content_path) as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 3:
                raise MalformedRow(content_path, line_no,
                                   "need id, at least one feature, and a label")
            node_id, feats, label = parts[0], parts[1:-1], parts[-1]
            if node_id in ids:
                raise MalformedRow(content_path, line_no,
                                   f"duplicate node id {node_id!r}")
            try:
                row = np.array([float(x) for x in feats])
            except ValueError as exc:
                raise MalformedRow(content_path, line_no, str(exc)) from None
            if rows and len(row) != len(rows[0]):
                raise MalformedRow(content_path, line_no,
                                   "inconsistent feature count")
            ids[node_id] = len(rows)
            rows.append(row)
            labels.append(label_index.setdefault(label, len(label_index)))
    if not rows:
        raise MalformedRow(content_path, 0, "empty content file")
    edges, dropped = [], 0
    with open(cites_path) as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise MalformedRow(cites_path, line_no, "need exactly two ids")
            a, b = parts
            if a not in ids or b not in ids:
                dropped += 1
                continue
            edges.append((ids[a], ids[b]))
    if dropped:
        warnings.warn(f"{cites_path}: dropped {dropped} edges with unknown ids")
    return build_graph(edges, np.stack(rows),
                       labels=np.array(labels, dtype=np.int64))


def _read_int_rows(path, columns):
    out = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.replace(",", " ").split()
            if not parts:
                continue
            if len(parts) != columns:
                raise MalformedRow(path, line_no, f"need {columns} integers")
            try:
                out.append([int(float(x)) for x in parts])
            except ValueError as exc:
                raise MalformedRow(path, line_no, str(exc)) from None
    return np.array(out, dtype=np.int64).reshape(-1, columns)


def load_graph_dataset(dir_path) -> GraphSet:
    """TU-convention graph-classification directory."""
    root = Path(dir_path)
    name = root.name
    def tu(suffix):
        return root / f"{name}_{suffix}.txt"
    indicator = _read_int_rows(tu("graph_indicator"), 1).ravel()
    edges = _read_int_rows(tu("A"), 2)
    graph_labels_raw = _read_int_rows(tu("graph_labels"), 1).ravel()
    num_nodes = len(indicator)
    num_graphs = len(graph_labels_raw)
    if indicator.min() < 1 or indicator.max() > num_graphs:
        raise InconsistentIndicator("graph indicator outside graph range")
    if len(edges) and (edges.min() < 1 or edges.max() > num_nodes):
        raise MalformedRow(tu("A"), 0, "edge endpoint outside node range")
    if len(edges):
        same = indicator[edges[:, 0] - 1] == indicator[edges[:, 1] - 1]
        if not same.all():
            bad = int(np.flatnonzero(~same)[0])
            raise InconsistentIndicator(
                f"edge {edges[bad].tolist()} joins two different graphs")

    attr_path, label_path = tu("node_attributes"), tu("node_labels")
    if attr_path.exists():
        features = np.array([
            [float(x) for x in line.replace(",", " ").split()]
            for line in attr_path.read_text().splitlines() if line.strip()
        ])
        if features.shape[0] != num_nodes:
            raise MalformedRow(attr_path, 0, "attribute row count mismatch")
    elif label_path.exists():
        node_labels = _read_int_rows(label_path, 1).ravel()
        if len(node_labels) != num_nodes:
            raise MalformedRow(label_path, 0, "node label count mismatch")
        values = np.unique(node_labels)
        lookup = {v: i for i, v in enumerate(values)}
        features = np.zeros((num_nodes, len(values)))
        for i, v in enumerate(node_labels):
            features[i, lookup[int(v)]] = 1.0
    else:
        features = np.ones((num_nodes, 1))

    classes = np.unique(graph_labels_raw)
    remap = {int(v): i for i, v in enumerate(classes)}
    graphs = []
    # nodes of graph g are contiguous in TU files only by convention; use the
    # indicator itself so permuted files still load
    for g in range(1, num_graphs + 1):
        members = np.flatnonzero(indicator == g)
        local = -np.ones(num_nodes, dtype=np.int64)
        local[members] = np.arange(len(members))
        if len(edges):
            mask = indicator[edges[:, 0] - 1] == g
            local_edges = local[edges[mask] - 1]
        else:
            local_edges = np.zeros((0, 2), dtype=np.int64)
        graphs.append(build_graph(local_edges, features[members],
                                  labels=remap[int(graph_labels_raw[g - 1])]))
    return GraphSet(graphs=graphs, class_count=len(classes),
                    feature_dim=features.shape[1], name=name)


# -------------------------------------------------------- canonical JSON

def node_graph_to_json(g: Graph) -> dict:
    return {
        "kind": "node",
        "num_nodes": g.num_nodes,
        "edges": g.edges.tolist(),
        "features": g.features.tolist(),
        "labels": np.asarray(g.labels).tolist(),
    }


def node_graph_from_json(blob: dict) -> Graph:
    if blob.get("kind") != "node":
        raise ParseError("expected a node-level dataset blob")
    return build_graph(blob["edges"], np.array(blob["features"], dtype=np.float64),
                       labels=np.array(blob["labels"], dtype=np.int64))


def graphset_to_json(gs: GraphSet) -> dict:
    return {
        "kind": "graph",
        "name": gs.name,
        "class_count": gs.class_count,
        "feature_dim": gs.feature_dim,
        "graphs": [{
            "edges": g.edges.tolist(),
            "features": g.features.tolist(),
            "label": int(g.graph_label),
        } for g in gs.graphs],
    }


def graphset_from_json(blob: dict) -> GraphSet:
    if blob.get("kind") != "graph":
        raise ParseError("expected a graph-level dataset blob")
    graphs = [build_graph(item["edges"],
                          np.array(item["features"], dtype=np.float64),
                          labels=int(item["label"]))
              for item in blob["graphs"]]
    return GraphSet(graphs=graphs, class_count=int(blob["class_count"]),
                    feature_dim=int(blob["feature_dim"]), name=blob["name"])


def load_dataset(task: str, path, fmt: str):
    """Dispatch by task and on-disk format; returns Graph or GraphSet."""
    path = Path(path)
    if fmt == "json":
        blob = json.loads(path.read_text())
        return node_graph_from_json(blob) if task == "node" \
            else graphset_from_json(blob)
    if task == "node":
        if path.is_dir():
            content = sorted(path.glob("*.content"))
            cites = sorted(path.glob("*.cites"))
            if not content or not cites:
                raise FileNotFoundError(f"no .content/.cites pair in {path}")
            return load_node_dataset(content[0], cites[0])
        return load_node_dataset(path.with_suffix(".content"),
                                 path.with_suffix(".cites"))
    return load_graph_dataset(path)
