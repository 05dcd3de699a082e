import numpy as np
import pytest

from fgbsim.errors import InvalidValue
from fgbsim.harness import (GRAPH_PRESETS, NODE_PRESETS, synth_graph_set,
                            synth_node_graph)


class TestNodePresets:
    @pytest.mark.parametrize("name", ["cora", "citeseer", "pubmed"])
    def test_published_counts(self, name):
        n, m, c = NODE_PRESETS[name]
        g = synth_node_graph(name)
        assert g.num_nodes == n
        assert g.num_edges == m
        labels = np.asarray(g.labels)
        assert int(labels.max()) + 1 == c
        # every class populated and roughly balanced
        counts = np.bincount(labels, minlength=c)
        assert counts.min() >= n // c - 1

    def test_deterministic(self):
        a = synth_node_graph("citeseer", feature_dim=30)
        b = synth_node_graph("citeseer", feature_dim=30)
        assert np.array_equal(a.edges, b.edges)
        assert np.array_equal(a.features, b.features)
        c = synth_node_graph("citeseer", feature_dim=30, seed=1)
        assert not np.array_equal(a.edges, c.edges)

    def test_homophily_planted(self):
        g = synth_node_graph("citeseer", feature_dim=30)
        labels = np.asarray(g.labels)
        same = labels[g.edges[:, 0]] == labels[g.edges[:, 1]]
        assert same.mean() > 0.75

    def test_degree_tail_is_hub_shaped(self):
        # citation texture: a few heavy anchors, everyone else sparse
        g = synth_node_graph("citeseer", feature_dim=30)
        deg = g.degrees
        assert deg.max() >= 50
        assert np.median(deg) <= 2

    def test_unknown_preset(self):
        with pytest.raises(InvalidValue):
            synth_node_graph("texas")


class TestGraphPresets:
    @pytest.mark.parametrize("name", ["aids", "enzymes"])
    def test_published_averages(self, name):
        count, avg_nodes, avg_edges, classes = GRAPH_PRESETS[name]
        gs = synth_graph_set(name)
        assert len(gs.graphs) == count
        sizes = np.array([g.num_nodes for g in gs.graphs])
        edges = np.array([g.num_edges for g in gs.graphs])
        assert abs(sizes.mean() - avg_nodes) < 0.005
        assert abs(edges.mean() - avg_edges) < 0.005
        assert gs.class_count == classes

    def test_graphs_connected(self):
        gs = synth_graph_set("aids")
        for g in gs.graphs[:50]:
            seen = {0}
            frontier = [0]
            while frontier:
                v = frontier.pop()
                for w in g.neighbors(v):
                    if int(w) not in seen:
                        seen.add(int(w))
                        frontier.append(int(w))
            assert len(seen) == g.num_nodes

    def test_deterministic(self):
        a = synth_graph_set("aids")
        b = synth_graph_set("aids")
        assert np.array_equal(a.graphs[7].features, b.graphs[7].features)
        assert np.array_equal(a.graphs[7].edges, b.graphs[7].edges)

    def test_class_signal_present(self):
        gs = synth_graph_set("aids")
        # pooled atom histograms must separate the two classes on average
        means = {0: [], 1: []}
        for g in gs.graphs[:400]:
            means[int(g.graph_label)].append(g.features.mean(axis=0))
        gap = np.abs(np.mean(means[0], axis=0) - np.mean(means[1], axis=0))
        assert gap.max() > 0.05

    def test_unknown_preset(self):
        with pytest.raises(InvalidValue):
            synth_graph_set("qm9")
