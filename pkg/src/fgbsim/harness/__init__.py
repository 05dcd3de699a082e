"""Benchmark harness: datasets, config, drivers, plots, CLI."""

from .config import (ExperimentConfig, FACTORS, config_fingerprint,
                     config_to_json, parse_config, resolve_config)
from .datasets import (GraphSet, graphset_from_json, graphset_to_json,
                       load_dataset, load_graph_dataset, load_node_dataset,
                       node_graph_from_json, node_graph_to_json)
from .experiment import (dataset_info, load_config_dataset, run_experiment,
                         run_rep, sweep, trigger_node_count)
from .plotting import line_plot, plot_run, plot_sweep
from .synth import (GRAPH_PRESETS, NODE_PRESETS, synth_dataset,
                    synth_graph_set, synth_node_graph, write_graph_dataset,
                    write_node_dataset)

__all__ = [
    "ExperimentConfig", "FACTORS", "config_fingerprint", "config_to_json",
    "parse_config", "resolve_config",
    "GraphSet", "graphset_from_json", "graphset_to_json", "load_dataset",
    "load_graph_dataset", "load_node_dataset", "node_graph_from_json",
    "node_graph_to_json",
    "dataset_info", "load_config_dataset", "run_experiment", "run_rep",
    "sweep", "trigger_node_count",
    "line_plot", "plot_run", "plot_sweep",
    "GRAPH_PRESETS", "NODE_PRESETS", "synth_dataset", "synth_graph_set",
    "synth_node_graph", "write_graph_dataset", "write_node_dataset",
]
