"""Experiment configuration: JSON in, validated dataclass out.

Every key is checked against a closed schema so typos fail loudly instead of
silently falling back to a default.  Defaults reproduce the starred factor
tuple: IID split, M=1, t*=0.0, alpha=0.1, Renyi trigger at size 3 (node) or
fraction 0.1 (graph, 0.3 for the dd/colors3 presets), random position,
rho=0.1, tau=0, 200/1000 rounds by task, 5 repetitions.
"""

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple

from ..errors import InvalidValue, ParseError, UnknownFactor, UnknownKey
from .synth import GRAPH_PRESETS, NODE_PRESETS

TASKS = ("node", "graph")
MODELS = ("gcn", "sage", "gat")
READOUTS = ("mean", "sum")
OPTIMIZERS = ("adam", "sgd")
FORMATS = ("auto", "citation", "tu", "json")
TRIGGER_KINDS = ("renyi", "ws", "ba", "rr", "adaptive")
POSITIONS = ("random", "degree", "cluster")
DISTRIBUTIONS = {"node": ("iid", "louvain"),
                 "graph": ("iid", "label_skew", "quantity_skew")}
WIDE_TRIGGER_PRESETS = ("dd", "colors3")   # larger hosts take fraction 0.3


@dataclass
class ExperimentConfig:
    task: str
    dataset_path: Optional[str] = None
    dataset_format: str = "auto"
    dataset_name: Optional[str] = None
    feature_dim: Optional[int] = None
    model: str = "gcn"
    hidden_dim: int = 64
    num_layers: int = 2
    readout: str = "mean"
    optimizer: str = "adam"
    lr: float = 0.01
    weight_decay: float = 5e-4
    local_epochs: int = 1
    clients: int = 5
    malicious: int = 1
    distribution: str = "iid"
    label_skew_p: float = 0.5
    quantity_skew_concentration: float = 0.5
    t_star_fraction: float = 0.0
    alpha: float = 0.1
    trigger_kind: str = "renyi"
    trigger_size: int = 3
    trigger_size_fraction: Optional[float] = None
    trigger_position: str = "random"
    renyi_p: float = 0.8
    ws_k: int = 2
    ws_beta: float = 0.3
    ba_m: int = 2
    rr_d: int = 2
    trigger_feature_value: float = 1.0
    adaptive_steps: int = 50
    adaptive_lr: float = 0.01
    surrogate_epochs: int = 30
    rho: float = 0.1
    tau: int = 0
    asr_exclude_target_label: bool = True
    rounds: Optional[int] = None
    repetitions: int = 5
    master_seed: int = 0
    train_fraction: float = 0.8
    workers: int = 1
    checkpoint_interval: int = 0


def _want_int(key, x):
    if isinstance(x, bool) or not isinstance(x, int):
        raise InvalidValue(f"{key} must be an integer, got {x!r}")
    return int(x)


def _want_float(key, x):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise InvalidValue(f"{key} must be a number, got {x!r}")
    return float(x)


def _want_str(key, x, choices=None):
    if not isinstance(x, str):
        raise InvalidValue(f"{key} must be a string, got {x!r}")
    if choices is not None and x not in choices:
        raise InvalidValue(f"{key}={x!r} not one of {sorted(choices)}")
    return x


def _want_bool(key, x):
    if not isinstance(x, bool):
        raise InvalidValue(f"{key} must be a boolean, got {x!r}")
    return x


def resolve_config(raw: dict) -> ExperimentConfig:
    """Validate a raw mapping and fill every default."""
    if not isinstance(raw, dict):
        raise ParseError("config must be a JSON object")
    known = set(ExperimentConfig.__dataclass_fields__)
    for key in raw:
        if key not in known:
            raise UnknownKey(f"unknown config key {key!r}")
    if "task" not in raw:
        raise InvalidValue("task is required")
    cfg = ExperimentConfig(task=_want_str("task", raw["task"], TASKS))

    s, i, f, b = _want_str, _want_int, _want_float, _want_bool
    checks = {
        "dataset_path": lambda x: s("dataset_path", x),
        "dataset_format": lambda x: s("dataset_format", x, FORMATS),
        "dataset_name": lambda x: s("dataset_name", x),
        "feature_dim": lambda x: i("feature_dim", x),
        "model": lambda x: s("model", x, MODELS),
        "hidden_dim": lambda x: i("hidden_dim", x),
        "num_layers": lambda x: i("num_layers", x),
        "readout": lambda x: s("readout", x, READOUTS),
        "optimizer": lambda x: s("optimizer", x, OPTIMIZERS),
        "lr": lambda x: f("lr", x),
        "weight_decay": lambda x: f("weight_decay", x),
        "local_epochs": lambda x: i("local_epochs", x),
        "clients": lambda x: i("clients", x),
        "malicious": lambda x: i("malicious", x),
        "distribution": lambda x: s("distribution", x),
        "label_skew_p": lambda x: f("label_skew_p", x),
        "quantity_skew_concentration":
            lambda x: f("quantity_skew_concentration", x),
        "t_star_fraction": lambda x: f("t_star_fraction", x),
        "alpha": lambda x: f("alpha", x),
        "trigger_kind": lambda x: s("trigger_kind", x, TRIGGER_KINDS),
        "trigger_size": lambda x: i("trigger_size", x),
        "trigger_size_fraction": lambda x: f("trigger_size_fraction", x),
        "trigger_position": lambda x: s("trigger_position", x, POSITIONS),
        "renyi_p": lambda x: f("renyi_p", x),
        "ws_k": lambda x: i("ws_k", x),
        "ws_beta": lambda x: f("ws_beta", x),
        "ba_m": lambda x: i("ba_m", x),
        "rr_d": lambda x: i("rr_d", x),
        "trigger_feature_value": lambda x: f("trigger_feature_value", x),
        "adaptive_steps": lambda x: i("adaptive_steps", x),
        "adaptive_lr": lambda x: f("adaptive_lr", x),
        "surrogate_epochs": lambda x: i("surrogate_epochs", x),
        "rho": lambda x: f("rho", x),
        "tau": lambda x: i("tau", x),
        "asr_exclude_target_label":
            lambda x: b("asr_exclude_target_label", x),
        "rounds": lambda x: i("rounds", x),
        "repetitions": lambda x: i("repetitions", x),
        "master_seed": lambda x: i("master_seed", x),
        "train_fraction": lambda x: f("train_fraction", x),
        "workers": lambda x: i("workers", x),
        "checkpoint_interval": lambda x: i("checkpoint_interval", x),
    }
    for key, check in checks.items():
        if key in raw and raw[key] is not None:
            setattr(cfg, key, check(raw[key]))

    if cfg.dataset_path is None and cfg.dataset_name is None:
        raise InvalidValue("need dataset_path or a preset dataset_name")
    presets = NODE_PRESETS if cfg.task == "node" else GRAPH_PRESETS
    if cfg.dataset_path is None and cfg.dataset_name not in presets:
        raise InvalidValue(
            f"dataset_name {cfg.dataset_name!r} is not a known "
            f"{cfg.task}-task preset and no dataset_path was given")

    def require(cond, msg):
        if not cond:
            raise InvalidValue(msg)

    require(cfg.hidden_dim >= 1, "hidden_dim must be >= 1")
    require(cfg.num_layers >= 1, "num_layers must be >= 1")
    require(cfg.lr > 0, "lr must be > 0")
    require(cfg.weight_decay >= 0, "weight_decay must be >= 0")
    require(cfg.local_epochs >= 0, "local_epochs must be >= 0")
    require(cfg.clients >= 1, "clients must be >= 1")
    require(1 <= cfg.malicious <= cfg.clients,
            f"malicious={cfg.malicious} outside [1, clients={cfg.clients}]")
    require(cfg.distribution in DISTRIBUTIONS[cfg.task],
            f"distribution {cfg.distribution!r} not available for "
            f"{cfg.task}-level tasks {DISTRIBUTIONS[cfg.task]}")
    require(0 <= cfg.label_skew_p <= 1, "label_skew_p must be in [0,1]")
    require(cfg.quantity_skew_concentration > 0,
            "quantity_skew_concentration must be > 0")
    require(0 <= cfg.t_star_fraction <= 1,
            "t_star_fraction must be in [0,1]")
    require(0 <= cfg.alpha <= 1, "alpha must be in [0,1]")
    require(cfg.trigger_size >= 2, "trigger_size must be >= 2")
    require(0 <= cfg.renyi_p <= 1, "renyi_p must be in [0,1]")
    require(0 <= cfg.ws_beta <= 1, "ws_beta must be in [0,1]")
    require(cfg.ws_k >= 2 and cfg.ws_k % 2 == 0, "ws_k must be even >= 2")
    require(cfg.ba_m >= 1, "ba_m must be >= 1")
    require(cfg.rr_d >= 1, "rr_d must be >= 1")
    require(cfg.adaptive_steps >= 1, "adaptive_steps must be >= 1")
    require(cfg.adaptive_lr > 0, "adaptive_lr must be > 0")
    require(cfg.surrogate_epochs >= 1, "surrogate_epochs must be >= 1")
    require(0 < cfg.rho <= 1, f"rho={cfg.rho} outside (0,1]")
    require(cfg.tau >= 0, "tau must be >= 0")
    require(cfg.repetitions >= 1, "repetitions must be >= 1")
    require(0 < cfg.train_fraction < 1, "train_fraction must be in (0,1)")
    require(cfg.workers >= 1, "workers must be >= 1")
    require(cfg.checkpoint_interval >= 0,
            "checkpoint_interval must be >= 0")
    if cfg.feature_dim is not None:
        require(cfg.feature_dim >= 1, "feature_dim must be >= 1")

    if cfg.rounds is None:
        cfg.rounds = 200 if cfg.task == "node" else 1000
    require(cfg.rounds >= 1, "rounds must be >= 1")
    if cfg.trigger_size_fraction is None:
        wide = cfg.dataset_name in WIDE_TRIGGER_PRESETS
        cfg.trigger_size_fraction = 0.3 if wide else 0.1
    require(0 < cfg.trigger_size_fraction <= 1,
            "trigger_size_fraction must be in (0,1]")
    return cfg


def parse_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return resolve_config(raw)


def config_to_json(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)


# execution knobs that cannot change any result value
NON_SCIENTIFIC_KEYS = ("workers", "checkpoint_interval")


def config_fingerprint(cfg: ExperimentConfig) -> str:
    tracked = {k: v for k, v in config_to_json(cfg).items()
               if k not in NON_SCIENTIFIC_KEYS}
    blob = json.dumps(tracked, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


# ------------------------------------------------------------ factor grid

@dataclass(frozen=True)
class Factor:
    name: str
    keys: Dict[str, str]            # task -> config key
    grids: Dict[str, Tuple]         # task -> studied values

    def key_for(self, task: str) -> str:
        if task not in self.keys:
            raise UnknownFactor(
                f"factor {self.name!r} does not apply to {task}-level tasks")
        return self.keys[task]


def _both(key, grid):
    return {"node": key, "graph": key}, {"node": grid, "graph": grid}


FACTORS: Dict[str, Factor] = {}
for _name, (_keys, _grids) in {
    "distribution": ({"node": "distribution", "graph": "distribution"},
                     {"node": DISTRIBUTIONS["node"],
                      "graph": DISTRIBUTIONS["graph"]}),
    "malicious": _both("malicious", (1, 2, 3, 4, 5)),
    "attack_time": _both("t_star_fraction", (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)),
    "overlap": ({"node": "alpha"}, {"node": (0.1, 0.2, 0.3, 0.4, 0.5)}),
    "trigger_size": ({"node": "trigger_size",
                      "graph": "trigger_size_fraction"},
                     {"node": (3, 4, 5, 6, 7, 8, 9, 10),
                      "graph": (0.1, 0.2, 0.3, 0.4, 0.5)}),
    "trigger_type": _both("trigger_kind", TRIGGER_KINDS),
    "trigger_position": _both("trigger_position", POSITIONS),
    "poisoning_rate": _both("rho", (0.1, 0.2, 0.3, 0.4, 0.5)),
}.items():
    FACTORS[_name] = Factor(name=_name, keys=_keys, grids=_grids)
