"""Parameter containers for the three message-passing model families.

A model is a stack of L graph layers followed by a linear readout.  Weight
shapes per kind:
  gcn  : (d_in, d_out)
  sage : (2*d_in, d_out)   rows [:d_in] act on self features, [d_in:] on the
                           neighbor mean
  gat  : (d_in, d_out) plus a per-layer attention vector of shape (2*d_out,)
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ..errors import InvalidModelParams, NonFiniteValue, ShapeMismatch
from ..rng import derive_rng

KINDS = ("gcn", "sage", "gat")


@dataclass
class ModelParams:
    kind: str
    layer_weights: List[np.ndarray]
    attention: Optional[List[np.ndarray]]   # gat only, else None
    readout_weight: np.ndarray              # (class_count, hidden_dim)
    readout_bias: np.ndarray                # (class_count,)
    hidden_dim: int
    num_layers: int

    @property
    def class_count(self) -> int:
        return self.readout_weight.shape[0]


@dataclass
class Gradients:
    layer_weights: List[np.ndarray]
    attention: Optional[List[np.ndarray]]
    readout_weight: np.ndarray
    readout_bias: np.ndarray
    input_features: Optional[np.ndarray] = None


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(kind: str, feature_dim: int, hidden_dim: int, num_layers: int,
                class_count: int, seed) -> ModelParams:
    """Glorot-uniform initialization, deterministic in seed."""
    if kind not in KINDS:
        raise InvalidModelParams(f"unknown model kind {kind!r}")
    if num_layers < 1:
        raise InvalidModelParams("need at least one layer")
    rng = derive_rng("init", kind, feature_dim, hidden_dim, num_layers,
                     class_count, seed)
    layer_weights = []
    attention = [] if kind == "gat" else None
    d_in = feature_dim
    for _ in range(num_layers):
        if kind == "sage":
            w = _glorot(rng, d_in, hidden_dim, (2 * d_in, hidden_dim))
        else:
            w = _glorot(rng, d_in, hidden_dim, (d_in, hidden_dim))
        layer_weights.append(w)
        if kind == "gat":
            attention.append(_glorot(rng, 2 * hidden_dim, 1, (2 * hidden_dim,)))
        d_in = hidden_dim
    readout_weight = _glorot(rng, hidden_dim, class_count, (class_count, hidden_dim))
    readout_bias = np.zeros(class_count)
    return ModelParams(kind=kind, layer_weights=layer_weights, attention=attention,
                       readout_weight=readout_weight, readout_bias=readout_bias,
                       hidden_dim=hidden_dim, num_layers=num_layers)


def param_tensors(p) -> list:
    """Named tensors in canonical order, shared by params and gradients."""
    out = [(f"layer_{i}", w) for i, w in enumerate(p.layer_weights)]
    if p.attention is not None:
        out += [(f"attention_{i}", a) for i, a in enumerate(p.attention)]
    out += [("readout_weight", p.readout_weight), ("readout_bias", p.readout_bias)]
    return out


def rebuild_params(template: ModelParams, tensors: List[np.ndarray]) -> ModelParams:
    """New ModelParams from tensors in param_tensors order."""
    expected = param_tensors(template)
    if len(tensors) != len(expected):
        raise ShapeMismatch(f"expected {len(expected)} tensors, got {len(tensors)}")
    for (name, old), new in zip(expected, tensors):
        if old.shape != new.shape:
            raise ShapeMismatch(f"{name}: shape {new.shape} != {old.shape}")
    k = template.num_layers
    layer_weights = list(tensors[:k])
    if template.attention is not None:
        attention = list(tensors[k:2 * k])
        rest = tensors[2 * k:]
    else:
        attention = None
        rest = tensors[k:]
    return ModelParams(kind=template.kind, layer_weights=layer_weights,
                       attention=attention, readout_weight=rest[0],
                       readout_bias=rest[1], hidden_dim=template.hidden_dim,
                       num_layers=template.num_layers)


def zeros_like_params(p: ModelParams) -> Gradients:
    return Gradients(
        layer_weights=[np.zeros_like(w) for w in p.layer_weights],
        attention=None if p.attention is None else [np.zeros_like(a) for a in p.attention],
        readout_weight=np.zeros_like(p.readout_weight),
        readout_bias=np.zeros_like(p.readout_bias),
    )


def validate_params(p: ModelParams, feature_dim: Optional[int] = None) -> None:
    if p.kind not in KINDS:
        raise InvalidModelParams(f"unknown model kind {p.kind!r}")
    if p.num_layers != len(p.layer_weights) or p.num_layers < 1:
        raise InvalidModelParams("layer count inconsistent")
    d_in = feature_dim
    for i, w in enumerate(p.layer_weights):
        rows = w.shape[0] // 2 if p.kind == "sage" else w.shape[0]
        if d_in is not None and rows != d_in:
            raise ShapeMismatch(f"layer {i} expects input dim {rows}, got {d_in}")
        if p.kind == "sage" and w.shape[0] % 2:
            raise ShapeMismatch(f"layer {i} weight rows must be even for sage")
        d_in = w.shape[1]
    if p.kind == "gat":
        if p.attention is None or len(p.attention) != p.num_layers:
            raise InvalidModelParams("gat needs one attention vector per layer")
        for i, (a, w) in enumerate(zip(p.attention, p.layer_weights)):
            if a.shape != (2 * w.shape[1],):
                raise ShapeMismatch(f"attention {i} shape {a.shape} invalid")
    elif p.attention is not None:
        raise InvalidModelParams(f"{p.kind} takes no attention vectors")
    if p.readout_weight.shape[1] != p.layer_weights[-1].shape[1]:
        raise ShapeMismatch("readout input dim mismatch")
    if p.readout_bias.shape != (p.readout_weight.shape[0],):
        raise ShapeMismatch("readout bias shape mismatch")
    for name, t in param_tensors(p):
        if not np.all(np.isfinite(t)):
            raise NonFiniteValue(f"non-finite entries in {name}")


def save_checkpoint(p: ModelParams, path) -> None:
    arrays = {name: t for name, t in param_tensors(p)}
    meta = np.array([p.num_layers, p.hidden_dim], dtype=np.int64)
    np.savez(path, __kind__=np.bytes_(p.kind), __meta__=meta, **arrays)


def load_checkpoint(path) -> ModelParams:
    with np.load(path) as data:
        kind = bytes(data["__kind__"]).decode()
        num_layers, hidden_dim = (int(x) for x in data["__meta__"])
        layer_weights = [data[f"layer_{i}"] for i in range(num_layers)]
        attention = None
        if kind == "gat":
            attention = [data[f"attention_{i}"] for i in range(num_layers)]
        p = ModelParams(kind=kind, layer_weights=layer_weights, attention=attention,
                        readout_weight=data["readout_weight"],
                        readout_bias=data["readout_bias"],
                        hidden_dim=hidden_dim, num_layers=num_layers)
    validate_params(p)
    return p
