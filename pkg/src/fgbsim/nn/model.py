"""Model forward, loss/gradient, and prediction.

Graph-level samples are evaluated in block-diagonal batches: make_batch packs
a list of graphs into one disjoint-union Graph plus a pooling matrix, so one
forward pass scores every graph in the batch.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from ..errors import EmptyMask, NonFiniteValue, ShapeMismatch
from ..graph import Graph, disjoint_union
from .layers import layer_backward, layer_forward
from .params import Gradients, ModelParams


@dataclass
class ActivationTape:
    """Everything the backward pass needs, layer 0 = input features."""
    hidden: List[np.ndarray]          # [h^0 .. h^L], h^0 is the input
    pre_activations: List[np.ndarray]
    layer_caches: List[dict]
    pooled: Optional[np.ndarray]      # graph task only
    logits: np.ndarray


@dataclass
class GraphBatch:
    graph: Graph                      # disjoint union
    pool: sp.csr_matrix               # (num_graphs, num_nodes)
    labels: np.ndarray                # (num_graphs,) int
    num_graphs: int


def make_batch(graphs: Sequence[Graph], readout: str = "mean") -> GraphBatch:
    union, segment = disjoint_union(graphs)
    sizes = np.array([g.num_nodes for g in graphs], dtype=np.float64)
    if readout == "mean":
        data = 1.0 / sizes[segment]
    elif readout == "sum":
        data = np.ones(union.num_nodes)
    else:
        raise ValueError(f"unknown readout {readout!r}")
    pool = sp.csr_matrix(
        (data, (segment, np.arange(union.num_nodes))),
        shape=(len(graphs), union.num_nodes),
    )
    labels = np.array(
        [g.graph_label if g.graph_label is not None else -1 for g in graphs],
        dtype=np.int64,
    )
    return GraphBatch(graph=union, pool=pool, labels=labels, num_graphs=len(graphs))


def forward(model: ModelParams, g: Graph, task: str,
            pool: Optional[sp.csr_matrix] = None):
    """Run L message-passing layers plus the readout.

    task "node": logits per node.  task "graph": node states are pooled
    (mean by default, or by the supplied pooling matrix) before the readout.
    Returns (logits, ActivationTape).
    """
    h = g.features
    expect = model.layer_weights[0].shape[0]
    if model.kind == "sage":
        expect //= 2
    if h.shape[1] != expect:
        raise ShapeMismatch(f"feature dim {h.shape[1]} != layer input {expect}")
    hidden = [h]
    pres, caches = [], []
    for layer in range(model.num_layers):
        a_vec = model.attention[layer] if model.attention is not None else None
        z, cache = layer_forward(model.kind, g, h, model.layer_weights[layer], a_vec)
        h = np.maximum(z, 0.0)
        hidden.append(h)
        pres.append(z)
        caches.append(cache)
    pooled = None
    if task == "graph":
        if pool is None:
            pool = sp.csr_matrix(np.full((1, g.num_nodes), 1.0 / g.num_nodes))
        pooled = pool @ h
        logits = pooled @ model.readout_weight.T + model.readout_bias
    elif task == "node":
        logits = h @ model.readout_weight.T + model.readout_bias
    else:
        raise ValueError(f"unknown task {task!r}")
    if not np.all(np.isfinite(logits)):
        raise NonFiniteValue("non-finite logits")
    tape = ActivationTape(hidden=hidden, pre_activations=pres,
                          layer_caches=caches, pooled=pooled, logits=logits)
    return logits, tape


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=1, keepdims=True)


def loss_and_gradients(model: ModelParams, g: Graph, labels, mask,
                       task: str = "node", pool: Optional[sp.csr_matrix] = None,
                       want_input_grad: bool = False):
    """Mean softmax cross-entropy over the masked samples.

    mask holds sample indices: node ids for the node task, batch-row ids for
    the graph task.  Returns (loss, Gradients).
    """
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise EmptyMask("loss needs at least one sample")
    labels = np.asarray(labels, dtype=np.int64)
    if task == "graph" and pool is None:
        pool = sp.csr_matrix(np.full((1, g.num_nodes), 1.0 / g.num_nodes))
    logits, tape = forward(model, g, task, pool=pool)
    probs = _softmax(logits[mask])
    picked = probs[np.arange(len(mask)), labels[mask]]
    loss = float(-np.mean(np.log(np.maximum(picked, 1e-300))))
    if not np.isfinite(loss):
        raise NonFiniteValue("non-finite loss")

    dlogits = np.zeros_like(logits)
    dsel = probs.copy()
    dsel[np.arange(len(mask)), labels[mask]] -= 1.0
    np.add.at(dlogits, mask, dsel / len(mask))

    carrier = tape.pooled if task == "graph" else tape.hidden[-1]
    d_readout_w = dlogits.T @ carrier
    d_readout_b = dlogits.sum(axis=0)
    dcarrier = dlogits @ model.readout_weight
    dh = pool.T @ dcarrier if task == "graph" else dcarrier

    d_layers: List[Optional[np.ndarray]] = [None] * model.num_layers
    d_attn = None if model.attention is None else [None] * model.num_layers
    for layer in reversed(range(model.num_layers)):
        dz = dh * (tape.pre_activations[layer] > 0)
        a_vec = model.attention[layer] if model.attention is not None else None
        dw, da, dh = layer_backward(model.kind, g, tape.hidden[layer],
                                    model.layer_weights[layer], a_vec,
                                    tape.layer_caches[layer], dz)
        d_layers[layer] = dw
        if d_attn is not None:
            d_attn[layer] = da
    grads = Gradients(layer_weights=d_layers, attention=d_attn,
                      readout_weight=d_readout_w, readout_bias=d_readout_b,
                      input_features=dh if want_input_grad else None)
    return loss, grads


def predict(model: ModelParams, g: Graph, task: str,
            pool: Optional[sp.csr_matrix] = None) -> np.ndarray:
    """Argmax class per sample; ties go to the smaller class index."""
    logits, _ = forward(model, g, task, pool=pool)
    return np.argmax(logits, axis=1)
