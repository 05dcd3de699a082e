"""SGD and Adam over the model's canonical tensor list."""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ..errors import ShapeMismatch
from .params import Gradients, ModelParams, param_tensors, rebuild_params


@dataclass
class OptimizerSpec:
    algo: str = "adam"            # "sgd" | "adam"
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0


@dataclass
class OptState:
    step: int = 0
    m: Optional[List[np.ndarray]] = None
    v: Optional[List[np.ndarray]] = None


def init_opt_state(params: ModelParams) -> OptState:
    tensors = [t for _, t in param_tensors(params)]
    return OptState(step=0,
                    m=[np.zeros_like(t) for t in tensors],
                    v=[np.zeros_like(t) for t in tensors])


def optimizer_step(params: ModelParams, grads: Gradients, state: OptState,
                   spec: OptimizerSpec):
    """One update; weight decay enters as an L2 gradient term.

    Returns (new_params, new_state).  The input state is not mutated.
    """
    p_tensors = [t for _, t in param_tensors(params)]
    g_tensors = [t for _, t in param_tensors(grads)]
    if len(p_tensors) != len(g_tensors):
        raise ShapeMismatch("gradient tree does not match parameter tree")
    for p, g in zip(p_tensors, g_tensors):
        if p.shape != g.shape:
            raise ShapeMismatch(f"gradient shape {g.shape} != param {p.shape}")
    if state.m is None or state.v is None:
        state = init_opt_state(params)
    step = state.step + 1
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(p_tensors, g_tensors, state.m, state.v):
        g_eff = g + spec.weight_decay * p if spec.weight_decay else g
        if spec.algo == "sgd":
            new_p.append(p - spec.lr * g_eff)
            new_m.append(m)
            new_v.append(v)
        elif spec.algo == "adam":
            m2 = spec.beta1 * m + (1.0 - spec.beta1) * g_eff
            v2 = spec.beta2 * v + (1.0 - spec.beta2) * g_eff * g_eff
            m_hat = m2 / (1.0 - spec.beta1 ** step)
            v_hat = v2 / (1.0 - spec.beta2 ** step)
            new_p.append(p - spec.lr * m_hat / (np.sqrt(v_hat) + spec.eps))
            new_m.append(m2)
            new_v.append(v2)
        else:
            raise ValueError(f"unknown optimizer {spec.algo!r}")
    return rebuild_params(params, new_p), OptState(step=step, m=new_m, v=new_v)
