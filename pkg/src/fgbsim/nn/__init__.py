from .params import (
    Gradients,
    ModelParams,
    init_params,
    load_checkpoint,
    param_tensors,
    rebuild_params,
    save_checkpoint,
    validate_params,
    zeros_like_params,
)
from .model import (
    ActivationTape,
    GraphBatch,
    forward,
    loss_and_gradients,
    make_batch,
    predict,
)
from .optim import OptimizerSpec, OptState, init_opt_state, optimizer_step

__all__ = [
    "ActivationTape",
    "Gradients",
    "GraphBatch",
    "ModelParams",
    "OptState",
    "OptimizerSpec",
    "forward",
    "init_opt_state",
    "init_params",
    "load_checkpoint",
    "loss_and_gradients",
    "make_batch",
    "optimizer_step",
    "param_tensors",
    "predict",
    "rebuild_params",
    "save_checkpoint",
    "validate_params",
    "zeros_like_params",
]
