import numpy as np
import pytest

from fgbsim.errors import ShapeMismatch
from fgbsim.nn import (
    Gradients,
    ModelParams,
    OptimizerSpec,
    init_opt_state,
    init_params,
    optimizer_step,
    param_tensors,
    zeros_like_params,
)


def scalar_model(value: float) -> ModelParams:
    return ModelParams(kind="gcn", layer_weights=[np.array([[value]])],
                       attention=None, readout_weight=np.array([[1.0]]),
                       readout_bias=np.zeros(1), hidden_dim=1, num_layers=1)


def scalar_grads(value: float) -> Gradients:
    return Gradients(layer_weights=[np.array([[value]])], attention=None,
                     readout_weight=np.zeros((1, 1)), readout_bias=np.zeros(1))


def test_sgd_definition():
    model = scalar_model(1.0)
    grads = scalar_grads(2.0)
    spec = OptimizerSpec(algo="sgd", lr=0.1, weight_decay=0.0)
    out, _ = optimizer_step(model, grads, init_opt_state(model), spec)
    assert out.layer_weights[0][0, 0] == pytest.approx(0.8)


def test_adam_first_step_magnitude():
    # bias correction makes the first update ~= lr regardless of |g|
    spec = OptimizerSpec(algo="adam", lr=0.05, weight_decay=0.0)
    for g in (1e-3, 1.0, 1e3):
        model = scalar_model(0.0)
        out, _ = optimizer_step(model, scalar_grads(g), init_opt_state(model), spec)
        assert abs(out.layer_weights[0][0, 0]) == pytest.approx(0.05, rel=1e-3)


def test_zero_grads_zero_decay_identity():
    model = init_params("gat", 4, 6, 2, 3, seed=0)
    grads = zeros_like_params(model)
    for algo in ("sgd", "adam"):
        out, _ = optimizer_step(model, grads, init_opt_state(model),
                                OptimizerSpec(algo=algo, lr=0.1))
        for (_, a), (_, b) in zip(param_tensors(model), param_tensors(out)):
            assert np.allclose(a, b)


def test_weight_decay_is_l2_gradient_term():
    model = scalar_model(2.0)
    grads = scalar_grads(0.0)
    spec = OptimizerSpec(algo="sgd", lr=0.1, weight_decay=0.5)
    out, _ = optimizer_step(model, grads, init_opt_state(model), spec)
    # effective grad = 0 + 0.5*2 = 1.0 -> param 2.0 - 0.1 = 1.9
    assert out.layer_weights[0][0, 0] == pytest.approx(1.9)


def test_adam_state_advances():
    model = scalar_model(1.0)
    spec = OptimizerSpec(algo="adam", lr=0.01)
    state = init_opt_state(model)
    p = model
    for expected_step in (1, 2, 3):
        p, state = optimizer_step(p, scalar_grads(1.0), state, spec)
        assert state.step == expected_step
    assert state.m[0][0, 0] != 0.0


def test_shape_mismatch_rejected():
    model = scalar_model(1.0)
    bad = Gradients(layer_weights=[np.zeros((2, 2))], attention=None,
                    readout_weight=np.zeros((1, 1)), readout_bias=np.zeros(1))
    with pytest.raises(ShapeMismatch):
        optimizer_step(model, bad, init_opt_state(model), OptimizerSpec(algo="sgd"))


def test_input_state_not_mutated():
    model = scalar_model(1.0)
    state = init_opt_state(model)
    before = state.m[0].copy()
    optimizer_step(model, scalar_grads(5.0), state, OptimizerSpec(algo="adam"))
    assert np.array_equal(state.m[0], before)
    assert state.step == 0
