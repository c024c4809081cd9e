"""Finite-difference validation of every backward pass.

Each check scalarizes a layer (or a whole model's loss) and compares its
analytic gradient against central differences on a tiny problem. The suite
is the ground truth for the hand-derived backward code and doubles as the
CLI `gradcheck` subcommand.
"""

from __future__ import annotations

import numpy as np

from . import nn
from .model import (
    CompSnnConfig,
    ModelInputs,
    SpectrumAux,
    init_params,
    loss,
    model_backward,
    model_forward,
)

LAYER_TOLERANCE = 1e-6
MODEL_TOLERANCE = 1e-4

TINY_NODE_COUNT = 4
TINY_SERIES_LEN = 6


def _tiny_config() -> CompSnnConfig:
    return CompSnnConfig(node_count=TINY_NODE_COUNT, epsilon=(0.25,) * 8)


def _tiny_inputs(rng) -> ModelInputs:
    return ModelInputs(
        node_signal_flat=rng.normal(size=TINY_NODE_COUNT * 8),
        shat=rng.normal(size=TINY_NODE_COUNT),
        features=rng.normal(size=(10, TINY_SERIES_LEN)),
    )


def _tiny_aux(cfg: CompSnnConfig, rng) -> SpectrumAux:
    lam = np.sort(rng.uniform(0.0, 2.0, size=cfg.node_count))
    return SpectrumAux(lam, np.vander(lam, cfg.gcnn_degree + 1, increasing=True))


def check_linear(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(3, 4))
    w = rng.normal(size=(2, 4))
    b = rng.normal(size=2)
    proj = rng.normal(size=(3, 2))

    def loss_fn():
        return float(np.sum(nn.linear_forward(x, w, b) * proj))

    def grad_fn():
        dx, dw, db = nn.linear_backward(x, w, proj)
        return [dx, dw, db]

    return nn.grad_check(loss_fn, grad_fn, [x, w, b])


def check_conv1d(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(2, 5))
    k = rng.normal(size=(3, 2, 3))
    b = rng.normal(size=3)
    proj = rng.normal(size=(3, 5))

    def loss_fn():
        return float(np.sum(nn.conv1d_forward(x, k, b) * proj))

    def grad_fn():
        dx, dk, db = nn.conv1d_backward(x, k, proj)
        return [dx, dk, db]

    return nn.grad_check(loss_fn, grad_fn, [x, k, b])


def check_activation(name: str, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    fwd = {"relu": nn.relu, "sigmoid": nn.sigmoid, "tanh": nn.tanh}[name]
    bwd = {"relu": nn.relu_backward, "sigmoid": nn.sigmoid_backward, "tanh": nn.tanh_backward}[name]
    # keep relu inputs away from the kink, where the derivative is not defined
    x = rng.normal(size=7) + (0.5 if name == "relu" else 0.0)
    x[np.abs(x) < 0.05] += 0.1
    proj = rng.normal(size=7)

    def loss_fn():
        return float(np.sum(fwd(x) * proj))

    def grad_fn():
        return [bwd(x, proj)]

    return nn.grad_check(loss_fn, grad_fn, [x])


def check_model(kind: str, seed: int = 0) -> float:
    """End-to-end loss gradient of one model kind on a tiny configuration."""
    rng = np.random.default_rng(seed)
    cfg = _tiny_config()
    params = init_params(kind, cfg, seed=seed + 17)
    inputs = _tiny_inputs(rng)
    aux = _tiny_aux(cfg, rng)
    u = rng.uniform(0.2, 0.8, size=cfg.demographic_dim)
    eps = np.asarray(cfg.epsilon)

    def loss_fn():
        x, _ = model_forward(kind, inputs, aux, params)
        return loss(x, u, eps)[0]

    def grad_fn():
        nn.zero_grads(params)
        x, cache = model_forward(kind, inputs, aux, params)
        _, dx = loss(x, u, eps)
        model_backward(cache, dx, params)
        return [p.grad for p in params.values()]

    return nn.grad_check(loss_fn, grad_fn, [p.value for p in params.values()])


def run_suite(seed: int = 0):
    """All gradient checks with their tolerances: [(name, error, tolerance)]."""
    results = [
        ("linear", check_linear(seed), LAYER_TOLERANCE),
        ("conv1d", check_conv1d(seed), LAYER_TOLERANCE),
        ("relu", check_activation("relu", seed), LAYER_TOLERANCE),
        ("sigmoid", check_activation("sigmoid", seed), LAYER_TOLERANCE),
        ("tanh", check_activation("tanh", seed), LAYER_TOLERANCE),
    ]
    for kind in ("compsnn", "single_mlp", "single_gcnn", "single_cnn"):
        results.append((f"loss/{kind}", check_model(kind, seed), MODEL_TOLERANCE))
    return results
