"""Shared fixtures and helpers for the test suite."""

import numpy as np
import pytest

from adalase.engine.builders import build_mlp, build_tiny_cnn


def perturb_params(net, rng, scale=0.05):
    """Add small Gaussian noise to all parameters.

    Freshly built nets have zero biases, which parks some ReLU inputs exactly
    at the kink where central differences are one-sided. A tiny perturbation
    moves the activations off the kink without changing anything else.
    """
    vec = net.param_vector()
    net.set_param_vector(vec + rng.normal(0.0, scale, size=vec.size))
    return net


def tiny_mlp(seed, side=4, hidden=4, classes=2):
    net = build_mlp((1, side, side), hidden, classes, seed)
    return perturb_params(net, np.random.default_rng([seed, 97]))


def tiny_cnn(seed, side=6, classes=2, width=2):
    net = build_tiny_cnn((1, side, side), classes, seed, width=width)
    return perturb_params(net, np.random.default_rng([seed, 97]))


@pytest.fixture
def rng():
    return np.random.default_rng(0)
