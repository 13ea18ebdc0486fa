import numpy as np
import pytest

import stochnet as sn


def tiny_sigmoid_net(sizes=(2, 3, 2), seed=11, scale=1.0) -> sn.Network:
    """Chain of dense sigmoid layers: sizes[0] inputs, then one layer per
    remaining entry, each fed by its predecessor."""
    layers = tuple(
        sn.LayerSpec(sn.SIGMOID, n, sn.Dense((i,)))
        for i, n in enumerate(sizes[1:]))
    spec = sn.NetworkSpec(sizes[0], layers)
    return sn.Network.initialize(spec, sn.RngStream(seed), scale=scale)


def mixed_net(seed=42, scale=0.7) -> sn.Network:
    """Tanh, relusum, and sigmoid layers with skip connections."""
    from stochnet.units import relu_sum

    spec = sn.NetworkSpec(3, (
        sn.LayerSpec(sn.TANH, 3, sn.Dense((0,))),
        sn.LayerSpec(relu_sum(3), 2, sn.Dense((0, 1))),
        sn.LayerSpec(sn.SIGMOID, 2, sn.Dense((1, 2))),
        sn.LayerSpec(sn.SIGMOID, 2, sn.Dense((2, 3))),
    ))
    return sn.Network.initialize(spec, sn.RngStream(seed), scale=scale)


def all_delta_net(seed=5) -> sn.Network:
    spec = sn.NetworkSpec(2, (
        sn.LayerSpec(sn.DELTA, 2, sn.Dense((0,))),
        sn.LayerSpec(sn.DELTA, 1, sn.Dense((1,))),
    ))
    return sn.Network.initialize(spec, sn.RngStream(seed), scale=0.5)


def identity_delta_chain(width=2, depth=2) -> sn.Network:
    """Delta layers wired to copy their input through unchanged."""
    layers = tuple(
        sn.LayerSpec(sn.DELTA, width, sn.Dense((i,))) for i in range(depth))
    net = sn.Network(sn.NetworkSpec(width, layers))
    for l in range(1, depth + 1):
        for u in range(width):
            row = np.zeros(width + 1)
            row[u] = 1.0
            net.set_unit_params(l, u, row)
    return net


def grad_arrays_equal(a: "sn.GradientAccumulator", b: "sn.GradientAccumulator") -> bool:
    return all(
        np.array_equal(a.weights[l], b.weights[l])
        and np.array_equal(a.biases[l], b.biases[l])
        for l in a.weights)


@pytest.fixture
def rng():
    return sn.RngStream(20240 + 7)
