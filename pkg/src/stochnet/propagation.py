"""Forward passes.

Two ways to push an input through the network:

* :func:`forward_deterministic` propagates per-layer expected values.
  Replacing each layer's marginalization with its expectation is what a
  classical feed-forward evaluation computes, so this pass is bit-for-bit
  ordinary network evaluation.
* :func:`forward_sample` draws every layer from its conditional given the
  sampled states of the previous layers (ancestral order), yielding one
  exact joint sample of all hidden and output variables.

Both record pre-activations per layer; the sampled pass also keeps raw
events (needed for gradient evaluation and energies).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Network
from .units import (
    encode_states,
    relu_expand,
    sample_layer,
    unit_mean,
    unit_sample,
)

__all__ = [
    "ForwardTrace",
    "forward_deterministic",
    "forward_sample",
    "sample_states_batch",
    "unit_mean",
    "unit_sample",
    "relu_expand",
]


@dataclass
class ForwardTrace:
    """Per-layer record of one forward pass.

    ``preactivations[l-1]`` and ``states[l-1]`` belong to layer ``l``
    (1-based; the last layer is the output).  ``states`` holds expected
    values in deterministic mode and encoded sampled events in sampled
    mode; ``raw`` holds the underlying events ((units, k) for relusum
    layers) and is None in deterministic mode.
    """

    mode: str
    x: np.ndarray
    preactivations: list[np.ndarray]
    states: list[np.ndarray]
    raw: list[np.ndarray] | None = None

    @property
    def output_states(self) -> np.ndarray:
        return self.states[-1]

    @property
    def output_preactivations(self) -> np.ndarray:
        return self.preactivations[-1]

    def states_by_layer(self) -> dict[int, np.ndarray]:
        """Encoded states keyed by layer id, input included as 0."""
        out = {0: self.x}
        for l, s in enumerate(self.states, start=1):
            out[l] = s
        return out


def _check_input(net: Network, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (net.spec.input_count,):
        raise ValueError(
            f"input has shape {x.shape}, expected ({net.spec.input_count},)")
    return x


def forward_deterministic(net: Network, x) -> ForwardTrace:
    """Layer-by-layer expected values; the sequential approximation of the
    joint model and exactly a standard feed-forward evaluation."""
    x = _check_input(net, x)
    states = {0: x}
    preacts, means = [], []
    for l in range(1, net.spec.layer_count + 1):
        kind = net.spec.layer(l).kind
        a = net.preactivations(l, states)
        m = unit_mean(kind, a)
        preacts.append(a)
        means.append(m)
        states[l] = m
    return ForwardTrace("deterministic", x, preacts, means)


def forward_sample(net: Network, x, rng) -> ForwardTrace:
    """One ancestral sample: each layer drawn from its conditional given
    the sampled states of its sources.  The caller owns ``rng``."""
    x = _check_input(net, x)
    states = {0: x}
    preacts, encoded, raws = [], [], []
    for l in range(1, net.spec.layer_count + 1):
        kind = net.spec.layer(l).kind
        a = net.preactivations(l, states)
        raw = sample_layer(kind, a, rng)
        enc = encode_states(kind, raw)
        preacts.append(a)
        raws.append(raw)
        encoded.append(enc)
        states[l] = enc
    return ForwardTrace("sampled", x, preacts, encoded, raws)


def sample_states_batch(net: Network, x, n: int, rng) -> list[np.ndarray]:
    """``n`` independent ancestral samples at once; returns encoded states
    per layer, each of shape (n, units).  Used by the Monte-Carlo
    estimators where per-sample traces would be wasteful."""
    x = _check_input(net, x)
    states = {0: np.broadcast_to(x, (n, x.size))}
    out = []
    for l in range(1, net.spec.layer_count + 1):
        kind = net.spec.layer(l).kind
        a = net.preactivations(l, states)
        enc = encode_states(kind, sample_layer(kind, a, rng))
        out.append(enc)
        states[l] = enc
    return out
