"""Unit distribution families.

A unit is a discrete conditional distribution over events given a scalar
pre-activation ``a`` (inner product of its inputs and weights).  Events are
mapped into real values by an encoding, so that expectations are defined:

* ``sigmoid``  events {0, 1} encoded as {0.0, 1.0},   p(e|a) prop exp(enc(e) * a)
* ``tanh``     events {-1, +1} encoded as {-1.0, 1.0}, same log-linear form
* ``relusum``  K internal sigmoid events at shifted pre-activations
               a - i + 0.5 (i = 1..K); the unit's value is their encoded sum,
               a bounded stochastic stand-in for a rectifier on [0, K]
* ``delta``    deterministic: the single event ``a`` has probability 1

The expectation of the encoded event under each family is exactly the
classical transfer function (logistic, tanh, sum-of-logistics, identity),
which is what ties the deterministic network view to the probabilistic one.

``delta`` units are fixed wiring: they pass their pre-activation through
unchanged and their weights are not learnable.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

__all__ = [
    "UnitKind",
    "SIGMOID",
    "TANH",
    "DELTA",
    "relu_sum",
    "sigmoid",
    "softplus",
    "relu_expand",
    "unit_mean",
    "unit_mean_derivative",
    "unit_sample",
    "log_event_prob",
    "enumerate_events",
    "sample_layer",
    "encode_states",
]

_VARIANTS = ("sigmoid", "tanh", "relusum", "delta")


@dataclass(frozen=True)
class UnitKind:
    """Distribution family of a unit; ``k`` is the internal count for relusum."""

    variant: str
    k: int = 1

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown unit variant {self.variant!r}")
        if self.variant == "relusum" and self.k < 1:
            raise ValueError("relusum requires k >= 1")

    @property
    def learnable(self) -> bool:
        return self.variant != "delta"

    @property
    def stochastic(self) -> bool:
        return self.variant != "delta"

    @property
    def event_count(self) -> int:
        """Number of discrete events given fixed inputs."""
        if self.variant == "delta":
            return 1
        if self.variant == "relusum":
            return 2**self.k
        return 2

    def encoding_bounds(self) -> tuple[float, float]:
        """Convex hull of the encoding values (delta is unbounded)."""
        if self.variant == "sigmoid":
            return (0.0, 1.0)
        if self.variant == "tanh":
            return (-1.0, 1.0)
        if self.variant == "relusum":
            return (0.0, float(self.k))
        return (-np.inf, np.inf)

    def __str__(self) -> str:
        if self.variant == "relusum":
            return f"relusum{self.k}"
        return self.variant


SIGMOID = UnitKind("sigmoid")
TANH = UnitKind("tanh")
DELTA = UnitKind("delta")


def relu_sum(k: int = 8) -> UnitKind:
    return UnitKind("relusum", k)


def parse_kind(text: str) -> UnitKind:
    """Inverse of str(UnitKind), e.g. 'sigmoid', 'relusum8'."""
    text = text.strip().lower()
    if text.startswith("relusum"):
        tail = text[len("relusum"):]
        if not tail:
            raise ValueError("relusum kind needs an internal count, e.g. relusum8")
        return UnitKind("relusum", int(tail))
    return UnitKind(text)


def sigmoid(a):
    """Numerically stable logistic function."""
    a = np.asarray(a, dtype=float)
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    if out.ndim == 0:
        return float(out)
    return out


def softplus(a):
    """log(1 + exp(a)) without overflow."""
    a = np.asarray(a, dtype=float)
    out = np.maximum(a, 0.0) + np.log1p(np.exp(-np.abs(a)))
    if out.ndim == 0:
        return float(out)
    return out


def relu_expand(a, k: int):
    """Internal pre-activations of a relusum unit: a - i + 0.5 for i = 1..k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    a = np.asarray(a, dtype=float)
    offsets = np.arange(1, k + 1) - 0.5
    return a[..., None] - offsets


def unit_mean(kind: UnitKind, a):
    """Expected encoded event given pre-activation(s) ``a``."""
    if kind.variant == "sigmoid":
        return sigmoid(a)
    if kind.variant == "tanh":
        a = np.asarray(a, dtype=float)
        out = np.tanh(a)
        return float(out) if out.ndim == 0 else out
    if kind.variant == "relusum":
        out = sigmoid(relu_expand(a, kind.k)).sum(axis=-1)
        return float(out) if np.ndim(out) == 0 else out
    # delta: identity pass-through
    a = np.asarray(a, dtype=float)
    return float(a) if a.ndim == 0 else a.copy()


def unit_mean_derivative(kind: UnitKind, a):
    """d(mean)/d(pre-activation); the backward-pass transfer weight."""
    if kind.variant == "sigmoid":
        s = sigmoid(a)
        return s * (1.0 - s)
    if kind.variant == "tanh":
        t = np.tanh(np.asarray(a, dtype=float))
        out = 1.0 - t * t
        return float(out) if out.ndim == 0 else out
    if kind.variant == "relusum":
        s = sigmoid(relu_expand(a, kind.k))
        out = (s * (1.0 - s)).sum(axis=-1)
        return float(out) if np.ndim(out) == 0 else out
    # delta passes its pre-activation through unchanged
    a = np.asarray(a, dtype=float)
    return float(np.ones(())) if a.ndim == 0 else np.ones_like(a)


def log_event_prob(kind: UnitKind, event, a: float) -> float:
    """ln p(event | a).  Delta yields 0.0 or -inf.

    relusum events are length-k tuples of the internal sigmoid events.
    """
    if kind.variant == "sigmoid":
        if event not in (0, 1):
            raise ValueError(f"sigmoid event must be 0 or 1, got {event!r}")
        return float(event) * a - softplus(a)
    if kind.variant == "tanh":
        if event not in (-1, 1):
            raise ValueError(f"tanh event must be -1 or +1, got {event!r}")
        return -softplus(-2.0 * a) if event == 1 else -softplus(2.0 * a)
    if kind.variant == "relusum":
        ev = tuple(event)
        if len(ev) != kind.k:
            raise ValueError(f"relusum event needs {kind.k} internal events")
        shifted = relu_expand(a, kind.k)
        return float(sum(e * s - softplus(s) for e, s in zip(ev, shifted)))
    # delta: exact equality is the contract (the event IS the computed value)
    return 0.0 if float(event) == float(a) else -np.inf


def encode_event(kind: UnitKind, event) -> float:
    if kind.variant == "relusum":
        return float(sum(event))
    return float(event)


def enumerate_events(kind: UnitKind, a: float):
    """All (event, encoded_value, log_prob) triples of the unit given ``a``."""
    if kind.variant == "sigmoid":
        return [(0, 0.0, -softplus(a)), (1, 1.0, a - softplus(a))]
    if kind.variant == "tanh":
        return [(-1, -1.0, -softplus(2.0 * a)), (1, 1.0, -softplus(-2.0 * a))]
    if kind.variant == "relusum":
        out = []
        for ev in itertools.product((0, 1), repeat=kind.k):
            out.append((ev, float(sum(ev)), log_event_prob(kind, ev, a)))
        return out
    return [(float(a), float(a), 0.0)]


def unit_sample(kind: UnitKind, a: float, rng) -> float:
    """Draw one event and return its encoded value."""
    if kind.variant == "sigmoid":
        return float(rng.uniform() < sigmoid(a))
    if kind.variant == "tanh":
        return 1.0 if rng.uniform() < sigmoid(2.0 * a) else -1.0
    if kind.variant == "relusum":
        p = sigmoid(relu_expand(float(a), kind.k))[0]
        return float((rng.uniform(kind.k) < p).sum())
    return float(a)


def sample_layer(kind: UnitKind, a: np.ndarray, rng) -> np.ndarray:
    """Vectorized event draw for one layer (or a batch of layers).

    ``a`` has shape (..., n).  Returns raw states: shape (..., n) for
    two-event kinds and delta, shape (..., n, k) of internal events for
    relusum.  Use :func:`encode_states` to get encoded values.
    """
    a = np.asarray(a, dtype=float)
    if kind.variant == "sigmoid":
        return (rng.uniform(a.shape) < sigmoid(a)).astype(float)
    if kind.variant == "tanh":
        return np.where(rng.uniform(a.shape) < sigmoid(2.0 * a), 1.0, -1.0)
    if kind.variant == "relusum":
        p = sigmoid(relu_expand(a, kind.k))
        return (rng.uniform(p.shape) < p).astype(float)
    return a.copy()


def encode_states(kind: UnitKind, raw: np.ndarray) -> np.ndarray:
    """Encoded values of raw states from :func:`sample_layer`."""
    if kind.variant == "relusum":
        return raw.sum(axis=-1)
    return raw
