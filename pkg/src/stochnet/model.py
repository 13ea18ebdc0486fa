"""Network data model.

A network is a layered DAG of units.  Layer 0 is the real-valued input
vector; layers 1..L are unit layers, the last one being the output layer.
Each unit owns a weight vector over its input set plus a trailing bias
(modeled as a constant-1 augmented input), and a conditional distribution
from :mod:`stochnet.units`.  The joint model is the product of per-unit
conditionals given the encoded states of their inputs; equivalently an
energy that is the sum of per-unit negative log conditionals, so that
exp(-energy) recovers the joint conditional probability with no
normalization constant.

Connectivity is either dense (all units of a set of earlier layers) or
local (units of the previous ``depth_radius`` layers within a Chebyshev
``spatial_radius`` on a declared 2-D grid, optionally plus raw image
pixels in the same window).  Receptive fields are truncated at grid
boundaries; there is no padding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .units import UnitKind, encode_states, log_event_prob, softplus

__all__ = [
    "Dense",
    "Local",
    "LayerSpec",
    "NetworkSpec",
    "Network",
    "Assignment",
    "validate",
    "require_valid",
    "log_conditional",
    "layer_log_prob",
    "energy",
]


@dataclass(frozen=True)
class Dense:
    """All units of each listed earlier layer feed every unit; 0 is the input."""

    from_layers: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "from_layers", tuple(sorted(set(int(i) for i in self.from_layers))))


@dataclass(frozen=True)
class Local:
    """Grid-local connectivity: previous ``depth_radius`` layers within
    ``spatial_radius`` (Chebyshev) of the unit's grid position."""

    depth_radius: int
    spatial_radius: int
    grid: tuple[int, int]
    image_access: bool = False


@dataclass(frozen=True)
class LayerSpec:
    kind: UnitKind
    unit_count: int
    conn: Dense | Local


@dataclass(frozen=True)
class NetworkSpec:
    """Static architecture; ``input_grid`` = (h, w, channels) when the
    input vector is an image, required for local image access."""

    input_count: int
    layers: tuple[LayerSpec, ...]
    input_grid: tuple[int, int, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))

    @property
    def layer_count(self) -> int:
        return len(self.layers)

    def layer(self, layer_id: int) -> LayerSpec:
        """1-based layer access (0 is the input)."""
        return self.layers[layer_id - 1]

    def state_size(self, layer_id: int) -> int:
        return self.input_count if layer_id == 0 else self.layer(layer_id).unit_count


def _local_sources(spec: NetworkSpec, layer_id: int) -> list[int]:
    conn = spec.layer(layer_id).conn
    first = max(1, layer_id - conn.depth_radius)
    sources = list(range(first, layer_id))
    if conn.image_access:
        sources.insert(0, 0)
    return sources


def layer_sources(spec: NetworkSpec, layer_id: int) -> list[int]:
    """Source layer ids of a layer, ascending (input 0 first when present)."""
    conn = spec.layer(layer_id).conn
    if isinstance(conn, Dense):
        return list(conn.from_layers)
    return _local_sources(spec, layer_id)


def validate(spec: NetworkSpec) -> list[str]:
    """Check every structural invariant; returns all violations (empty = ok)."""
    problems = []
    if spec.input_count < 1:
        problems.append("input_count must be >= 1")
    if not spec.layers:
        problems.append("network needs at least one layer")
        return problems
    if spec.input_grid is not None:
        h, w, c = spec.input_grid
        if h < 1 or w < 1 or c < 1:
            problems.append("input_grid dimensions must be positive")
        elif h * w * c != spec.input_count:
            problems.append(
                f"input_grid {h}x{w}x{c} does not match input_count {spec.input_count}")

    for layer_id in range(1, spec.layer_count + 1):
        layer = spec.layer(layer_id)
        tag = f"layer {layer_id}"
        if layer.unit_count < 1:
            problems.append(f"{tag}: empty layer")
        conn = layer.conn
        if isinstance(conn, Dense):
            if not conn.from_layers:
                problems.append(f"{tag}: dense connectivity with no source layers")
            for src in conn.from_layers:
                if src >= layer_id:
                    problems.append(
                        f"{tag}: acyclicity violated, references layer {src}")
                elif src < 0:
                    problems.append(f"{tag}: unknown source layer {src}")
        else:
            if conn.depth_radius < 1:
                problems.append(f"{tag}: depth radius must be >= 1")
            if conn.spatial_radius < 0:
                problems.append(f"{tag}: out-of-range radius {conn.spatial_radius}")
            h, w = conn.grid
            if h < 1 or w < 1:
                problems.append(f"{tag}: grid dimensions must be positive")
            elif h * w != layer.unit_count:
                problems.append(
                    f"{tag}: grid {h}x{w} does not match unit_count {layer.unit_count}")
            if conn.image_access and spec.input_grid is None:
                problems.append(f"{tag}: image access requires spec.input_grid")
            hidden_sources = [s for s in _local_sources(spec, layer_id) if s > 0]
            for src in hidden_sources:
                if not isinstance(spec.layer(src).conn, Local):
                    problems.append(
                        f"{tag}: local connectivity draws from non-grid layer {src}")
            if not hidden_sources and not conn.image_access:
                problems.append(f"{tag}: no reachable sources (empty input sets)")

    out = spec.layers[-1]
    if out.kind.variant == "relusum":
        # relusum events are joint internal tuples; there is no per-unit
        # label encoding to train or decide against
        problems.append("output layer kind must be sigmoid, tanh, or delta")
    return problems


def require_valid(spec: NetworkSpec) -> None:
    problems = validate(spec)
    if problems:
        raise ValueError("invalid network spec: " + "; ".join(problems))


@dataclass
class LayerWiring:
    """Gather pattern of one layer in CSR form over the concatenation of
    its source state vectors (ascending source id)."""

    source_ids: tuple[int, ...]
    source_offsets: dict[int, int]
    total_source_size: int
    indptr: np.ndarray
    indices: np.ndarray

    def input_count(self, unit: int) -> int:
        return int(self.indptr[unit + 1] - self.indptr[unit])

    def unit_indices(self, unit: int) -> np.ndarray:
        return self.indices[self.indptr[unit]:self.indptr[unit + 1]]


def _build_wiring(spec: NetworkSpec, layer_id: int) -> LayerWiring:
    layer = spec.layer(layer_id)
    sources = layer_sources(spec, layer_id)
    offsets, total = {}, 0
    for src in sources:
        offsets[src] = total
        total += spec.state_size(src)

    conn = layer.conn
    indptr = [0]
    indices: list[int] = []
    if isinstance(conn, Dense):
        row = np.concatenate(
            [offsets[src] + np.arange(spec.state_size(src)) for src in sources])
        for _ in range(layer.unit_count):
            indices.extend(row)
            indptr.append(len(indices))
    else:
        h, w = conn.grid
        r = conn.spatial_radius
        for i in range(h):
            for j in range(w):
                for src in sources:
                    base = offsets[src]
                    if src == 0:
                        ih, iw, ic = spec.input_grid
                        for pi in range(max(0, i - r), min(ih, i + r + 1)):
                            for pj in range(max(0, j - r), min(iw, j + r + 1)):
                                flat = (pi * iw + pj) * ic
                                indices.extend(range(base + flat, base + flat + ic))
                    else:
                        sh, sw = spec.layer(src).conn.grid
                        for pi in range(max(0, i - r), min(sh, i + r + 1)):
                            for pj in range(max(0, j - r), min(sw, j + r + 1)):
                                indices.append(base + pi * sw + pj)
                indptr.append(len(indices))
    return LayerWiring(
        source_ids=tuple(sources),
        source_offsets=offsets,
        total_source_size=total,
        indptr=np.asarray(indptr, dtype=np.int64),
        indices=np.asarray(indices, dtype=np.int64),
    )


class Network:
    """A spec plus per-unit parameters (weights aligned with the wiring,
    trailing bias per unit).

    Immutable after construction except through explicit parameter
    setters; all read paths are safe to share across threads.
    """

    def __init__(self, spec: NetworkSpec):
        require_valid(spec)
        self.spec = spec
        self.wirings = {
            l: _build_wiring(spec, l) for l in range(1, spec.layer_count + 1)}
        self.weights = {
            l: np.zeros(len(self.wirings[l].indices)) for l in self.wirings}
        self.biases = {
            l: np.zeros(spec.layer(l).unit_count) for l in self.wirings}
        self._matrices = {}
        for l, wiring in self.wirings.items():
            self._matrices[l] = sp.csr_matrix(
                (self.weights[l], wiring.indices, wiring.indptr),
                shape=(spec.layer(l).unit_count, wiring.total_source_size))

    @classmethod
    def initialize(cls, spec: NetworkSpec, rng, scale: float = 0.1) -> "Network":
        """Weights uniform in [-scale, scale], biases zero."""
        net = cls(spec)
        for l in net.wirings:
            net.weights[l][:] = rng.uniform_range(-scale, scale, net.weights[l].shape)
        return net

    # -- parameter access ------------------------------------------------

    def unit_input_count(self, layer_id: int, unit: int) -> int:
        return self.wirings[layer_id].input_count(unit)

    def unit_params(self, layer_id: int, unit: int) -> np.ndarray:
        """Copy of the unit's weight vector with the bias appended."""
        wiring = self.wirings[layer_id]
        w = self.weights[layer_id][wiring.indptr[unit]:wiring.indptr[unit + 1]]
        return np.concatenate([w, [self.biases[layer_id][unit]]])

    def set_unit_params(self, layer_id: int, unit: int, params) -> None:
        params = np.asarray(params, dtype=float)
        wiring = self.wirings[layer_id]
        n = wiring.input_count(unit)
        if params.shape != (n + 1,):
            raise ValueError(
                f"layer {layer_id} unit {unit} takes {n}+1 parameters, got {params.shape}")
        self.weights[layer_id][wiring.indptr[unit]:wiring.indptr[unit + 1]] = params[:-1]
        self.biases[layer_id][unit] = params[-1]

    def param_vector(self) -> np.ndarray:
        """Flat copy of all parameters: layers ascending, per unit weights
        then bias (the checkpoint row order)."""
        parts = []
        for l in sorted(self.wirings):
            wiring = self.wirings[l]
            for u in range(self.spec.layer(l).unit_count):
                parts.append(self.weights[l][wiring.indptr[u]:wiring.indptr[u + 1]])
                parts.append(self.biases[l][u:u + 1])
        return np.concatenate(parts)

    def set_param_vector(self, flat) -> None:
        flat = np.asarray(flat, dtype=float)
        pos = 0
        for l in sorted(self.wirings):
            wiring = self.wirings[l]
            for u in range(self.spec.layer(l).unit_count):
                n = wiring.input_count(u)
                self.weights[l][wiring.indptr[u]:wiring.indptr[u + 1]] = flat[pos:pos + n]
                self.biases[l][u] = flat[pos + n]
                pos += n + 1
        if pos != flat.size:
            raise ValueError(f"parameter vector has {flat.size} entries, expected {pos}")

    def param_count(self) -> int:
        return sum(len(w) for w in self.weights.values()) + sum(
            len(b) for b in self.biases.values())

    def check_finite(self) -> bool:
        return all(np.isfinite(w).all() for w in self.weights.values()) and all(
            np.isfinite(b).all() for b in self.biases.values())

    # -- evaluation ------------------------------------------------------

    def source_vector(self, layer_id: int, states: dict[int, np.ndarray]) -> np.ndarray:
        """Concatenate the encoded states this layer reads (batch-first ok)."""
        wiring = self.wirings[layer_id]
        parts = [np.asarray(states[src], dtype=float) for src in wiring.source_ids]
        return np.concatenate(parts, axis=-1)

    def preactivations(self, layer_id: int, states: dict[int, np.ndarray]) -> np.ndarray:
        """Per-unit pre-activations given encoded upstream states.

        ``states`` maps source layer id to a state vector (n,) or batch
        (b, n); the result matches ((units,) or (b, units)).
        """
        src = self.source_vector(layer_id, states)
        mat = self._matrices[layer_id]
        if src.ndim == 1:
            return mat @ src + self.biases[layer_id]
        return (mat @ src.T).T + self.biases[layer_id]


@dataclass
class Assignment:
    """One elementary event: input values, raw hidden events per layer,
    raw output events.  relusum layers carry (units, k) internal events."""

    x: np.ndarray
    z: list[np.ndarray] = field(default_factory=list)
    y: np.ndarray | None = None

    def states(self) -> list[np.ndarray]:
        out = list(self.z)
        if self.y is not None:
            out.append(self.y)
        return out


def _check_events(kind: UnitKind, raw: np.ndarray, tag: str) -> None:
    if kind.variant == "sigmoid":
        ok = np.isin(raw, (0.0, 1.0)).all()
    elif kind.variant == "tanh":
        ok = np.isin(raw, (-1.0, 1.0)).all()
    elif kind.variant == "relusum":
        ok = raw.ndim >= 2 and raw.shape[-1] == kind.k and np.isin(raw, (0.0, 1.0)).all()
    else:
        ok = True
    if not ok:
        raise ValueError(f"{tag}: illegal events for {kind} unit")


def log_conditional(net: Network, v: tuple[int, int], event, input_values) -> float:
    """ln p(event | inputs) for unit ``v`` = (layer_id, unit_index).

    ``input_values`` is the unit's augmented input vector: its encoded
    inputs in wiring order with the constant bias slot (1.0) appended.
    """
    layer_id, unit = v
    input_values = np.asarray(input_values, dtype=float)
    n = net.unit_input_count(layer_id, unit)
    if input_values.shape != (n + 1,):
        raise ValueError(
            f"unit ({layer_id},{unit}) takes {n}+1 input values, got {input_values.shape}")
    a = float(input_values @ net.unit_params(layer_id, unit))
    return log_event_prob(net.spec.layer(layer_id).kind, event, a)


def layer_log_prob(kind: UnitKind, raw: np.ndarray, a: np.ndarray) -> float:
    """Sum of per-unit ln p(event|a) over one layer; -inf on a delta miss."""
    if kind.variant == "sigmoid":
        return float((raw * a - softplus(a)).sum())
    if kind.variant == "tanh":
        return float(-softplus(-2.0 * raw * a).sum())
    if kind.variant == "relusum":
        from .units import relu_expand

        shifted = relu_expand(a, kind.k)
        return float((raw * shifted - softplus(shifted)).sum())
    if np.array_equal(raw, a):
        return 0.0
    return -np.inf


def energy(net: Network, assignment: Assignment) -> float:
    """Sum of per-unit negative log conditionals; exp(-energy) is the
    joint conditional probability of the assignment.  Events that a
    delta unit forbids yield +inf."""
    spec = net.spec
    x = np.asarray(assignment.x, dtype=float)
    if x.shape != (spec.input_count,):
        raise ValueError(f"input has shape {x.shape}, expected ({spec.input_count},)")
    raws = assignment.states()
    if len(raws) != spec.layer_count:
        raise ValueError(
            f"assignment covers {len(raws)} layers, network has {spec.layer_count}")

    states = {0: x}
    total = 0.0
    for layer_id in range(1, spec.layer_count + 1):
        layer = spec.layer(layer_id)
        raw = np.asarray(raws[layer_id - 1], dtype=float)
        expected = (layer.unit_count, layer.kind.k) if layer.kind.variant == "relusum" \
            else (layer.unit_count,)
        if raw.shape != expected:
            raise ValueError(
                f"layer {layer_id} events have shape {raw.shape}, expected {expected}")
        _check_events(layer.kind, raw, f"layer {layer_id}")
        a = net.preactivations(layer_id, states)
        total -= layer_log_prob(layer.kind, raw, a)
        states[layer_id] = encode_states(layer.kind, raw)
    return total
