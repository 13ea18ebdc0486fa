"""Learning: two trainers for the same parameterized model.

* ``ebp`` trains the deterministic view: gradient ascent on the
  log-likelihood of the expected-value network, standard error
  back-propagation.
* ``bn`` trains the probabilistic view: one ancestral-sampling forward
  pass, then one backward pass that is plain back-propagation evaluated
  at the sampled states.  The output layer's own update uses the sampled
  residual enc(y) - enc(y_hat); hidden layers multiply the propagated
  error by the deterministic mean derivative at the sampled
  pre-activation.  The resulting update is an unbiased stochastic
  gradient of a Jensen lower bound on the conditional log-likelihood
  (exactly, for the output layer; through the deterministic-head
  approximation for hidden layers).

Both use plain SGD with a fixed step size; momentum and weight decay
exist as knobs and default to off.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .model import Network, layer_log_prob
from .propagation import forward_deterministic, forward_sample
from .rng import RngStream
from .units import UnitKind, unit_mean, unit_mean_derivative

__all__ = [
    "GradientAccumulator",
    "TrainConfig",
    "ErrorSignal",
    "TrainingDiverged",
    "ebp_step",
    "bn_output_gradient",
    "bn_hidden_gradient",
    "bn_step",
    "train",
    "lower_bound_estimate",
    "ffn_head_gradient",
    "deterministic_log_likelihood",
    "evaluate_metric",
    "learnable_mask",
    "write_metrics_csv",
    "METRICS_COLUMNS",
]

# substream roles under one training stream
_SHUFFLE, _STEP, _EVAL = 0, 1, 2


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class GradientAccumulator:
    """Per-parameter buffers mirroring the network layout exactly."""

    weights: dict[int, np.ndarray]
    biases: dict[int, np.ndarray]
    count: int = 0

    @classmethod
    def zeros_like(cls, net: Network) -> "GradientAccumulator":
        return cls(
            weights={l: np.zeros_like(w) for l, w in net.weights.items()},
            biases={l: np.zeros_like(b) for l, b in net.biases.items()},
            count=0)

    def add_(self, other: "GradientAccumulator") -> "GradientAccumulator":
        for l in self.weights:
            self.weights[l] += other.weights[l]
            self.biases[l] += other.biases[l]
        self.count += other.count
        return self

    def scale_(self, c: float) -> "GradientAccumulator":
        for l in self.weights:
            self.weights[l] *= c
            self.biases[l] *= c
        return self

    def to_vector(self, net: Network) -> np.ndarray:
        """Flat copy in the same order as Network.param_vector()."""
        parts = []
        for l in sorted(self.weights):
            wiring = net.wirings[l]
            for u in range(net.spec.layer(l).unit_count):
                parts.append(self.weights[l][wiring.indptr[u]:wiring.indptr[u + 1]])
                parts.append(self.biases[l][u:u + 1])
        return np.concatenate(parts)


@dataclass
class ErrorSignal:
    """Backward-pass error vectors, one per layer, aligned with unit state."""

    deltas: dict[int, np.ndarray]


@dataclass
class TrainConfig:
    mode: str = "ebp"
    step_size: float = 0.1
    iterations: int = 1000
    batch_size: int = 1
    seed: int = 0
    eval_period: int = 0
    eval_samples: int = 1000
    lb_samples: int = 8
    momentum: float = 0.0
    weight_decay: float = 0.0
    metric: str = "accuracy"

    def __post_init__(self):
        if self.mode not in ("ebp", "bn"):
            raise ValueError(f"mode must be 'ebp' or 'bn', got {self.mode!r}")
        if self.step_size < 0:
            raise ValueError("step_size must be >= 0")
        if self.iterations < 0 or self.batch_size < 1:
            raise ValueError("iterations must be >= 0, batch_size >= 1")
        if self.metric not in ("accuracy", "iou"):
            raise ValueError(f"metric must be 'accuracy' or 'iou', got {self.metric!r}")


def learnable_mask(net: Network) -> np.ndarray:
    """Flat boolean mask over param_vector(): True where gradients flow.
    Delta units are fixed wiring and stay frozen."""
    parts = []
    for l in sorted(net.wirings):
        learn = net.spec.layer(l).kind.learnable
        wiring = net.wirings[l]
        for u in range(net.spec.layer(l).unit_count):
            n = wiring.input_count(u) + 1
            parts.append(np.full(n, learn, dtype=bool))
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# Shared backward pass
# ---------------------------------------------------------------------------


def _accumulate_unit_grads(net, grads, layer_id, err2d, states2d):
    """grad_w[j] += sum_b err[b, row(j)] * src[b, col(j)]; same for bias."""
    wiring = net.wirings[layer_id]
    src = net.source_vector(layer_id, states2d)
    counts = np.diff(wiring.indptr)
    rows = np.repeat(np.arange(len(counts)), counts)
    grads.weights[layer_id] += (err2d[:, rows] * src[:, wiring.indices]).sum(axis=0)
    grads.biases[layer_id] += err2d.sum(axis=0)


def _propagate(net, layer_id, err2d, deltas):
    """Scatter W^T err into the per-source error buffers."""
    wiring = net.wirings[layer_id]
    msg = (net._matrices[layer_id].T @ err2d.T).T
    for src in wiring.source_ids:
        if src == 0:
            continue
        lo = wiring.source_offsets[src]
        deltas[src] += msg[:, lo:lo + net.spec.state_size(src)]


def _backward(net, states2d, preacts2d, own_residual, prop_residual):
    """One backward pass from given evaluation states (batch-first 2-D).

    ``own_residual`` drives the output layer's own parameter gradient,
    ``prop_residual`` is the error sent downstream; they coincide for
    plain back-propagation and differ for the sampled trainer.
    Returns the batch-summed gradient (count = batch size).
    """
    spec = net.spec
    M = spec.layer_count
    batch = own_residual.shape[0]
    grads = GradientAccumulator.zeros_like(net)
    grads.count = batch

    if spec.layers[-1].kind.learnable:
        _accumulate_unit_grads(net, grads, M, own_residual, states2d)
    deltas = {l: np.zeros((batch, spec.layer(l).unit_count)) for l in range(1, M)}
    if M > 1:
        _propagate(net, M, prop_residual, deltas)
    for l in range(M - 1, 0, -1):
        kind = spec.layer(l).kind
        err = deltas[l] * unit_mean_derivative(kind, preacts2d[l])
        if kind.learnable:
            _accumulate_unit_grads(net, grads, l, err, states2d)
        if l > 1:
            _propagate(net, l, err, deltas)
    return grads


def _as_batch(states: dict[int, np.ndarray]) -> dict[int, np.ndarray]:
    return {l: np.atleast_2d(np.asarray(s, dtype=float)) for l, s in states.items()}


# ---------------------------------------------------------------------------
# Public steps
# ---------------------------------------------------------------------------


def ebp_step(net: Network, batch, cfg: TrainConfig | None = None) -> GradientAccumulator:
    """Batch-mean gradient of the deterministic model's log-likelihood."""
    if not batch:
        raise ValueError("batch must be nonempty")
    spec = net.spec
    M = spec.layer_count
    X = np.stack([np.asarray(x, dtype=float) for x, _ in batch])
    Y = np.stack([np.asarray(y, dtype=float) for _, y in batch])

    states = {0: X}
    preacts = {}
    for l in range(1, M + 1):
        a = net.preactivations(l, states)
        preacts[l] = a
        states[l] = unit_mean(spec.layer(l).kind, a)
    residual = Y - states[M]
    grads = _backward(net, states, preacts, residual, residual)
    grads.scale_(1.0 / len(batch))
    grads.count = len(batch)
    return grads


def bn_output_gradient(y_true: float, y_hat: float, z_prev) -> np.ndarray:
    """Stochastic gradient of one log-linear output unit's parameters:
    (enc(y) - enc(y_hat)) times the augmented sampled inputs.  Exactly
    cancels when the drawn output matches the target."""
    z_aug = np.append(np.asarray(z_prev, dtype=float), 1.0)
    return (float(y_true) - float(y_hat)) * z_aug


def bn_hidden_gradient(delta_v: float, z_prev, a: float,
                       kind: UnitKind = UnitKind("sigmoid")) -> np.ndarray:
    """Stochastic gradient of one hidden unit's parameters: the propagated
    error times the mean derivative at the sampled pre-activation times
    the augmented sampled inputs.  Zero for delta units (fixed wiring)."""
    z_aug = np.append(np.asarray(z_prev, dtype=float), 1.0)
    if not kind.learnable:
        return np.zeros_like(z_aug)
    return float(delta_v) * float(unit_mean_derivative(kind, a)) * z_aug


def bn_step(net: Network, example, rng) -> GradientAccumulator:
    """One sampled forward pass, one backward pass, one example.

    The backward pass uses the same chain-rule weights as plain
    back-propagation, evaluated at the sampled states; the output layer's
    own gradient uses the sampled residual."""
    x, y = example
    y = np.asarray(y, dtype=float)
    trace = forward_sample(net, x, rng)
    states = _as_batch(trace.states_by_layer())
    preacts = {l: np.atleast_2d(a) for l, a in
               enumerate(trace.preactivations, start=1)}
    out_kind = net.spec.layers[-1].kind
    own = np.atleast_2d(y - trace.output_states)
    prop = np.atleast_2d(y - unit_mean(out_kind, trace.output_preactivations))
    grads = _backward(net, states, preacts, own, prop)
    grads.count = 1
    return grads


def ffn_head_gradient(net: Network, fixed_states: dict[int, np.ndarray],
                      start_layer: int, y) -> GradientAccumulator:
    """Gradient of the deterministic-head log-likelihood: layers below
    ``start_layer`` are pinned to ``fixed_states``, layers from
    ``start_layer`` up are evaluated by expected values, and the result
    is the exact gradient of ln p(y | head) for all parameters.

    This is the per-layer-split form of the sampled trainer: evaluating
    it at one drawn state of layer ``start_layer - 1`` gives that layer's
    stochastic update without sharing the pass with other layers."""
    spec = net.spec
    M = spec.layer_count
    y = np.asarray(y, dtype=float)
    states = {l: np.asarray(s, dtype=float) for l, s in fixed_states.items()}
    preacts = {}
    for l in range(start_layer, M + 1):
        a = net.preactivations(l, states)
        preacts[l] = a
        states[l] = unit_mean(spec.layer(l).kind, a)
    for l in range(1, start_layer):
        # evaluation points below the split are the fixed states; their
        # pre-activations only matter for layers >= start_layer gradients
        preacts.setdefault(l, np.zeros(spec.layer(l).unit_count))
    residual = y - states[M]
    states2d = _as_batch(states)
    preacts2d = {l: np.atleast_2d(a) for l, a in preacts.items()}
    own = np.atleast_2d(residual)
    return _backward(net, states2d, preacts2d, own, own)


def deterministic_log_likelihood(net: Network, x, y) -> float:
    """ln p(y | x) of the deterministic (expected-value) model."""
    trace = forward_deterministic(net, x)
    y = np.asarray(y, dtype=float)
    return layer_log_prob(net.spec.layers[-1].kind, y, trace.output_preactivations)


def lower_bound_estimate(net: Network, example, n_samples: int, rng) -> float:
    """Monte-Carlo estimate of the Jensen lower bound: mean over sampled
    hidden traces of ln p(y_true | sampled last hidden layer)."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    x, y = example
    y = np.asarray(y, dtype=float)
    kind = net.spec.layers[-1].kind
    total = 0.0
    for i in range(n_samples):
        trace = forward_sample(net, x, rng.substream(i))
        total += layer_log_prob(kind, y, trace.output_preactivations)
    return total / n_samples


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


def _positive_probs_deterministic(net: Network, X: np.ndarray) -> np.ndarray:
    """p(positive event) per output unit under the deterministic model."""
    from .units import sigmoid

    spec = net.spec
    states = {0: X}
    for l in range(1, spec.layer_count + 1):
        a = net.preactivations(l, states)
        states[l] = unit_mean(spec.layer(l).kind, a)
    out_kind = spec.layers[-1].kind
    factor = 2.0 if out_kind.variant == "tanh" else 1.0
    return sigmoid(factor * a)


def evaluate_metric(net: Network, pairs, mode: str, metric: str,
                    eval_samples: int, rng) -> float:
    """Mean accuracy (exact output match) or mean IoU over examples.

    Deterministic mode decides by thresholding the deterministic output
    probabilities; sampled mode decides by max-marginal over
    ``eval_samples`` ancestral samples."""
    from .inference import max_marginal_decide, mc_marginals

    out_kind = net.spec.layers[-1].kind
    scores = []
    if mode == "ebp":
        X = np.stack([np.asarray(x, dtype=float) for x, _ in pairs])
        probs = _positive_probs_deterministic(net, X)
        for i, (_, y) in enumerate(pairs):
            decided = max_marginal_decide(probs[i], out_kind)
            scores.append(_score(decided, np.asarray(y, dtype=float), metric, out_kind))
    else:
        for i, (x, y) in enumerate(pairs):
            field = mc_marginals(net, x, eval_samples, rng.substream(i))
            decided = max_marginal_decide(field, out_kind)
            scores.append(_score(decided, np.asarray(y, dtype=float), metric, out_kind))
    return float(np.mean(scores))


def _score(decided: np.ndarray, y: np.ndarray, metric: str, kind: UnitKind) -> float:
    if metric == "accuracy":
        return float(np.array_equal(decided, y))
    from .inference import iou

    pos = 1.0
    return iou(decided == pos, y == pos)


METRICS_COLUMNS = ("iter", "wall_ms", "mode", "train_metric", "test_metric",
                   "lower_bound_estimate")


def write_metrics_csv(path: str, rows: list[dict]) -> None:
    """Append rows to the metrics log, creating it with a header."""
    import os

    new = not os.path.exists(path)
    with open(path, "a", encoding="ascii") as fh:
        if new:
            fh.write(",".join(METRICS_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(str(row[c]) for c in METRICS_COLUMNS) + "\n")


def train(net: Network, data, cfg: TrainConfig, rng: RngStream,
          test_data=None) -> list[dict]:
    """Stochastic gradient ascent on the conditional log-likelihood.

    ``data`` and ``test_data`` are sequences of (x, y) pairs.  The network
    is updated in place; returns the metrics rows that were logged.
    Aborts with TrainingDiverged when a parameter goes non-finite.
    """
    if len(data) == 0:
        raise ValueError("dataset must be nonempty")
    n = len(data)
    rows: list[dict] = []
    momentum_buf = GradientAccumulator.zeros_like(net) if cfg.momentum else None
    t0 = time.monotonic()

    order = None
    pos = n  # force a shuffle on the first iteration
    epoch = 0
    for it in range(cfg.iterations):
        if pos >= n:
            order = rng.substream(_SHUFFLE, epoch).permutation(n)
            epoch += 1
            pos = 0
        idx = order[pos:pos + cfg.batch_size]
        pos += cfg.batch_size

        if cfg.mode == "ebp":
            grad = ebp_step(net, [data[int(i)] for i in idx], cfg)
        else:
            grad = GradientAccumulator.zeros_like(net)
            for i in idx:
                grad.add_(bn_step(net, data[int(i)], rng.substream(_STEP, it, int(i))))
            grad.scale_(1.0 / len(idx))

        for l in net.weights:
            gw, gb = grad.weights[l], grad.biases[l]
            if cfg.weight_decay:
                gw = gw - cfg.weight_decay * net.weights[l]
                gb = gb - cfg.weight_decay * net.biases[l]
            if momentum_buf is not None:
                momentum_buf.weights[l] *= cfg.momentum
                momentum_buf.weights[l] += gw
                momentum_buf.biases[l] *= cfg.momentum
                momentum_buf.biases[l] += gb
                gw, gb = momentum_buf.weights[l], momentum_buf.biases[l]
            net.weights[l] += cfg.step_size * gw
            net.biases[l] += cfg.step_size * gb

        if not net.check_finite():
            raise TrainingDiverged(
                f"non-finite parameter after iteration {it + 1}; "
                f"step_size {cfg.step_size} diverged")

        last = it + 1 == cfg.iterations
        due = cfg.eval_period > 0 and (it + 1) % cfg.eval_period == 0
        if due or last:
            eval_rng = rng.substream(_EVAL, it)
            train_metric = evaluate_metric(
                net, data, cfg.mode, cfg.metric, cfg.eval_samples,
                eval_rng.substream(0))
            test_metric = float("nan")
            if test_data:
                test_metric = evaluate_metric(
                    net, test_data, cfg.mode, cfg.metric, cfg.eval_samples,
                    eval_rng.substream(1))
            lb = float(np.mean([
                lower_bound_estimate(net, data[i], cfg.lb_samples,
                                     eval_rng.substream(2, i))
                for i in range(n)]))
            rows.append({
                "iter": it + 1,
                "wall_ms": round((time.monotonic() - t0) * 1000.0, 3),
                "mode": cfg.mode,
                "train_metric": train_metric,
                "test_metric": test_metric,
                "lower_bound_estimate": lb,
            })
    return rows
