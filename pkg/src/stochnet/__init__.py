"""stochnet: a layered stochastic network engine.

One parameterized model, two views: evaluated deterministically it is an
ordinary feed-forward network; treated as a directed graphical model it
is a Bayesian network over the same wiring.  The package implements the
deterministic forward pass, exact ancestral sampling, both trainers
(error back-propagation and sampled-trace stochastic gradient ascent),
enumeration oracles for desk-scale verification, Gibbs sampling of the
posterior with clamped outputs, and the experiment tooling around them.
"""

from .checkpoint import CheckpointError, load_network, save_network
from .inference import (
    ClampSet,
    MarginalField,
    NonErgodicError,
    StateSpaceTooLarge,
    enumerate_posterior,
    gibbs_clamped,
    iou,
    max_marginal_decide,
    mc_marginals,
)
from .learning import (
    GradientAccumulator,
    TrainConfig,
    TrainingDiverged,
    bn_hidden_gradient,
    bn_output_gradient,
    bn_step,
    ebp_step,
    lower_bound_estimate,
    train,
)
from .model import (
    Assignment,
    Dense,
    LayerSpec,
    Local,
    Network,
    NetworkSpec,
    energy,
    log_conditional,
    validate,
)
from .propagation import (
    ForwardTrace,
    forward_deterministic,
    forward_sample,
    relu_expand,
    unit_mean,
    unit_sample,
)
from .rng import RngStream
from .units import DELTA, SIGMOID, TANH, UnitKind, relu_sum

__version__ = "0.1.0"

__all__ = [
    "Assignment", "CheckpointError", "ClampSet", "DELTA", "Dense",
    "ForwardTrace", "GradientAccumulator", "LayerSpec", "Local",
    "MarginalField", "Network", "NetworkSpec", "NonErgodicError",
    "RngStream", "SIGMOID", "StateSpaceTooLarge", "TANH", "TrainConfig",
    "TrainingDiverged", "UnitKind", "bn_hidden_gradient",
    "bn_output_gradient", "bn_step", "ebp_step", "energy",
    "enumerate_posterior", "forward_deterministic", "forward_sample",
    "gibbs_clamped", "iou", "load_network", "log_conditional",
    "lower_bound_estimate", "max_marginal_decide", "mc_marginals",
    "relu_expand", "relu_sum", "save_network", "train", "unit_mean",
    "unit_sample", "validate",
]
