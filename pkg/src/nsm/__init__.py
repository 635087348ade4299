"""Stochastic binary networks that self-normalize through synaptic noise.

The package trains networks of sign units whose synapses carry
multiplicative noise (Gaussian around 1, or Bernoulli blank-out). The
firing probability of such a unit has a closed form,
P = 1/2 (1 + erf(beta (w.z)/||w|| + b)), whose weight-norm denominator acts
as built-in normalization: training samples the binary states forward and
backpropagates through the probability surface.
"""

from .core import (activation_probability, erf_probability, erf_slope,
                   preactivation, sign_activation)
from .errors import (CheckpointCorruptError, CheckpointError,
                     CheckpointVersionError, ConfigError, DataError,
                     DegenerateNoiseError, InitError, NanGradientError,
                     NoiseModelError, NormalizationError, NsmError, ShapeError)
from .network import Network, cross_entropy_loss, softmax
from .noise import NoiseModel, a_from_beta, beta_from_noise, sample_noise
from .presets import ArchSpec, build_network, parse_preset
from .rng import RngStream, root_stream
from .training import (Adam, Sgd, TrainConfig, TrainState, data_dependent_init,
                       evaluate_mc, make_optimizer, train, train_epoch)

__version__ = "0.1.0"

__all__ = [
    "activation_probability", "erf_probability", "erf_slope", "preactivation",
    "sign_activation", "NoiseModel", "a_from_beta", "beta_from_noise",
    "sample_noise", "RngStream", "root_stream", "Network", "softmax",
    "cross_entropy_loss", "ArchSpec", "build_network", "parse_preset",
    "Adam", "Sgd", "TrainConfig", "TrainState", "data_dependent_init",
    "evaluate_mc", "make_optimizer", "train", "train_epoch",
    "NsmError", "ConfigError", "NoiseModelError", "DegenerateNoiseError",
    "NormalizationError", "ShapeError", "NanGradientError", "DataError",
    "InitError", "CheckpointError", "CheckpointVersionError",
    "CheckpointCorruptError",
]
