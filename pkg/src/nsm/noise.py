"""Multiplicative noise models and the beta mapping.

A NoiseModel describes the per-connection multiplicative noise xi (Gaussian
with mean 1, or Bernoulli) and an optional additive Gaussian term eta. The
"beta" of a unit with noise offset a is (E[xi] + a) / sqrt(2 Var[xi]): the
slope of the normalized argument fed to erf in the closed-form firing
probability.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateNoiseError, NoiseModelError
from .rng import RngStream

GAUSSIAN = "gaussian"
BERNOULLI = "bernoulli"


@dataclass(frozen=True)
class NoiseModel:
    kind: str
    param: float
    # additive Gaussian eta ~ N(mean, var); None means no additive term
    additive_mean: float = 0.0
    additive_var: float = 0.0

    def __post_init__(self):
        if self.kind == GAUSSIAN:
            if self.param < 0.0:
                raise NoiseModelError(f"gaussian variance must be >= 0, got {self.param}")
        elif self.kind == BERNOULLI:
            if not 0.0 <= self.param <= 1.0:
                raise NoiseModelError(f"bernoulli rate must be in [0, 1], got {self.param}")
        else:
            raise NoiseModelError(f"unknown noise kind {self.kind!r}")
        if self.additive_var < 0.0:
            raise NoiseModelError(f"additive variance must be >= 0, got {self.additive_var}")

    @classmethod
    def gaussian(cls, sigma2: float, additive_mean=0.0, additive_var=0.0) -> "NoiseModel":
        return cls(GAUSSIAN, float(sigma2), float(additive_mean), float(additive_var))

    @classmethod
    def bernoulli(cls, p: float, additive_mean=0.0, additive_var=0.0) -> "NoiseModel":
        return cls(BERNOULLI, float(p), float(additive_mean), float(additive_var))

    @property
    def mean(self) -> float:
        """E[xi]."""
        return 1.0 if self.kind == GAUSSIAN else self.param

    @property
    def variance(self) -> float:
        """Var[xi]."""
        if self.kind == GAUSSIAN:
            return self.param
        return self.param * (1.0 - self.param)

    @property
    def scale(self) -> float:
        """sqrt(2 Var[xi]); denominator of the beta mapping."""
        v = self.variance
        if v <= 0.0:
            raise DegenerateNoiseError(
                f"noise model {self.kind}({self.param}) has zero variance; "
                "beta and the probability law are undefined"
            )
        return float(np.sqrt(2.0 * v))

    @property
    def has_additive(self) -> bool:
        return self.additive_var > 0.0 or self.additive_mean != 0.0


def beta_from_noise(model: NoiseModel, a) -> np.ndarray:
    """beta = (E[xi] + a) / sqrt(2 Var[xi]), elementwise over a."""
    return (model.mean + np.asarray(a, dtype=np.float64)) / model.scale


def a_from_beta(model: NoiseModel, beta) -> np.ndarray:
    """Inverse of beta_from_noise: a = beta * sqrt(2 Var[xi]) - E[xi]."""
    return np.asarray(beta, dtype=np.float64) * model.scale - model.mean


def sample_noise(model: NoiseModel, shape, stream: RngStream) -> np.ndarray:
    """Draw the multiplicative noise xi with the given shape.

    Gaussian: 1 + sqrt(sigma^2) * N(0, 1). Bernoulli: {0.0, 1.0} at rate p.
    Zero-variance models are fine here (they return constants); only the
    closed-form probability path rejects them.
    """
    gen = stream.generator()
    if model.kind == GAUSSIAN:
        if model.param == 0.0:
            return np.ones(shape, dtype=np.float64)
        return 1.0 + np.sqrt(model.param) * gen.standard_normal(shape)
    return (gen.random(shape) < model.param).astype(np.float64)


def sample_additive(model: NoiseModel, shape, stream: RngStream) -> np.ndarray:
    """Draw the additive term eta ~ N(mean, var) (zeros if the term is off)."""
    if not model.has_additive:
        return np.zeros(shape, dtype=np.float64)
    gen = stream.generator()
    return model.additive_mean + np.sqrt(model.additive_var) * gen.standard_normal(shape)
