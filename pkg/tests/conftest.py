"""Shared fixtures: small datasets and network builders used across files."""

import os

import numpy as np
import pytest

from nsm.data import LabeledDataset, load_digits_dataset, synthetic_dataset
from nsm.noise import NoiseModel
from nsm.presets import build_network, parse_preset
from nsm.rng import NS_INIT, RngStream
from nsm.training import data_dependent_init


def mnist_dir() -> str | None:
    """Directory with the four IDX files, or None when not provided."""
    path = os.environ.get("NSM_MNIST_DIR")
    if path and os.path.isdir(path):
        return path
    return None


requires_mnist = pytest.mark.skipif(
    mnist_dir() is None,
    reason="stated protocol needs the MNIST IDX files; set NSM_MNIST_DIR to run",
)


@pytest.fixture(scope="session")
def digits():
    """Deterministic 75/25 split of the 8x8 digits set, flat +-1 inputs."""
    return load_digits_dataset(seed=0)


@pytest.fixture(scope="session")
def digits_conv():
    """Same split shaped (N, 1, 8, 8) for convolutional models."""
    return load_digits_dataset(seed=0, conv=True)


def split_synthetic(kind: str, train: int, test: int, seed: int, dim: int = 16):
    total = synthetic_dataset(kind, train + test, seed, dim=dim)
    return (LabeledDataset(total.inputs[:train], total.labels[:train],
                           total.num_classes),
            LabeledDataset(total.inputs[train:], total.labels[train:],
                           total.num_classes))


@pytest.fixture(scope="session")
def blobs():
    """Small linearly separable two-class set."""
    return split_synthetic("two-gaussians", 400, 100, seed=7)


def build_small_net(model="nsm", preset="mlp-16-8-2", seed=0, **kw):
    return build_network(parse_preset(preset), model, NoiseModel.bernoulli(0.5),
                         seed=seed, **kw)


def init_from_data(net, inputs, seed=0):
    data_dependent_init(net, inputs[:100], RngStream(seed).child(NS_INIT, 101))
    return net
