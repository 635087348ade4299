"""Network container: a layer stack with mode-dispatched forward/backward.

Noise streams: forward_sample derives one substream per layer as
stream.child(layer_index), so a layer's draws depend only on
(seed, purpose-path, layer), never on how other layers consume randomness.
"""

from __future__ import annotations

import numpy as np

from .errors import NanGradientError, ShapeError
from .layers import MODE_MEAN, MODE_SAMPLE
from .rng import RngStream


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_head(logits: np.ndarray) -> np.ndarray:
    """Class probabilities from readout logits (shift-stable softmax)."""
    return softmax(logits)


def cross_entropy_loss(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood; probabilities clamped to [1e-7, 1-1e-7]."""
    p = np.clip(probs, 1e-7, 1.0 - 1e-7)
    n = p.shape[0]
    return float(-np.mean(np.log(p[np.arange(n), labels])))


def cross_entropy_dlogits(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    n = probs.shape[0]
    d = probs.copy()
    d[np.arange(n), labels] -= 1.0
    return d / n


class Network:
    """Ordered layer stack; the last layer is the readout head."""

    def __init__(self, layers: list, input_shape: tuple[int, ...]):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        names = [l.name for l in self.layers]
        if len(set(names)) != len(names):
            raise ShapeError(f"duplicate layer names: {names}")

    def _prep(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if z.shape[1:] != self.input_shape:
            if len(self.input_shape) == 1 and int(np.prod(z.shape[1:])) == self.input_shape[0]:
                z = z.reshape(z.shape[0], -1)
            else:
                raise ShapeError(f"input shape {z.shape[1:]} != expected {self.input_shape}")
        return z

    def forward(self, z, mode: str = MODE_SAMPLE, stream: RngStream | None = None):
        """Run the stack; returns (logits, caches)."""
        out = self._prep(z)
        caches = []
        for idx, layer in enumerate(self.layers):
            sub = stream.child(idx) if stream is not None else None
            out, cache = layer.forward(out, mode, sub)
            caches.append(cache)
        return out, caches

    def backward(self, caches, dlogits):
        """Chain the layer backwards; returns {layer.param: grad} flat dict."""
        grads = {}
        d = dlogits
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            layer_grads, d = layer.backward(cache, d)
            for key, g in layer_grads.items():
                grads[f"{layer.name}.{key}"] = g
        return grads

    def params(self) -> dict[str, np.ndarray]:
        """Live parameter arrays keyed 'layer.param' in stack order."""
        out = {}
        for layer in self.layers:
            for key, arr in layer.params().items():
                out[f"{layer.name}.{key}"] = arr
        return out

    def loss_and_grads(self, z, labels, mode: str = MODE_SAMPLE,
                       stream: RngStream | None = None):
        """One forward/backward pass; returns (loss, grads, caches)."""
        logits, caches = self.forward(z, mode, stream)
        probs = softmax(logits)
        loss = cross_entropy_loss(probs, labels)
        grads = self.backward(caches, cross_entropy_dlogits(probs, labels))
        return loss, grads, caches

    def mean_loss(self, z, labels) -> float:
        """Deterministic expectation-path loss (the FD check's scalar)."""
        logits, _ = self.forward(z, MODE_MEAN)
        return cross_entropy_loss(softmax(logits), labels)

    def last_hidden_stat(self, caches) -> np.ndarray | None:
        """The nonlinearity argument of the deepest hidden layer, flattened."""
        for cache in reversed(caches[:-1]):
            if "stat" in cache:
                return np.asarray(cache["stat"]).reshape(-1)
        return None


def check_finite_grads(grads: dict[str, np.ndarray]):
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NanGradientError(f"non-finite gradient in {name}")
