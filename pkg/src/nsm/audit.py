"""Instrumented forward pass that counts multiplications.

The sampled preactivation of a unit is

    u_i = sum_j (xi_ij + a_i) w_ij z_j + b_i
        = T_i + a_i * S_i + b_i

with S_i = sum_j w_ij z_j and T_i = sum_j xi_ij w_ij z_j. For binary
z_j in {-1, +1}, w_ij z_j is a sign flip (an add/subtract), and Bernoulli
xi in {0, 1} merely gates which terms enter T_i. The only genuine
multiplication per unit is a_i * S_i; the bias is an add. The counter
below charges every scalar '*' it executes and nothing else, so the claim
is checked against an arithmetic trace rather than an argument.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .noise import BERNOULLI, NoiseModel


class MulCounter:
    def __init__(self):
        self.count = 0

    def mul(self, x: float, y: float) -> float:
        self.count += 1
        return x * y


def audited_dense_forward(w, z, a, b_raw, xi, counter: MulCounter):
    """Pure-python dense sampled forward for one input vector.

    w: (out, fan); z: (fan,) entries +-1; xi: Bernoulli draws in {0, 1},
    shaped (fan,) for neuron-site noise or (out, fan) for synapse-site;
    a, b_raw: (out,). Returns (+-1 output, membrane sums). Every scalar
    multiplication goes through the counter.
    """
    w = np.asarray(w, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    xi = np.asarray(xi, dtype=np.float64)
    if not set(np.unique(z)) <= {-1.0, 1.0}:
        raise ConfigError("audited forward needs sign-binary inputs")
    if not set(np.unique(xi)) <= {0.0, 1.0}:
        raise ConfigError("audited forward needs Bernoulli (0/1) noise draws")
    if xi.shape not in (z.shape, w.shape):
        raise ConfigError(f"noise shape {xi.shape} matches neither site layout")
    per_synapse = xi.ndim == 2
    out = np.empty(w.shape[0], dtype=np.float64)
    us = np.empty(w.shape[0], dtype=np.float64)
    for i in range(w.shape[0]):
        s = 0.0
        t = 0.0
        for j in range(w.shape[1]):
            signed = w[i, j] if z[j] > 0 else -w[i, j]
            s += signed
            gate = xi[i, j] if per_synapse else xi[j]
            if gate != 0.0:
                t += signed
        u = t + counter.mul(float(a[i]), s) + float(b_raw[i])
        us[i] = u
        out[i] = 1.0 if u >= 0 else -1.0
    return out, us


def audit_network_multiplications(network, z0: np.ndarray, stream,
                                  site: str = "synapse") -> dict:
    """Run one audited sample through an MLP of stochastic binary layers.

    Returns {"multiplications", "neurons", "per_layer"} and checks the
    audited membrane sums match the vectorized forward given the same
    draws. The head is excluded: the count concerns the binary units.
    """
    from .layers import NsmDense
    from .noise import sample_noise

    counter = MulCounter()
    neurons = 0
    per_layer = []
    z = np.asarray(z0, dtype=np.float64)
    for idx, layer in enumerate(network.layers[:-1]):
        if not isinstance(layer, NsmDense):
            raise ConfigError("multiplication audit covers dense binary stacks")
        if layer.model.kind != BERNOULLI:
            raise ConfigError("multiplication audit assumes Bernoulli noise")
        sub = stream.child(idx)
        shape = layer.w.shape if site == "synapse" else z.shape
        xi = sample_noise(layer.model, shape, sub)
        before = counter.count
        norms = np.sqrt(np.sum(layer.w * layer.w, axis=1))
        b_raw = layer.bias * layer.model.scale * norms
        audited, u_audit = audited_dense_forward(layer.w, z, layer.a, b_raw, xi, counter)
        # cross-check against the vectorized path on the same draws
        u_vec = np.sum((xi + layer.a[:, None]) * layer.w * z, axis=1) + b_raw \
            if site == "synapse" \
            else (xi * z) @ layer.w.T + layer.a * (z @ layer.w.T) + b_raw
        if not np.allclose(u_audit, u_vec, rtol=1e-9, atol=1e-9):
            raise AssertionError(f"{layer.name}: audited path diverged from vectorized path")
        per_layer.append({"layer": layer.name, "neurons": layer.w.shape[0],
                          "multiplications": counter.count - before})
        neurons += layer.w.shape[0]
        z = audited
    return {"multiplications": counter.count, "neurons": neurons,
            "per_layer": per_layer}
