"""Small dense networks with hand-written backprop, plus Adam."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

HIDDEN = ("leaky_relu", "tanh")
OUTPUT = ("linear", "sigmoid")


class NonFiniteGradient(FloatingPointError):
    def __init__(self, layer: int):
        super().__init__(f"non-finite gradient in layer {layer}")
        self.layer = layer


@dataclass
class Mlp:
    """Fully connected network; weights are stored (fan_in, fan_out)."""

    sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden: str = "leaky_relu"
    slope: float = 0.1
    output: str = "linear"

    def __post_init__(self):
        if self.hidden not in HIDDEN or self.output not in OUTPUT:
            raise ValueError(f"hidden must be one of {HIDDEN}, output one of {OUTPUT}")
        if len(self.weights) != len(self.sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("need one weight matrix and bias per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.sizes[i], self.sizes[i + 1]) or b.shape != (self.sizes[i + 1],):
                raise ValueError(f"layer {i} has shape {w.shape}/{b.shape}, sizes say {self.sizes[i:i + 2]}")

    @classmethod
    def init(cls, sizes, rng: np.random.Generator, init_std: float = 0.01, **kw) -> "Mlp":
        sizes = [int(s) for s in sizes]
        ws = [init_std * rng.standard_normal((a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
        bs = [np.zeros(b) for b in sizes[1:]]
        return cls(sizes, ws, bs, **kw)

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, vec) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        i = 0
        for p in self.params:
            p[...] = vec[i:i + p.size].reshape(p.shape)
            i += p.size
        if i != vec.size:
            raise ValueError(f"expected {i} parameters, got {vec.size}")

    def copy(self) -> "Mlp":
        return Mlp(list(self.sizes), [w.copy() for w in self.weights], [b.copy() for b in self.biases],
                   self.hidden, self.slope, self.output)

    def _act(self, z):
        if self.hidden == "tanh":
            return np.tanh(z)
        return np.where(z > 0, z, self.slope * z)

    def _act_grad(self, z, a):
        if self.hidden == "tanh":
            return 1.0 - a * a
        return np.where(z > 0, 1.0, self.slope)

    def forward(self, x):
        """Return outputs and the cache ``backward`` needs."""
        h = np.asarray(x, dtype=np.float64)
        if h.ndim != 2 or h.shape[1] != self.sizes[0]:
            raise ValueError(f"batch must be (n, {self.sizes[0]}), got {h.shape}")
        cache = [h]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if i < last:
                h = self._act(z)
            else:
                h = expit(z) if self.output == "sigmoid" else z
            cache.append((z, h))
        return h, cache

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, output_grad):
        """Gradients of a scalar loss given dloss/doutput.

        Returns ``(param_grads, input_grad)`` with ``param_grads`` ordered like
        ``params``.
        """
        g = np.asarray(output_grad, dtype=np.float64)
        z, h = cache[-1]
        if g.shape != h.shape:
            raise ValueError(f"output_grad shape {g.shape} does not match output {h.shape}")
        if self.output == "sigmoid":
            g = g * h * (1.0 - h)
        grads = []
        for i in range(len(self.weights) - 1, -1, -1):
            h_in = cache[i] if i == 0 else cache[i][1]
            grads.append(g.sum(axis=0))
            grads.append(h_in.T @ g)
            g = g @ self.weights[i].T
            if i > 0:
                z_in, a_in = cache[i]
                g = g * self._act_grad(z_in, a_in)
        grads.reverse()
        return grads, g

    # -- checkpoints -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "sizes": self.sizes,
            "hidden": self.hidden,
            "slope": self.slope,
            "output": self.output,
            "params": [p.ravel().tolist() for p in self.params],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        sizes = [int(s) for s in d["sizes"]]
        flat = [np.asarray(p, dtype=np.float64) for p in d["params"]]
        ws = [flat[2 * i].reshape(a, b) for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))]
        bs = [flat[2 * i + 1] for i in range(len(sizes) - 1)]
        return cls(sizes, ws, bs, d["hidden"], float(d["slope"]), d["output"])


def forward(net: Mlp, batch):
    return net.forward(batch)


def backward(net: Mlp, cache, output_grad):
    return net.backward(cache, output_grad)


def save_checkpoint(path, **nets: Mlp) -> None:
    Path(path).write_text(json.dumps({k: n.to_dict() for k, n in nets.items()}, sort_keys=True))


def load_checkpoint(path) -> dict[str, Mlp]:
    return {k: Mlp.from_dict(v) for k, v in json.loads(Path(path).read_text()).items()}


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    t: int = 0

    @classmethod
    def for_params(cls, params, **kw) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **kw)


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray]):
    """One bias-corrected Adam update applied to ``params`` in place.

    The step is rejected (nothing modified) if any gradient is non-finite;
    the error names the layer holding it.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state disagree in length")
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ValueError(f"gradient {i} has shape {g.shape}, parameter has {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(i // 2)
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state
