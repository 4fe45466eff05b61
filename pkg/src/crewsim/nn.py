"""Small numpy MLP with hand-written backpropagation and Adam."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("tanh", "identity")


def _act(name: str, z: np.ndarray) -> np.ndarray:
    return np.tanh(z) if name == "tanh" else z


def _act_grad(name: str, a: np.ndarray) -> np.ndarray:
    # derivative written in terms of the activation output
    return 1.0 - a * a if name == "tanh" else np.ones_like(a)


@dataclass
class NetParams:
    weights: list[np.ndarray]  # each (fan_in, fan_out)
    biases: list[np.ndarray]
    hidden_activation: str = "tanh"
    output_activation: str = "identity"

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ValueError("weights and biases differ in length")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: inconsistent shapes {w.shape} / {b.shape}")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i}: input size {w.shape[0]} != previous output")
        for a in (self.hidden_activation, self.output_activation):
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a}")

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> NetParams:
        return NetParams([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                         self.hidden_activation, self.output_activation)

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())

    def to_dict(self) -> dict:
        return {
            "sizes": self.sizes,
            "hidden_activation": self.hidden_activation,
            "output_activation": self.output_activation,
            "layers": [
                {"shape": list(w.shape), "weight": w.ravel().tolist(), "bias": b.tolist()}
                for w, b in zip(self.weights, self.biases)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> NetParams:
        ws, bs = [], []
        for layer in d["layers"]:
            shape = tuple(layer["shape"])
            ws.append(np.asarray(layer["weight"], dtype=float).reshape(shape))
            bs.append(np.asarray(layer["bias"], dtype=float))
        return cls(ws, bs, d.get("hidden_activation", "tanh"), d.get("output_activation", "identity"))


def init_mlp(sizes, rng: np.random.Generator, hidden_activation: str = "tanh", output_activation: str = "identity",
             output_scale: float = 0.01) -> NetParams:
    """Scaled-normal init; the last layer starts small so initial policies are near uniform."""
    ws, bs = [], []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        scale = np.sqrt(1.0 / n_in)
        if i == len(sizes) - 2:
            scale *= output_scale
        ws.append(rng.normal(0.0, scale, (n_in, n_out)))
        bs.append(np.zeros(n_out))
    return NetParams(ws, bs, hidden_activation, output_activation)


def zeros_like_params(p: NetParams) -> NetParams:
    return NetParams([np.zeros_like(w) for w in p.weights], [np.zeros_like(b) for b in p.biases],
                     p.hidden_activation, p.output_activation)


def net_forward(p: NetParams, x: np.ndarray, return_cache: bool = False):
    """Forward pass over a single vector or a batch (rows)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.shape[1] != p.weights[0].shape[0]:
        raise ValueError(f"input has {a.shape[1]} features, network expects {p.weights[0].shape[0]}")
    cache = [a]
    last = len(p.weights) - 1
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        a = _act(p.output_activation if i == last else p.hidden_activation, a @ w + b)
        cache.append(a)
    out = a[0] if single else a
    return (out, cache) if return_cache else out


def net_backward(p: NetParams, x: np.ndarray, grad_out: np.ndarray, cache=None) -> NetParams:
    """Gradients of sum(grad_out * output) with respect to every weight and bias."""
    if cache is None:
        _, cache = net_forward(p, x, return_cache=True)
    g = np.asarray(grad_out, dtype=float)
    if g.ndim == 1:
        g = g[None, :]
    last = len(p.weights) - 1
    gw: list[np.ndarray] = [None] * len(p.weights)  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * len(p.weights)  # type: ignore[list-item]
    for i in range(last, -1, -1):
        act = p.output_activation if i == last else p.hidden_activation
        dz = g * _act_grad(act, cache[i + 1])
        gw[i] = cache[i].T @ dz
        gb[i] = dz.sum(axis=0)
        if i:
            g = dz @ p.weights[i].T
    return NetParams(gw, gb, p.hidden_activation, p.output_activation)


@dataclass
class Adam:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_grad_norm: float = 0.5
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """In-place descent step on ``params`` (lists of arrays, matched by position)."""
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        if self.max_grad_norm and self.max_grad_norm > 0:
            norm = np.sqrt(sum(float((g * g).sum()) for g in grads))
            if norm > self.max_grad_norm:
                grads = [g * (self.max_grad_norm / norm) for g in grads]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
