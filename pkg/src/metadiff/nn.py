"""Minimal dense-network substrate with manual forward/backward passes.

Everything is float64 and deterministic. Batched affine ops route through
the selected kernel backend; gradients are exact reverse-mode derivatives,
cross-checked in the tests against central finite differences.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import NonFiniteError


@dataclass
class DenseLayer:
    """Affine layer y = weight @ x + bias with weight shape (out, in)."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weight = np.ascontiguousarray(self.weight, dtype=np.float64)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.ndim != 1:
            raise ValueError("weight must be 2-D and bias 1-D")
        if self.weight.shape[0] != self.bias.shape[0]:
            raise ValueError(
                f"bias length {self.bias.shape[0]} != out_dim {self.weight.shape[0]}"
            )
        if min(self.weight.shape) < 1:
            raise ValueError("layer dimensions must be positive")
        if not (np.isfinite(self.weight).all() and np.isfinite(self.bias).all()):
            raise ValueError("layer parameters must be finite")

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


def init_dense(in_dim: int, out_dim: int, rng: np.random.Generator) -> DenseLayer:
    """Glorot-uniform weights, zero bias."""
    bound = np.sqrt(6.0 / (in_dim + out_dim))
    weight = rng.uniform(-bound, bound, size=(out_dim, in_dim))
    return DenseLayer(weight, np.zeros(out_dim))


def dense_forward(layer: DenseLayer, x: np.ndarray) -> np.ndarray:
    """weight @ x + bias for a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (layer.in_dim,):
        raise ValueError(f"input shape {x.shape} != ({layer.in_dim},)")
    return kernels.dense_forward(layer.weight, layer.bias, x[None, :])[0]


def dense_backward(layer: DenseLayer, x: np.ndarray, grad_out: np.ndarray):
    """Gradients of dense_forward: (grad_weight, grad_bias, grad_x)."""
    x = np.asarray(x, dtype=np.float64)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if x.shape != (layer.in_dim,):
        raise ValueError(f"input shape {x.shape} != ({layer.in_dim},)")
    if grad_out.shape != (layer.out_dim,):
        raise ValueError(f"grad_out shape {grad_out.shape} != ({layer.out_dim},)")
    gw, gb, gx = kernels.dense_backward(layer.weight, x[None, :], grad_out[None, :])
    return gw, gb, gx[0]


def dense_forward_batch(layer: DenseLayer, x: np.ndarray) -> np.ndarray:
    """Affine map applied to every row of x: (R, in) -> (R, out)."""
    if x.ndim != 2 or x.shape[1] != layer.in_dim:
        raise ValueError(f"input shape {x.shape} incompatible with in_dim {layer.in_dim}")
    return kernels.dense_forward(layer.weight, layer.bias, x)


def dense_backward_batch(layer: DenseLayer, x: np.ndarray, grad_out: np.ndarray):
    if grad_out.shape != (x.shape[0], layer.out_dim):
        raise ValueError(f"grad_out shape {grad_out.shape} inconsistent with input")
    return kernels.dense_backward(layer.weight, x, grad_out)


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Pass-through where x > 0; the subgradient at exactly 0 is 0."""
    return np.where(x > 0.0, grad_out, 0.0)


def timestep_embedding(t: int, dim: int) -> np.ndarray:
    """Sinusoidal encoding of an integer timestep t >= 1.

    Entry 2i is sin(t / 10000^(2i/dim)) and entry 2i+1 the matching cosine,
    so every entry lies in [-1, 1] and the vector is a pure function of t.
    """
    if dim <= 0 or dim % 2 != 0:
        raise ValueError(f"dim must be a positive even integer, got {dim}")
    if t < 1:
        raise ValueError(f"timestep must be >= 1, got {t}")
    freqs = 10000.0 ** (-np.arange(dim // 2) * 2.0 / dim)
    angles = t * freqs
    out = np.empty(dim)
    out[0::2] = np.sin(angles)
    out[1::2] = np.cos(angles)
    return out


@dataclass
class AdamState:
    """Adam moments plus hyperparameters for a dict of named parameters."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    @classmethod
    def for_params(cls, params: dict, lr: float, weight_decay: float = 0.0) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            lr=lr,
            weight_decay=weight_decay,
        )


def adam_update(params: dict, grads: dict, state: AdamState) -> None:
    """One Adam step with bias correction, updating params in place.

    Weight decay is decoupled: params are shrunk by lr * weight_decay before
    the moment-based update. Non-finite gradient entries abort the step.
    """
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise NonFiniteError(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape mismatch for {name!r}")
        if state.weight_decay:
            p -= state.lr * state.weight_decay * p
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def finite_difference_gradient(f, params: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.zeros_like(params)
    flat = grad.ravel()
    work = params.copy()
    wflat = work.ravel()
    for i in range(wflat.size):
        orig = wflat[i]
        wflat[i] = orig + h
        fp = f(work)
        wflat[i] = orig - h
        fm = f(work)
        wflat[i] = orig
        flat[i] = (fp - fm) / (2.0 * h)
    return grad
