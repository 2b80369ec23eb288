"""Task-conditional noise predictor.

The predictor estimates, from the classifier weights w_t and the support
set, the noise mixed into w_t. It first takes the exact support-set
cross-entropy gradient at w_t, then refines each class row independently
through a small dense UNet: two encoder blocks halving the width, a
bottleneck, and two decoder blocks doubling it back. Every block multiplies
its affine output element-wise with a per-block linear projection of the
32-dim sinusoidal timestep embedding, then applies ReLU; the final decoder
block skips the ReLU so outputs can be signed.

Additive skip connections (the default) add the first encoder block's
output to the first decoder block's output and re-add the net input to the
final output, which makes zero-initialized parameters act as the identity
on the incoming gradient. ``skips="none"`` disables both.

Training differentiates the squared-error objective w.r.t. the block
parameters only: the support gradient is a constant input, so no derivative
is ever taken through the inner-loop/classifier path.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels, schedule as sched_mod
from .classifier import ClassifierWeights, TaskEpisode, support_loss_grad
from .errors import NonFiniteError
from .instrumentation import COUNTERS
from .nn import DenseLayer, init_dense, relu_backward, relu_forward, timestep_embedding

BLOCKS = ("eb1", "eb2", "bb", "db1", "db2")
TIME_EMBED_DIM = 32
SKIP_MODES = ("additive", "none")


def block_dims(dim: int) -> dict:
    """(in, out) widths per block for feature dimension dim."""
    h, q = dim // 2, dim // 4
    return {"eb1": (dim, h), "eb2": (h, q), "bb": (q, q), "db1": (q, h), "db2": (h, dim)}


@dataclass
class NoisePredictorParams:
    """All block parameters (the meta-parameters) plus architecture flags.

    layers maps "<block>.ft" / "<block>.te" to the feature-transform and
    time-embedding DenseLayers of each block.
    """

    layers: dict
    dim: int
    skips: str = "additive"
    grad_normalize: bool = False

    def __post_init__(self):
        if self.skips not in SKIP_MODES:
            raise ValueError(f"skips must be one of {SKIP_MODES}, got {self.skips!r}")
        dims = block_dims(self.dim)
        for b in BLOCKS:
            d_in, d_out = dims[b]
            ft, te = self.layers[f"{b}.ft"], self.layers[f"{b}.te"]
            if ft.weight.shape != (d_out, d_in):
                raise ValueError(f"{b}.ft must be {d_in}->{d_out}, got {ft.weight.shape}")
            if te.weight.shape != (d_out, TIME_EMBED_DIM):
                raise ValueError(
                    f"{b}.te must be {TIME_EMBED_DIM}->{d_out}, got {te.weight.shape}"
                )


def init_params(
    dim: int, seed: int, skips: str = "additive", grad_normalize: bool = False
) -> NoisePredictorParams:
    """Deterministically initialize all block layers for feature dim ``dim``."""
    if dim < 8 or dim % 4 != 0:
        raise ValueError(f"feature dim must be >= 8 and divisible by 4, got {dim}")
    rng = np.random.default_rng(seed)
    dims = block_dims(dim)
    layers = {}
    for b in BLOCKS:
        d_in, d_out = dims[b]
        layers[f"{b}.ft"] = init_dense(d_in, d_out, rng)
        layers[f"{b}.te"] = init_dense(TIME_EMBED_DIM, d_out, rng)
    return NoisePredictorParams(layers, dim, skips, grad_normalize)


def named_arrays(params: NoisePredictorParams) -> dict:
    """Flat ordered view of all parameter tensors, keyed by dotted names."""
    out = {}
    for b in BLOCKS:
        for part in ("ft", "te"):
            layer = params.layers[f"{b}.{part}"]
            out[f"{b}.{part}.weight"] = layer.weight
            out[f"{b}.{part}.bias"] = layer.bias
    return out


def params_from_arrays(
    arrays: dict, dim: int, skips: str, grad_normalize: bool
) -> NoisePredictorParams:
    """Rebuild params from a named_arrays-style dict (checkpoint loading)."""
    layers = {}
    for b in BLOCKS:
        for part in ("ft", "te"):
            layers[f"{b}.{part}"] = DenseLayer(
                arrays[f"{b}.{part}.weight"].copy(), arrays[f"{b}.{part}.bias"].copy()
            )
    return NoisePredictorParams(layers, dim, skips, grad_normalize)


def _forward(params: NoisePredictorParams, g: np.ndarray, t: int):
    """Run the block pipeline on gradient rows g; returns (output, cache)."""
    x0 = kernels.normalize_rows(g) if params.grad_normalize else g
    emb = timestep_embedding(t, TIME_EMBED_DIM)
    cache = {"x0": x0, "emb": emb}
    x = x0
    acts = {}
    for b in BLOCKS:
        ft, te_layer = params.layers[f"{b}.ft"], params.layers[f"{b}.te"]
        te = te_layer.weight @ emb + te_layer.bias
        ft_out = kernels.dense_forward(ft.weight, ft.bias, x)
        pre = kernels.rowscale(ft_out, te)
        act = pre if b == "db2" else relu_forward(pre)
        cache[b] = (x, ft_out, te, pre)
        acts[b] = act
        if b == "db1" and params.skips == "additive":
            act = act + acts["eb1"]
            acts[b] = act
        x = act
    out = acts["db2"] + x0 if params.skips == "additive" else acts["db2"]
    return out, cache


def _backward(params: NoisePredictorParams, cache: dict, grad_out: np.ndarray) -> dict:
    """Exact parameter gradients of _forward; the net input is a constant."""
    emb = cache["emb"]
    grads = {}
    d_act = {b: None for b in BLOCKS}
    d_act["db2"] = grad_out
    if params.skips == "additive":
        d_act["eb1"] = np.zeros_like(cache["eb1"][3])
    for b in reversed(BLOCKS):
        x, ft_out, te, pre = cache[b]
        da = d_act[b]
        if b == "db1" and params.skips == "additive":
            d_act["eb1"] += da
        d_pre = da if b == "db2" else relu_backward(pre, da)
        d_ft_out, d_te = kernels.rowscale_backward(ft_out, te, d_pre)
        ft = params.layers[f"{b}.ft"]
        gw, gb, dx = kernels.dense_backward(ft.weight, x, d_ft_out)
        grads[f"{b}.ft.weight"] = gw
        grads[f"{b}.ft.bias"] = gb
        grads[f"{b}.te.weight"] = np.outer(d_te, emb)
        grads[f"{b}.te.bias"] = d_te
        prev = {"eb2": "eb1", "bb": "eb2", "db1": "bb", "db2": "db1"}.get(b)
        if prev is not None:
            if d_act[prev] is None:
                d_act[prev] = dx
            else:
                d_act[prev] += dx
    return {k: grads[k] for k in named_arrays(params)}


def refine_gradient(params: NoisePredictorParams, g: np.ndarray, t: int) -> np.ndarray:
    """Apply the UNet to an externally supplied gradient matrix.

    This is the seam below predict_noise: it skips the support-gradient
    computation so tests can inject or ablate g directly.
    """
    g = np.ascontiguousarray(g, dtype=np.float64)
    if g.ndim != 2 or g.shape[1] != params.dim:
        raise ValueError(f"gradient shape {g.shape} incompatible with dim {params.dim}")
    out, _ = _forward(params, g, t)
    return out


def predict_noise(
    params: NoisePredictorParams,
    wt: ClassifierWeights,
    episode: TaskEpisode,
    t: int,
    sched: sched_mod.DiffusionSchedule,
) -> np.ndarray:
    """Estimate the noise present in w_t, conditioned on the support set."""
    t = sched.check_t(t)
    if wt.dim != params.dim or episode.dim != params.dim:
        raise ValueError("feature dims of params, weights and episode must agree")
    if wt.n_way != episode.n_way:
        raise ValueError("weight rows must match the episode's way")
    g = support_loss_grad(wt, episode)
    out, _ = _forward(params, g, t)
    COUNTERS.unet_forwards += 1
    return out


def loss_and_param_grads(
    params: NoisePredictorParams,
    w0: ClassifierWeights,
    episode: TaskEpisode,
    t: int,
    eps: np.ndarray,
    sched: sched_mod.DiffusionSchedule,
):
    """Diffusion MSE loss at step t and its exact parameter gradients.

    Diffuses the target weights to w_t = q_sample(w0, t, eps), predicts the
    noise there, and returns (mean squared error against eps, gradients
    keyed like named_arrays). Only the block parameters are differentiated;
    the support gradient enters as data.
    """
    eps = np.ascontiguousarray(eps, dtype=np.float64)
    if eps.shape != w0.w.shape:
        raise ValueError(f"noise shape {eps.shape} != weights shape {w0.w.shape}")
    t = sched.check_t(t)
    wt_arr = sched_mod.q_sample(w0.w, t, eps, sched)
    wt = ClassifierWeights(wt_arr, kind=w0.kind, temperature=w0.temperature)
    g = support_loss_grad(wt, episode)
    out, cache = _forward(params, g, t)
    COUNTERS.unet_forwards += 1
    diff = out - eps
    loss = float(np.mean(diff * diff))
    if not np.isfinite(loss):
        raise NonFiniteError(f"non-finite diffusion loss at t={t}")
    grad_out = (2.0 / diff.size) * diff
    grads = _backward(params, cache, grad_out)
    COUNTERS.unet_backwards += 1
    return loss, grads
