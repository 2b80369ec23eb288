"""Non-diffusion adaptation baselines: plain and momentum gradient descent
on the support set. Both are deterministic given the episode, the init and
the hyperparameters; momentum 0 reduces bit-identically to the plain rule.
"""

import numpy as np

from . import kernels
from .classifier import ClassifierWeights, TaskEpisode

INITS = ("zeros", "normal")


def _init_weights(
    episode: TaskEpisode, init: str, rng: np.random.Generator | None
) -> np.ndarray:
    if init == "zeros":
        return np.zeros((episode.n_way, episode.dim))
    if init == "normal":
        if rng is None:
            raise ValueError("random init requires an rng")
        return rng.standard_normal((episode.n_way, episode.dim))
    raise ValueError(f"init must be one of {INITS}, got {init!r}")


def gda_adapt(
    episode: TaskEpisode,
    kind: str,
    steps: int,
    lr: float,
    init: str = "zeros",
    rng: np.random.Generator | None = None,
    temperature: float = 10.0,
) -> ClassifierWeights:
    """w <- w - lr * grad of the support cross-entropy, ``steps`` times."""
    return momentum_gda_adapt(
        episode, kind, steps, lr, 0.0, init=init, rng=rng, temperature=temperature
    )


def momentum_gda_adapt(
    episode: TaskEpisode,
    kind: str,
    steps: int,
    lr: float,
    momentum: float,
    init: str = "zeros",
    rng: np.random.Generator | None = None,
    temperature: float = 10.0,
) -> ClassifierWeights:
    """Gradient descent with velocity v <- momentum * v + grad, v0 = 0."""
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if not 0.0 <= momentum < 1.0:
        raise ValueError("momentum must lie in [0, 1)")
    w0 = _init_weights(episode, init, rng)
    w = kernels.gda_fit(
        episode.support_x,
        episode.support_y,
        w0,
        kind,
        temperature,
        steps,
        lr,
        momentum,
    )
    return ClassifierWeights(w, kind=kind, temperature=temperature)
