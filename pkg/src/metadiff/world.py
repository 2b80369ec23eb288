"""Synthetic feature-space world standing in for a frozen embedding network.

Classes are Gaussian clusters around unit-norm prototype vectors; episodic
sampling draws N-way K-shot tasks from disjoint base/novel class splits.
The auxiliary dataset gives an episode abundant labelled data from the same
generators, and target_weights fits classifier weights on it by full-batch
gradient descent; those weights are the denoising targets during
meta-training.

Sampling draw order (one rng consumed left to right): episode = class
choice, then per-class support blocks, then per-class query blocks;
auxiliary = per-class sample blocks.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .classifier import ClassifierWeights, TaskEpisode

SPLITS = ("base", "novel")


@dataclass(frozen=True)
class ClassWorld:
    """Unit-norm class prototypes plus isotropic within-class noise."""

    prototypes: np.ndarray
    noise_scale: float
    base_classes: np.ndarray
    novel_classes: np.ndarray
    seed: int

    @property
    def num_classes(self) -> int:
        return self.prototypes.shape[0]

    @property
    def dim(self) -> int:
        return self.prototypes.shape[1]

    def split(self, name: str) -> np.ndarray:
        if name not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {name!r}")
        return self.base_classes if name == "base" else self.novel_classes


def make_world(
    num_classes: int,
    dim: int,
    noise_scale: float,
    base_fraction: float,
    seed: int,
) -> ClassWorld:
    """Deterministically generate prototypes and the base/novel split."""
    if num_classes < 2 or dim < 1:
        raise ValueError("need num_classes >= 2 and dim >= 1")
    if noise_scale < 0.0:
        raise ValueError("noise_scale must be >= 0")
    if not 0.0 < base_fraction < 1.0:
        raise ValueError("base_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    protos = rng.standard_normal((num_classes, dim))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    protos.flags.writeable = False
    perm = rng.permutation(num_classes)
    n_base = min(max(int(num_classes * base_fraction), 1), num_classes - 1)
    base = np.sort(perm[:n_base])
    novel = np.sort(perm[n_base:])
    base.flags.writeable = False
    novel.flags.writeable = False
    return ClassWorld(protos, float(noise_scale), base, novel, seed)


def draw_samples(
    world: ClassWorld, class_id: int, n: int, rng: np.random.Generator
) -> np.ndarray:
    """n feature vectors from one class: prototype + noise_scale * N(0, I)."""
    return world.prototypes[class_id] + world.noise_scale * rng.standard_normal(
        (n, world.dim)
    )


def sample_episode(
    world: ClassWorld,
    split: str,
    n_way: int,
    k_shot: int,
    queries_per_class: int,
    rng: np.random.Generator,
) -> TaskEpisode:
    """Sample an episode from the split, labels remapped to sampled order."""
    pool = world.split(split)
    if len(pool) < n_way:
        raise ValueError(
            f"split {split!r} has {len(pool)} classes, need at least {n_way}"
        )
    chosen = rng.choice(pool, size=n_way, replace=False)
    support_x = np.concatenate(
        [draw_samples(world, cid, k_shot, rng) for cid in chosen]
    )
    support_y = np.repeat(np.arange(n_way), k_shot)
    if queries_per_class > 0:
        query_x = np.concatenate(
            [draw_samples(world, cid, queries_per_class, rng) for cid in chosen]
        )
        query_y = np.repeat(np.arange(n_way), queries_per_class)
    else:
        query_x = np.empty((0, world.dim))
        query_y = np.empty(0, dtype=np.int64)
    return TaskEpisode(
        support_x, support_y, query_x, query_y, n_way, k_shot, class_ids=chosen
    )


@dataclass(frozen=True)
class AuxiliaryDataset:
    """Abundant labelled data for one episode's classes (m per class)."""

    x: np.ndarray
    y: np.ndarray
    m_per_class: int


def auxiliary_dataset(
    world: ClassWorld, episode: TaskEpisode, m_per_class: int, rng: np.random.Generator
) -> AuxiliaryDataset:
    """Fresh samples from the episode's class generators, m per class."""
    if episode.class_ids is None:
        raise ValueError("episode does not carry world class ids")
    if m_per_class < 1:
        raise ValueError("m_per_class must be >= 1")
    x = np.concatenate(
        [draw_samples(world, cid, m_per_class, rng) for cid in episode.class_ids]
    )
    y = np.repeat(np.arange(episode.n_way), m_per_class)
    return AuxiliaryDataset(x, y, m_per_class)


def target_weights(
    episode: TaskEpisode,
    aux: AuxiliaryDataset,
    kind: str,
    steps: int,
    lr: float,
    temperature: float = 10.0,
) -> ClassifierWeights:
    """Fit target classifier weights on the auxiliary data.

    Starts from w = 0 and runs ``steps`` full-batch gradient-descent
    iterations of the cross-entropy loss. The result is the denoising
    target for this episode.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if aux.x.shape[0] != episode.n_way * aux.m_per_class:
        raise ValueError("auxiliary dataset does not match the episode's way")
    w0 = np.zeros((episode.n_way, episode.dim))
    w = kernels.gda_fit(
        np.ascontiguousarray(aux.x),
        np.ascontiguousarray(aux.y, dtype=np.int64),
        w0,
        kind,
        temperature,
        steps,
        lr,
        0.0,
    )
    return ClassifierWeights(w, kind=kind, temperature=temperature)
