"""Task-specific classifier head over precomputed feature vectors.

One weight row per class. Linear scoring is a plain inner product; cosine
scoring is temperature-scaled cosine similarity, which rejects zero-norm
weight rows and maps zero-norm features to all-zero scores. The support
cross-entropy gradient is closed-form and exact (finite-difference checked
in the tests).
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .instrumentation import COUNTERS

KINDS = ("linear", "cosine")


@dataclass
class ClassifierWeights:
    """Weight matrix (n_way, dim); also the denoising variable."""

    w: np.ndarray
    kind: str = "cosine"
    temperature: float = 10.0

    def __post_init__(self):
        self.w = np.ascontiguousarray(self.w, dtype=np.float64)
        if self.w.ndim != 2 or self.w.shape[0] < 2 or self.w.shape[1] < 1:
            raise ValueError(f"weights must be (N >= 2, d >= 1), got {self.w.shape}")
        if not np.isfinite(self.w).all():
            raise ValueError("weights must be finite")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")

    @property
    def n_way(self) -> int:
        return self.w.shape[0]

    @property
    def dim(self) -> int:
        return self.w.shape[1]


@dataclass
class TaskEpisode:
    """One N-way K-shot task: labelled support set plus query set.

    Exactly k_shot support items per class; query size is free (may be
    empty). class_ids optionally records which world classes the episode's
    labels 0..N-1 were remapped from.
    """

    support_x: np.ndarray
    support_y: np.ndarray
    query_x: np.ndarray
    query_y: np.ndarray
    n_way: int
    k_shot: int
    class_ids: np.ndarray | None = None

    def __post_init__(self):
        self.support_x = np.ascontiguousarray(self.support_x, dtype=np.float64)
        self.query_x = np.ascontiguousarray(self.query_x, dtype=np.float64)
        self.support_y = np.asarray(self.support_y, dtype=np.int64)
        self.query_y = np.asarray(self.query_y, dtype=np.int64)
        if self.n_way < 2 or self.k_shot < 1:
            raise ValueError("need n_way >= 2 and k_shot >= 1")
        if self.support_x.ndim != 2 or self.query_x.ndim != 2:
            raise ValueError("features must be 2-D arrays")
        if self.query_x.shape[1] != self.support_x.shape[1]:
            raise ValueError("support and query feature dims differ")
        if self.support_x.shape[0] != self.support_y.shape[0]:
            raise ValueError("support feature/label counts differ")
        if self.query_x.shape[0] != self.query_y.shape[0]:
            raise ValueError("query feature/label counts differ")
        if not (np.isfinite(self.support_x).all() and np.isfinite(self.query_x).all()):
            raise ValueError("features must be finite")
        for y in (self.support_y, self.query_y):
            if y.size and (y.min() < 0 or y.max() >= self.n_way):
                raise ValueError("labels outside [0, n_way)")
        counts = np.bincount(self.support_y, minlength=self.n_way)
        if not (counts == self.k_shot).all():
            raise ValueError(
                f"support must hold exactly {self.k_shot} items per class, got {counts}"
            )

    @property
    def dim(self) -> int:
        return self.support_x.shape[1]


def scores(wts: ClassifierWeights, x: np.ndarray) -> np.ndarray:
    """Class scores for a batch of feature rows: (R, d) -> (R, N)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != wts.dim:
        raise ValueError(f"features shape {x.shape} incompatible with dim {wts.dim}")
    if wts.kind == "linear":
        return x @ wts.w.T
    norms = np.sqrt((wts.w * wts.w).sum(axis=1))
    if not norms.all():
        raise ValueError("zero-norm cosine weight row")
    what = wts.w / norms[:, None]
    return wts.temperature * (kernels.normalize_rows(x) @ what.T)


def logits(wts: ClassifierWeights, x: np.ndarray) -> np.ndarray:
    """Scores of a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (wts.dim,):
        raise ValueError(f"feature shape {x.shape} != ({wts.dim},)")
    return scores(wts, x[None, :])[0]


def cross_entropy_loss(wts: ClassifierWeights, x: np.ndarray, y: np.ndarray) -> float:
    """Mean cross-entropy (natural log) of the labelled batch."""
    loss, _ = kernels.softmax_xent(scores(wts, x), np.asarray(y, dtype=np.int64))
    return loss


def cross_entropy_grad(wts: ClassifierWeights, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Exact gradient of cross_entropy_loss w.r.t. the weight matrix."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if wts.kind == "linear":
        _, dscores = kernels.softmax_xent(x @ wts.w.T, y)
        return dscores.T @ x
    norms = np.sqrt((wts.w * wts.w).sum(axis=1))
    if not norms.all():
        raise ValueError("zero-norm cosine weight row")
    what = wts.w / norms[:, None]
    xhat = kernels.normalize_rows(x)
    cos = xhat @ what.T
    _, dscores = kernels.softmax_xent(wts.temperature * cos, y)
    a = dscores.T @ xhat
    c = (dscores * cos).sum(axis=0)
    return wts.temperature * (a - c[:, None] * what) / norms[:, None]


def support_loss(wts: ClassifierWeights, episode: TaskEpisode) -> float:
    return cross_entropy_loss(wts, episode.support_x, episode.support_y)


def support_loss_grad(wts: ClassifierWeights, episode: TaskEpisode) -> np.ndarray:
    COUNTERS.support_grad_evals += 1
    return cross_entropy_grad(wts, episode.support_x, episode.support_y)


def predict(wts: ClassifierWeights, x: np.ndarray) -> np.ndarray:
    """Argmax class per feature row; ties break toward the lowest index."""
    return np.argmax(scores(wts, x), axis=1)
