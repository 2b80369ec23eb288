"""Meta-training by diffusion and meta-test by deterministic denoising.

Training repeatedly: samples a base-split episode and its auxiliary data,
fits target weights on the auxiliary data, draws one timestep and one noise
matrix, and takes a single Adam step on the noise-prediction MSE. The cost
of a step is independent of the schedule length T (one predictor
forward/backward, no iteration over timesteps).

Meta-test starts from Gaussian weights and applies the deterministic
reverse step T times, conditioning on the support set at every step.

All training randomness comes from one seeded stream with a fixed draw
order per step: episode (classes, support blocks), auxiliary blocks,
timestep, noise matrix. The root SeedSequence of the config seed spawns
two children, (parameter init, training stream), so runs are exactly
reproducible and resumable from checkpointed stream state.
"""

from dataclasses import dataclass

import numpy as np

from .checkpoint import Checkpoint, restore_rng, snapshot
from .classifier import ClassifierWeights, TaskEpisode, cross_entropy_loss, predict
from .config import RunConfig
from .errors import ConfigError, DivergenceError
from .nn import AdamState, adam_update
from .schedule import DiffusionSchedule, build_schedule, denoise_step
from .unet import NoisePredictorParams, init_params, loss_and_param_grads, named_arrays, predict_noise
from .world import ClassWorld, auxiliary_dataset, sample_episode, target_weights

DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True)
class TrainStepRecord:
    step: int
    t_sampled: int
    mse_loss: float
    grad_norm: float


@dataclass
class DenoiseTrajectory:
    """Weights at every point of one denoising run, w_T first, w_0 last.

    query_acc/query_loss hold the per-step query metrics when the episode
    carries a query set, else None. All lists/arrays have length T + 1.
    """

    weights: list
    query_acc: np.ndarray | None = None
    query_loss: np.ndarray | None = None


def train_step(
    params: NoisePredictorParams,
    adam: AdamState,
    episode: TaskEpisode,
    w0_target: ClassifierWeights,
    sched: DiffusionSchedule,
    rng: np.random.Generator,
) -> TrainStepRecord:
    """One diffusion training step: sample (t, eps), update params with Adam."""
    t = int(rng.integers(1, sched.T + 1))
    eps = rng.standard_normal(w0_target.w.shape)
    loss, grads = loss_and_param_grads(params, w0_target, episode, t, eps, sched)
    grad_norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    adam_update(named_arrays(params), grads, adam)
    return TrainStepRecord(adam.step, t, loss, grad_norm)


def train(
    config: RunConfig,
    world: ClassWorld,
    resume: Checkpoint | None = None,
    record_sink=None,
    checkpoint_sink=None,
) -> Checkpoint:
    """Run the training loop to config.train_steps; returns the final state.

    ``record_sink`` receives every TrainStepRecord; ``checkpoint_sink``
    receives an intermediate Checkpoint every train_checkpoint_interval
    steps. With ``resume`` the loop continues the interrupted stream and
    produces records identical to an uninterrupted run.
    """
    sched = build_schedule(
        config.schedule_steps, config.schedule_beta_start, config.schedule_beta_end
    )
    if resume is not None:
        if resume.config.to_dict() != config.to_dict():
            raise ConfigError("checkpoint was produced by a different config")
        params = resume.params
        adam = resume.adam
        rng = restore_rng(resume.rng_state)
        start = resume.step
    else:
        init_ss, stream_ss = np.random.SeedSequence(config.seed).spawn(2)
        params = init_params(
            config.world_dim,
            init_ss,
            skips=config.unet_skips,
            grad_normalize=config.unet_grad_normalize,
        )
        adam = AdamState.for_params(
            named_arrays(params), lr=config.train_lr, weight_decay=config.train_weight_decay
        )
        rng = np.random.Generator(np.random.PCG64(stream_ss))
        start = 0
    for step in range(start + 1, config.train_steps + 1):
        episode = sample_episode(world, "base", config.way, config.shot, 0, rng)
        aux = auxiliary_dataset(world, episode, config.target_aux_per_class, rng)
        target = target_weights(
            episode,
            aux,
            config.classifier,
            config.target_gda_steps,
            config.target_gda_lr,
            temperature=config.temperature,
        )
        record = train_step(params, adam, episode, target, sched, rng)
        if record_sink is not None:
            record_sink(record)
        if checkpoint_sink is not None and step % config.train_checkpoint_interval == 0:
            checkpoint_sink(snapshot(config, step, params, adam, rng))
    return snapshot(config, config.train_steps, params, adam, rng)


def _denoise_once(
    params: NoisePredictorParams,
    episode: TaskEpisode,
    sched: DiffusionSchedule,
    rng: np.random.Generator,
    kind: str,
    temperature: float,
    collect=None,
) -> np.ndarray:
    w = rng.standard_normal((episode.n_way, episode.dim))
    if collect is not None:
        collect(w)
    for t in range(sched.T, 0, -1):
        wt = ClassifierWeights(w, kind=kind, temperature=temperature)
        eps_hat = predict_noise(params, wt, episode, t, sched)
        w = denoise_step(w, eps_hat, t, sched)
        if not np.isfinite(w).all() or np.abs(w).max() > DIVERGENCE_LIMIT:
            raise DivergenceError(f"denoising diverged at t={t}", t)
        if collect is not None:
            collect(w)
    return w


def sample_weights(
    params: NoisePredictorParams,
    episode: TaskEpisode,
    sched: DiffusionSchedule,
    rng: np.random.Generator,
    kind: str = "cosine",
    temperature: float = 10.0,
    draws: int = 1,
) -> ClassifierWeights:
    """Adapt to an episode: denoise Gaussian-initialized weights for T steps.

    Deterministic given (params, support set, schedule, rng state); every
    reverse step omits the noise term. With draws > 1 the returned weights
    are the mean over independent starting points.
    """
    if draws < 1:
        raise ValueError("draws must be >= 1")
    acc = None
    for _ in range(draws):
        w = _denoise_once(params, episode, sched, rng, kind, temperature)
        acc = w if acc is None else acc + w
    return ClassifierWeights(acc / draws, kind=kind, temperature=temperature)


def sample_trajectory(
    params: NoisePredictorParams,
    episode: TaskEpisode,
    sched: DiffusionSchedule,
    rng: np.random.Generator,
    kind: str = "cosine",
    temperature: float = 10.0,
) -> DenoiseTrajectory:
    """As sample_weights (single draw) but recording every intermediate w_t."""
    snapshots = []
    _denoise_once(
        params, episode, sched, rng, kind, temperature, collect=lambda w: snapshots.append(w.copy())
    )
    weights = [ClassifierWeights(w, kind=kind, temperature=temperature) for w in snapshots]
    acc = loss = None
    if episode.query_y.size:
        acc = np.array(
            [float(np.mean(predict(w, episode.query_x) == episode.query_y)) for w in weights]
        )
        loss = np.array(
            [cross_entropy_loss(w, episode.query_x, episode.query_y) for w in weights]
        )
    return DenoiseTrajectory(weights, acc, loss)
