"""Episodic evaluation: mean accuracy with a 95% confidence interval over
novel-split tasks, plus aggregation of denoising convergence traces.

Task i draws everything it needs from a generator seeded by
(master_seed, i) — the episode first, then whatever the adaptor consumes —
so reports do not depend on the degree of evaluation parallelism.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .baselines import gda_adapt, momentum_gda_adapt
from .classifier import predict
from .errors import EvalError, NonFiniteError
from .meta import sample_trajectory, sample_weights
from .schedule import DiffusionSchedule
from .unet import NoisePredictorParams
from .world import ClassWorld, sample_episode


@dataclass
class EvalReport:
    num_tasks: int
    mean_acc: float
    ci95_half_width: float
    per_task_acc: np.ndarray
    excluded: int = 0


def confidence_interval(per_task_acc) -> tuple:
    """Normal-approximation 95% interval: (mean, 1.96 * s / sqrt(n)).

    Uses the n-1 sample standard deviation; a single task yields width 0.
    """
    acc = np.asarray(per_task_acc, dtype=np.float64)
    if acc.size == 0:
        raise ValueError("no accuracies to aggregate")
    mean = float(acc.mean())
    if acc.size < 2:
        return mean, 0.0
    half = 1.96 * float(acc.std(ddof=1)) / float(np.sqrt(acc.size))
    return mean, half


def task_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([master_seed, index])))


def evaluate(
    adaptor,
    world: ClassWorld,
    num_tasks: int,
    n_way: int,
    k_shot: int,
    queries_per_class: int,
    master_seed: int,
    strict: bool = False,
    workers: int = 1,
) -> EvalReport:
    """Run the adaptor on num_tasks novel-split episodes and aggregate.

    ``adaptor(episode, rng) -> ClassifierWeights``. Tasks where the adaptor
    aborts with a numeric error are excluded and counted; in strict mode any
    exclusion invalidates the report.
    """
    if num_tasks < 1:
        raise ValueError("num_tasks must be >= 1")
    if queries_per_class < 1:
        raise ValueError("evaluation needs at least one query per class")

    def run_task(index: int):
        rng = task_rng(master_seed, index)
        episode = sample_episode(world, "novel", n_way, k_shot, queries_per_class, rng)
        try:
            wts = adaptor(episode, rng)
        except NonFiniteError:
            return None
        return float(np.mean(predict(wts, episode.query_x) == episode.query_y))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_task, range(num_tasks)))
    else:
        results = [run_task(i) for i in range(num_tasks)]
    accs = np.array([r for r in results if r is not None], dtype=np.float64)
    excluded = num_tasks - accs.size
    if strict and excluded:
        raise EvalError(f"{excluded} of {num_tasks} tasks aborted in strict mode")
    if accs.size == 0:
        raise EvalError("every task aborted; no report")
    mean, half = confidence_interval(accs)
    return EvalReport(int(accs.size), mean, half, accs, excluded)


def metadiff_adaptor(
    params: NoisePredictorParams,
    sched: DiffusionSchedule,
    kind: str,
    temperature: float,
    draws: int = 1,
):
    """Adaptor that denoises Gaussian weights conditioned on the support set."""

    def adapt(episode, rng):
        return sample_weights(
            params, episode, sched, rng, kind=kind, temperature=temperature, draws=draws
        )

    return adapt


def gda_adaptor(kind: str, steps: int, lr: float, init: str, temperature: float):
    def adapt(episode, rng):
        return gda_adapt(episode, kind, steps, lr, init=init, rng=rng, temperature=temperature)

    return adapt


def momentum_gda_adaptor(
    kind: str, steps: int, lr: float, momentum: float, init: str, temperature: float
):
    def adapt(episode, rng):
        return momentum_gda_adapt(
            episode, kind, steps, lr, momentum, init=init, rng=rng, temperature=temperature
        )

    return adapt


@dataclass
class ConvergenceReport:
    """Query metrics averaged across tasks at every denoising step.

    steps_completed runs 0..T (0 = the Gaussian start, T = fully denoised);
    acc and loss have matching length T + 1.
    """

    steps_completed: np.ndarray
    acc: np.ndarray
    loss: np.ndarray
    num_tasks: int


def convergence_report(
    params: NoisePredictorParams,
    world: ClassWorld,
    num_tasks: int,
    sched: DiffusionSchedule,
    master_seed: int,
    n_way: int,
    k_shot: int,
    queries_per_class: int,
    kind: str = "cosine",
    temperature: float = 10.0,
) -> ConvergenceReport:
    """Average per-step denoising accuracy/loss over novel-split tasks.

    Uses the same per-task seeding as evaluate, so the final step of this
    report matches evaluate() run with the metadiff adaptor (single draw)
    under the same master seed.
    """
    if num_tasks < 1:
        raise ValueError("num_tasks must be >= 1")
    if queries_per_class < 1:
        raise ValueError("convergence traces need at least one query per class")
    acc_sum = np.zeros(sched.T + 1)
    loss_sum = np.zeros(sched.T + 1)
    for i in range(num_tasks):
        rng = task_rng(master_seed, i)
        episode = sample_episode(world, "novel", n_way, k_shot, queries_per_class, rng)
        traj = sample_trajectory(params, episode, sched, rng, kind=kind, temperature=temperature)
        acc_sum += traj.query_acc
        loss_sum += traj.query_loss
    return ConvergenceReport(
        np.arange(sched.T + 1), acc_sum / num_tasks, loss_sum / num_tasks, num_tasks
    )
