"""Variance schedule and the elementary forward/reverse diffusion steps.

Timesteps are 1-based: arrays of length T hold step t at index t-1, and the
fully denoised target carries index 0 without an array slot. The reverse
step exists in two algebraically identical forms; ``denoise_step`` is the
production path and ``decomposed_denoise_step`` is its three-term rewrite
(denoising term, momentum term, uncertainty term), kept as an executable
equivalence oracle.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DiffusionSchedule:
    """Per-timestep coefficients of a fixed linear-beta schedule.

    beta is the per-step variance, alpha = 1 - beta, alpha_bar the running
    product of alpha, sigma = sqrt(beta) the sampling noise scale, and
    gamma = 1/sqrt(alpha), eta = beta / (sqrt(alpha) * sqrt(1 - alpha_bar)),
    xi = sigma are the rescale / step-size / noise coefficients of the
    decomposed reverse step.
    """

    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    sigma: np.ndarray
    gamma: np.ndarray
    eta: np.ndarray
    xi: np.ndarray

    def check_t(self, t: int) -> int:
        t = int(t)
        if not 1 <= t <= self.T:
            raise ValueError(f"timestep {t} outside 1..{self.T}")
        return t


def build_schedule(T: int, beta_start: float, beta_end: float) -> DiffusionSchedule:
    """Build the schedule with beta linearly interpolated over t = 1..T.

    Endpoints are inclusive: beta[1] = beta_start, beta[T] = beta_end
    (a single point beta_start when T = 1). Requires T >= 1 and
    0 < beta_start <= beta_end < 1.
    """
    if int(T) != T or T < 1:
        raise ValueError(f"T must be a positive integer, got {T}")
    T = int(T)
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"
        )
    beta = np.linspace(beta_start, beta_end, T)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    sigma = np.sqrt(beta)
    gamma = 1.0 / np.sqrt(alpha)
    eta = beta / (np.sqrt(alpha) * np.sqrt(1.0 - alpha_bar))
    xi = sigma
    for arr in (beta, alpha, alpha_bar, sigma, gamma, eta, xi):
        arr.flags.writeable = False
    return DiffusionSchedule(T, beta, alpha, alpha_bar, sigma, gamma, eta, xi)


def _check_shapes(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what} shape {b.shape} does not match {a.shape}")


def q_sample(
    w0: np.ndarray, t: int, eps: np.ndarray, sched: DiffusionSchedule
) -> np.ndarray:
    """Closed-form forward diffusion: sqrt(ab_t) * w0 + sqrt(1 - ab_t) * eps."""
    t = sched.check_t(t)
    _check_shapes(w0, eps, "noise")
    ab = sched.alpha_bar[t - 1]
    return np.sqrt(ab) * w0 + np.sqrt(1.0 - ab) * eps


def denoise_step(
    wt: np.ndarray,
    eps_hat: np.ndarray,
    t: int,
    sched: DiffusionSchedule,
    z: np.ndarray | None = None,
) -> np.ndarray:
    """One reverse step from w_t to w_{t-1} given predicted noise eps_hat.

    Computes (1/sqrt(alpha_t)) * (w_t - beta_t/sqrt(1-alpha_bar_t) * eps_hat)
    plus sigma_t * z when z is supplied; omitting z gives the deterministic
    step used at inference.
    """
    t = sched.check_t(t)
    _check_shapes(wt, eps_hat, "eps_hat")
    i = t - 1
    out = sched.gamma[i] * (
        wt - (sched.beta[i] / np.sqrt(1.0 - sched.alpha_bar[i])) * eps_hat
    )
    if z is not None:
        _check_shapes(wt, z, "z")
        out = out + sched.sigma[i] * z
    return out


def decomposed_denoise_step(
    wt: np.ndarray,
    eps_hat: np.ndarray,
    t: int,
    sched: DiffusionSchedule,
    z: np.ndarray | None = None,
) -> np.ndarray:
    """Three-term rewrite of denoise_step; the equivalence oracle.

    Computes (w_t - eta_t * eps_hat) + (gamma_t - 1) * w_t + xi_t * z: a
    gradient-descent-like update with step size eta_t, a momentum-style
    rescale weighted by gamma_t - 1, and an uncertainty term.
    """
    t = sched.check_t(t)
    _check_shapes(wt, eps_hat, "eps_hat")
    i = t - 1
    out = (wt - sched.eta[i] * eps_hat) + (sched.gamma[i] - 1.0) * wt
    if z is not None:
        _check_shapes(wt, z, "z")
        out = out + sched.xi[i] * z
    return out
