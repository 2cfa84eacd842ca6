"""Variance-preserving discrete diffusion with an analytic noise predictor.

The world is a Gaussian mixture, so the noisy marginal at step t is itself a
mixture with means sqrt(alpha_bar)*mu_k and covariances
alpha_bar*Sigma_k + (1-alpha_bar)*I.  The noise predictor is exact:

    epsilon(x, t | cond) = -sqrt(1 - alpha_bar[t]) * grad_x log p_t(x | cond)

which lets the sampler and every steering experiment run without any trained
network.  Cheap per-step evaluation matters here (millions of calls per
experiment), so mixtures are prepared once per condition and responsibilities
are computed in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericsError
from .world import Condition, ConditionalMixture, MixtureWorld, conditional_components

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class NoiseSchedule:
    """Per-step beta values and their cumulative alpha_bar products.

    Derived coefficient arrays are filled in automatically; construction does
    not validate (tests may build degenerate schedules), linear_schedule does.
    """

    steps: int
    beta: np.ndarray
    alpha_bar: np.ndarray
    sqrt_alpha_bar: np.ndarray = field(init=False, repr=False)
    sqrt_one_minus_alpha_bar: np.ndarray = field(init=False, repr=False)
    inv_sqrt_alpha: np.ndarray = field(init=False, repr=False)
    noise_coef: np.ndarray = field(init=False, repr=False)
    sqrt_beta: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        self.alpha_bar = np.asarray(self.alpha_bar, dtype=float)
        one_minus = 1.0 - self.alpha_bar
        self.sqrt_alpha_bar = np.sqrt(self.alpha_bar)
        self.sqrt_one_minus_alpha_bar = np.sqrt(one_minus)
        self.inv_sqrt_alpha = 1.0 / np.sqrt(1.0 - self.beta)
        # beta/sqrt(1-alpha_bar), with the all-zero-beta degenerate case mapped to 0
        self.noise_coef = np.divide(
            self.beta, self.sqrt_one_minus_alpha_bar,
            out=np.zeros_like(self.beta), where=one_minus > 0,
        )
        self.sqrt_beta = np.sqrt(self.beta)

    def validate(self) -> None:
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.beta.shape != (self.steps,) or self.alpha_bar.shape != (self.steps,):
            raise ValueError("beta and alpha_bar must both have length steps")
        if not np.all((self.beta > 0) & (self.beta < 1)):
            raise ValueError("every beta must lie strictly in (0, 1)")
        if not np.all((self.alpha_bar > 0) & (self.alpha_bar < 1)):
            raise ValueError("every alpha_bar must lie strictly in (0, 1)")
        if not np.all(np.diff(self.alpha_bar) < 0):
            raise ValueError("alpha_bar must be strictly decreasing")
        if np.abs(self.alpha_bar - np.cumprod(1.0 - self.beta)).max() > 1e-12:
            raise ValueError("alpha_bar must equal the running product of (1 - beta)")


def linear_schedule(steps: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Linearly spaced betas; the standard discrete-time noising schedule."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    beta = np.linspace(beta_start, beta_end, steps)
    schedule = NoiseSchedule(steps=steps, beta=beta, alpha_bar=np.cumprod(1.0 - beta))
    schedule.validate()
    return schedule


@dataclass
class LatentState:
    """A point mid-reverse-trajectory; t_index counts remaining noisy levels."""

    x: np.ndarray
    t_index: int


def _score_and_logp(mix: ConditionalMixture, x: np.ndarray, a_bar: float) -> tuple[np.ndarray, float]:
    """Score (grad log density) and log density of the noised mixture at x."""
    sab = math.sqrt(a_bar)
    d = x.shape[0]
    if mix.identity_cov:
        # Sigma_k = I makes every marginal covariance exactly I.
        if mix.means.shape[0] == 1:
            diff = x - sab * mix.means[0]
            logp = -0.5 * (float(diff @ diff) + d * _LOG_2PI)
            return -diff, logp
        diff = x[None, :] - sab * mix.means
        logits = mix.log_weights - 0.5 * np.einsum("kd,kd->k", diff, diff)
        m = logits.max()
        w = np.exp(logits - m)
        z = w.sum()
        return -(w @ diff) / z, m + math.log(z) - 0.5 * d * _LOG_2PI

    diff = x[None, :] - sab * mix.means
    s = a_bar * mix.eig_vals + (1.0 - a_bar)            # marginal eigenvalues (K, d)
    y = np.einsum("kji,kj->ki", mix.eig_vecs, diff)     # rotate into eigenbasis
    ys = y / s
    logits = (
        mix.log_weights
        - 0.5 * (np.einsum("ki,ki->k", y, ys) + np.log(s).sum(axis=1))
    )
    m = logits.max()
    w = np.exp(logits - m)
    z = w.sum()
    sinv_diff = np.einsum("kij,kj->ki", mix.eig_vecs, ys)
    return -(w @ sinv_diff) / z, m + math.log(z) - 0.5 * d * _LOG_2PI


def mixture_log_density(mix: ConditionalMixture, x: np.ndarray, a_bar: float = 1.0) -> float:
    """Log density of the conditional mixture noised to level a_bar (1 = data level)."""
    return _score_and_logp(mix, np.asarray(x, dtype=float), a_bar)[1]


def analytic_epsilon(
    world: MixtureWorld, schedule: NoiseSchedule, state: LatentState, cond: Condition
) -> np.ndarray:
    """Exact conditional noise prediction at the state's step."""
    t = state.t_index
    if not 0 <= t < schedule.steps:
        raise ValueError(f"t_index {t} outside schedule range [0, {schedule.steps})")
    mix = conditional_components(world, cond)
    score, _ = _score_and_logp(mix, state.x, float(schedule.alpha_bar[t]))
    eps = -schedule.sqrt_one_minus_alpha_bar[t] * score
    if not math.isfinite(float(eps.sum())):  # non-finite entries poison the sum
        raise NumericsError(f"non-finite noise estimate at step {t}")
    return eps


def ancestral_step(
    schedule: NoiseSchedule,
    state: LatentState,
    epsilon_hat: np.ndarray,
    rng: np.random.Generator,
) -> LatentState:
    """One reverse step; the final step (t_index 0) adds no fresh noise."""
    t = state.t_index
    if not 0 <= t < schedule.steps:
        raise ValueError(f"t_index {t} outside schedule range [0, {schedule.steps})")
    x = schedule.inv_sqrt_alpha[t] * (state.x - schedule.noise_coef[t] * epsilon_hat)
    if t >= 1:
        x = x + schedule.sqrt_beta[t] * rng.standard_normal(x.shape[0])
    if not math.isfinite(float(x.sum())):
        raise NumericsError(f"non-finite latent produced at step {t}")
    return LatentState(x, t - 1)


def sample(
    world: MixtureWorld,
    schedule: NoiseSchedule,
    cond: Condition,
    noise_fn,
    rng: np.random.Generator,
) -> np.ndarray:
    """Full reverse trajectory from x_T ~ N(0, I) down to a clean sample.

    noise_fn(state, cond) supplies the per-step noise estimate, which is how
    steering hooks are injected without the sampler knowing about them.
    """
    state = LatentState(rng.standard_normal(world.dimension), schedule.steps - 1)
    while state.t_index >= 0:
        state = ancestral_step(schedule, state, noise_fn(state, cond), rng)
    return state.x
