"""Feedback particle filters driven by aggregate observation statistics.

Unweighted interacting particle systems: each particle is steered by a
gain times the pooled innovation instead of being reweighted or
resampled.  Includes the exact linear-Gaussian form, a constant-gain
approximation for general drift/observation functions, the finite-state
jump version, and the exact simplex-valued reference filter the particle
versions are tested against.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .aggregate import AggregateStats
from .beliefs import SimplexBelief, symmetrize
from .errors import ConfigError, FilterDivergenceError, StepSizeError
from .models import FiniteStateModel, LinearGaussianModel

__all__ = [
    "EuclideanEnsemble", "FiniteEnsemble", "GainState", "FiniteGain",
    "empirical_moments", "lg_gain", "constant_gain", "finite_gain",
    "lg_fpf_step", "constant_gain_fpf_step", "collective_wonham_step",
    "finite_fpf_step", "sample_gaussian_ensemble", "sample_finite_ensemble",
    "save_snapshots",
]


@dataclass(frozen=True)
class EuclideanEnsemble:
    """N particle states in R^d, one row per particle."""

    states: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.states, dtype=float))
        if x.shape[0] < 2:
            raise ConfigError("need at least two particles for covariance estimation")
        if not np.all(np.isfinite(x)):
            raise ConfigError("particle states must be finite")
        object.__setattr__(self, "states", x)

    @property
    def num_particles(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]


@dataclass(frozen=True)
class FiniteEnsemble:
    """N particle states coded as integers in {0, ..., num_states-1}."""

    states: np.ndarray
    num_states: int

    def __post_init__(self):
        s = np.asarray(self.states)
        if s.ndim != 1 or s.size < 1 or not np.issubdtype(s.dtype, np.integer):
            raise ConfigError("finite ensemble must be a 1-d integer array")
        if s.min() < 0 or s.max() >= self.num_states:
            raise ConfigError("particle state out of range")
        object.__setattr__(self, "states", s.astype(np.int64))

    @property
    def num_particles(self) -> int:
        return self.states.size

    def histogram(self) -> np.ndarray:
        return np.bincount(self.states, minlength=self.num_states) / self.num_particles


@dataclass(frozen=True)
class GainState:
    """Euclidean gain in effect for one step.

    ``gain`` multiplies the innovation, ``correction`` the variance
    mismatch; ``alpha = (1 - V/sigma_w^2)/2`` splits the predicted
    observation between particle and ensemble mean.
    """

    mode: str                 # "exact-lg" or "constant-gain"
    gain: np.ndarray
    correction: np.ndarray
    alpha: float


@dataclass(frozen=True)
class FiniteGain:
    """Finite-state gain vectors plus the anchor constants of the sign
    rule that keeps both modulated jump increments nonnegative."""

    gain: np.ndarray
    mismatch_gain: np.ndarray
    anchor: float
    mismatch_anchor: float


def empirical_moments(ensemble: EuclideanEnsemble) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and (1/(N-1))-normalized symmetrized covariance."""
    x = ensemble.states
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (x.shape[0] - 1)
    return mean, symmetrize(cov)


def _alpha(stats: AggregateStats, sigma_w: float) -> float:
    return 0.5 * (1.0 - stats.increment_var / sigma_w ** 2)


def _warn_if_degenerate(states: np.ndarray) -> None:
    if np.all(states.max(axis=0) == states.min(axis=0)):
        warnings.warn("particle ensemble has zero spread in every coordinate; "
                      "gains vanish and the filter degenerates to propagation",
                      RuntimeWarning, stacklevel=3)


def lg_gain(ensemble: EuclideanEnsemble, model: LinearGaussianModel,
            stats: AggregateStats) -> GainState:
    """Exact linear-Gaussian gain: empirical covariance times H'/sigma_w^2;
    the mismatch correction is identically zero in this case."""
    _, cov = empirical_moments(ensemble)
    h_row = model.obs_row()
    return GainState(mode="exact-lg",
                     gain=cov @ h_row / model.obs_noise_std ** 2,
                     correction=np.zeros(ensemble.dim),
                     alpha=_alpha(stats, model.obs_noise_std))


def constant_gain(ensemble: EuclideanEnsemble, obs_fn_values: np.ndarray,
                  sigma_w: float, stats: AggregateStats) -> GainState:
    """Constant-gain closure of the weighted Poisson equations.

    The innovation gain is the empirical cross-covariance of state and
    observation function over sigma_w^2.  The mismatch correction pairs
    the state with g = (h - h_mean)^2 / 2; its first term is the
    ensemble average of gain * (h - h_mean), which vanishes identically
    for a within-step-constant gain but is kept in the written form.
    """
    x = ensemble.states
    n = x.shape[0]
    sw2 = sigma_w ** 2
    h_vals = np.asarray(obs_fn_values, dtype=float)
    h_mean = h_vals.mean()
    h_centered = h_vals - h_mean
    g_vals = 0.5 * h_centered * h_centered
    g_centered = g_vals - g_vals.mean()
    x_centered = x - x.mean(axis=0)
    gain = x_centered.T @ h_centered / ((n - 1) * sw2)
    correction = (-0.5 * (h_centered[:, None] * gain[None, :]).mean(axis=0)
                  + x_centered.T @ g_centered / ((n - 1) * sw2))
    return GainState(mode="constant-gain", gain=gain, correction=correction,
                     alpha=_alpha(stats, sigma_w))


def lg_fpf_step(ensemble: EuclideanEnsemble, model: LinearGaussianModel,
                stats: AggregateStats, rng: np.random.Generator,
                ) -> EuclideanEnsemble:
    """One Euler step of the linear-Gaussian feedback particle filter.

    Each particle gets an independent process-noise draw and the shared
    gain times its own innovation, with the predicted observation split
    alpha/(1-alpha) between the particle and the ensemble mean.  Draws
    one (N, d) standard-normal block from ``rng``.
    """
    _warn_if_degenerate(ensemble.states)
    x = ensemble.states
    h_row = model.obs_row()
    state = lg_gain(ensemble, model, stats)
    dt = stats.dt
    pred = state.alpha * (x @ h_row) + (1.0 - state.alpha) * (h_row @ x.mean(axis=0))
    noise = rng.standard_normal(x.shape)
    new_states = (x + (x @ model.A.T) * dt
                  + math.sqrt(dt) * (noise @ model.process_noise_sqrt.T)
                  + (stats.mean_increment - pred * dt)[:, None] * state.gain[None, :])
    return EuclideanEnsemble(new_states)


def constant_gain_fpf_step(ensemble: EuclideanEnsemble,
                           drift: Callable[[np.ndarray], np.ndarray],
                           diffusion,
                           obs_fn: Callable[[np.ndarray], np.ndarray],
                           sigma_w: float, stats: AggregateStats,
                           rng: np.random.Generator) -> EuclideanEnsemble:
    """General Euclidean FPF step under the constant-gain closure.

    ``drift`` maps particle states (N, d) to drift values (N, d);
    ``diffusion`` is either a constant (d, p) matrix or a callable giving
    per-particle (N, d, p) factors; ``obs_fn`` maps states to scalar
    observation-function values (N,).  Because the gain is constant
    within a step, the Stratonovich/Ito distinction in the innovation
    coupling drops out and the step is a plain Euler update.
    """
    _warn_if_degenerate(ensemble.states)
    x = ensemble.states
    sw2 = sigma_w ** 2
    dt = stats.dt
    h_vals = np.asarray(obs_fn(x), dtype=float)
    state = constant_gain(ensemble, h_vals, sigma_w, stats)
    h_mean = h_vals.mean()
    pred = state.alpha * h_vals + (1.0 - state.alpha) * h_mean
    mismatch = (stats.increment_var + stats.quad_var) / sw2 - 1.0
    if callable(diffusion):
        factors = np.asarray(diffusion(x), dtype=float)
        noise = np.einsum("ndp,np->nd", factors,
                          rng.standard_normal((x.shape[0], factors.shape[2])))
    else:
        factors = np.atleast_2d(np.asarray(diffusion, dtype=float))
        noise = rng.standard_normal((x.shape[0], factors.shape[1])) @ factors.T
    new_states = (x + np.asarray(drift(x), dtype=float) * dt
                  + math.sqrt(dt) * noise
                  + (stats.mean_increment - pred * dt)[:, None] * state.gain[None, :]
                  + (mismatch * dt) * state.correction[None, :])
    return EuclideanEnsemble(new_states)


def collective_wonham_step(belief: SimplexBelief, model: FiniteStateModel,
                           stats: AggregateStats) -> SimplexBelief:
    """One Euler step of the exact collective filter on the simplex.

    Forward-generator flow plus the innovation term and the
    variance-mismatch term; negative entries are clipped to zero and the
    vector renormalized.  Raises when clipping destroys more than half
    the mass.
    """
    p = belief.probs
    if p.size != model.num_states:
        raise ConfigError("belief size does not match the model")
    h = model.obs_values
    sw2 = model.obs_noise_std ** 2
    dt = stats.dt
    h_mean = p @ h
    spread = h - h_mean
    g = 0.5 * spread * spread
    g_mean = p @ g
    innov = stats.mean_increment - h_mean * dt
    mismatch = (stats.increment_var + stats.quad_var) / sw2 - 1.0
    nxt = (p + (model.rate_adjoint() @ p) * dt
           + p * spread * (innov / sw2)
           + p * (g - g_mean) * (mismatch * dt / sw2))
    clipped = np.clip(nxt, 0.0, None)
    mass = clipped.sum()
    if not np.isfinite(mass) or mass < 0.5:
        raise FilterDivergenceError(
            f"belief mass is {mass:.3g} after clipping; filter diverged")
    return SimplexBelief(clipped / mass)


def finite_gain(histogram: np.ndarray, model: FiniteStateModel,
                stats: AggregateStats) -> FiniteGain:
    """Gain vectors for the finite-state FPF from the particle histogram.

    The anchor constants follow the sign rule: take the minimum of the
    observation values when the pooled innovation is nonnegative (the
    maximum otherwise), and likewise for g against the sign of the
    variance mismatch, so both modulated increments stay nonnegative.
    """
    pi = np.asarray(histogram, dtype=float)
    h = model.obs_values
    sw2 = model.obs_noise_std ** 2
    h_mean = pi @ h
    spread = h - h_mean
    g = 0.5 * spread * spread
    innov = stats.mean_increment - h_mean * stats.dt
    mismatch = ((stats.increment_var + stats.quad_var) / sw2 - 1.0) * stats.dt
    anchor = float(h.min()) if innov >= 0 else float(h.max())
    mismatch_anchor = float(g.min()) if mismatch >= 0 else float(g.max())
    return FiniteGain(gain=pi * (h - anchor) / sw2,
                      mismatch_gain=pi * (g - mismatch_anchor) / sw2,
                      anchor=anchor, mismatch_anchor=mismatch_anchor)


def finite_fpf_step(ensemble: FiniteEnsemble, model: FiniteStateModel,
                    stats: AggregateStats, rng: np.random.Generator,
                    ) -> FiniteEnsemble:
    """One step of the finite-state feedback particle filter.

    Base jump probabilities rate(y -> x) * dt are augmented by the
    modulated increments, which depend only on the target state; each
    particle makes at most one jump, sampled with a single uniform
    against the cumulative target probabilities.  Draws one (N,) uniform
    block from ``rng``.
    """
    if ensemble.num_states != model.num_states:
        raise ConfigError("ensemble state count does not match the model")
    dim = model.num_states
    pi = ensemble.histogram()
    h = model.obs_values
    sw2 = model.obs_noise_std ** 2
    h_mean = pi @ h
    innov = stats.mean_increment - h_mean * stats.dt
    mismatch = ((stats.increment_var + stats.quad_var) / sw2 - 1.0) * stats.dt
    gains = finite_gain(pi, model, stats)
    du = gains.gain * innov
    du_var = gains.mismatch_gain * mismatch
    if du.min() < 0 or du_var.min() < 0:
        raise FilterDivergenceError("modulated jump increment went negative; "
                                    "sign rule violated")
    prob = model.jump_rates.T * stats.dt + (du + du_var)[None, :]
    np.fill_diagonal(prob, 0.0)
    totals = prob.sum(axis=1)
    if totals.max() >= 1.0:
        raise StepSizeError(
            f"total per-particle jump probability {totals.max():.3g} >= 1; "
            "decrease dt")
    cdf = np.cumsum(prob, axis=1)
    rows = cdf[ensemble.states]
    u = rng.random(ensemble.num_particles)
    target = (rows <= u[:, None]).sum(axis=1)
    new_states = np.where(target < dim, np.minimum(target, dim - 1),
                          ensemble.states)
    return FiniteEnsemble(new_states, num_states=dim)


def sample_gaussian_ensemble(model: LinearGaussianModel, num_particles: int,
                             rng: np.random.Generator) -> EuclideanEnsemble:
    """N iid draws from the model prior; draws one (N, d) normal block."""
    noise = rng.standard_normal((num_particles, model.dim))
    return EuclideanEnsemble(model.prior_mean + noise @ model.prior_cov_sqrt.T)


def sample_finite_ensemble(model: FiniteStateModel, num_particles: int,
                           rng: np.random.Generator) -> FiniteEnsemble:
    """N iid draws from the model prior; draws one (N,) uniform block."""
    cdf = np.cumsum(model.prior.probs)
    states = np.searchsorted(cdf, rng.random(num_particles), side="right")
    return FiniteEnsemble(np.minimum(states, model.num_states - 1).astype(np.int64),
                          num_states=model.num_states)


def save_snapshots(path, snapshots: Sequence) -> None:
    """Dump ensemble snapshots to CSV as (step, particle_id, state...)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        first = snapshots[0]
        dim = first.states.shape[1] if first.states.ndim == 2 else 1
        writer.writerow(["step", "particle_id"] + [f"x{k}" for k in range(dim)])
        for step, snap in enumerate(snapshots):
            for i in range(snap.num_particles):
                row = (snap.states[i].tolist() if snap.states.ndim == 2
                       else [int(snap.states[i])])
                writer.writerow([step, i] + row)
