"""Aggregate observation statistics.

All collective filters are driven not by per-agent measurements but by
three per-step summaries of the pooled observation increments: the mean
increment, a quadratic-variation proxy, and the empirical variance of
the increments.  The discrete-symbol counterpart is the empirical symbol
distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class AggregateStats:
    """Per-step summary of M pooled observation increments.

    mean_increment   average increment across agents, (1/M) sum_j dZ_j
    increment_var    sample variance of the increments divided by dt,
                     (1/(M*dt)) sum_j (dZ_j - mean)^2; zero when M == 1
    quad_var         quadratic-variation proxy, mean_increment^2 / dt
    dt               step length the increments were taken over
    """

    mean_increment: float
    increment_var: float
    quad_var: float
    dt: float

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.increment_var < 0 or self.quad_var < 0:
            raise ConfigError("variance statistics cannot be negative")

    @classmethod
    def single(cls, increment: float, dt: float) -> "AggregateStats":
        """Stats for a single observation path (M = 1): the variance term
        vanishes and the filters reduce to their classical forms."""
        return cls(mean_increment=float(increment), increment_var=0.0,
                   quad_var=float(increment) ** 2 / dt, dt=dt)


@dataclass(frozen=True)
class EmpiricalSymbolDistribution:
    """Empirical distribution of M observed symbols over an alphabet of
    size m; every entry is an integer multiple of 1/M."""

    probs: np.ndarray
    num_observations: int

    def __post_init__(self):
        q = np.asarray(self.probs, dtype=float)
        if q.ndim != 1 or q.size < 1:
            raise ConfigError("symbol distribution must be a 1-d vector")
        if np.any(q < 0) or abs(q.sum() - 1.0) > 1e-12:
            raise ConfigError("symbol distribution entries must be >= 0 and sum to 1")
        counts = q * self.num_observations
        if np.max(np.abs(counts - np.round(counts))) > 1e-9:
            raise ConfigError("entries must be integer multiples of 1/M")
        object.__setattr__(self, "probs", q)

    @property
    def alphabet_size(self) -> int:
        return self.probs.size

    @classmethod
    def dirac(cls, symbol: int, alphabet_size: int) -> "EmpiricalSymbolDistribution":
        q = np.zeros(alphabet_size)
        q[symbol] = 1.0
        return cls(q, num_observations=1)


def aggregate_increment(increments: np.ndarray, dt: float) -> AggregateStats:
    """Summarize one step's pooled observation increments.

    The variance uses the population (1/M) normalization, so a single
    agent yields increment_var == 0 exactly.  Sums use exact (order-free)
    accumulation, making the result permutation-invariant to the bit.
    """
    inc = np.asarray(increments, dtype=float).ravel()
    if inc.size == 0:
        raise ConfigError("cannot aggregate an empty increment list")
    if dt <= 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    mean = math.fsum(inc) / inc.size
    var = math.fsum((x - mean) ** 2 for x in inc) / (inc.size * dt)
    return AggregateStats(mean_increment=mean, increment_var=var,
                          quad_var=mean * mean / dt, dt=dt)


def aggregate_increment_path(increments: np.ndarray, dt: float,
                             quad_var_ema: float | None = None,
                             ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized per-step aggregation of a (num_steps, M) increment array.

    Returns (mean_increment, increment_var, quad_var) arrays of length
    num_steps.  ``quad_var_ema`` optionally smooths the noisy per-step
    quadratic-variation proxy with an exponential moving average of that
    weight (off by default; the raw per-step proxy is what the filter
    formulas call for).
    """
    dz = np.asarray(increments, dtype=float)
    if dz.ndim != 2 or dz.shape[1] == 0:
        raise ConfigError("increments must be a (num_steps, M) array with M >= 1")
    if dt <= 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    mean = dz.mean(axis=1)
    centered = dz - mean[:, None]
    var = (centered * centered).sum(axis=1) / (dz.shape[1] * dt)
    quad = mean * mean / dt
    if quad_var_ema is not None:
        if not 0.0 < quad_var_ema <= 1.0:
            raise ConfigError("quad_var_ema must lie in (0, 1]")
        smoothed = np.empty_like(quad)
        acc = quad[0]
        for t, raw in enumerate(quad):
            acc = (1.0 - quad_var_ema) * acc + quad_var_ema * raw
            smoothed[t] = acc
        quad = smoothed
    return mean, var, quad


def stats_at(mean: np.ndarray, var: np.ndarray, quad: np.ndarray, step: int,
             dt: float) -> AggregateStats:
    """AggregateStats view of one step of a path aggregation."""
    return AggregateStats(mean_increment=float(mean[step]),
                          increment_var=float(var[step]),
                          quad_var=float(quad[step]), dt=dt)


def empirical_symbol_distribution(symbols: np.ndarray, alphabet_size: int,
                                  ) -> EmpiricalSymbolDistribution:
    """Empirical distribution q(z) = count(z) / M of observed symbols."""
    sym = np.asarray(symbols)
    if sym.size == 0:
        raise ConfigError("cannot aggregate an empty symbol list")
    if not np.issubdtype(sym.dtype, np.integer):
        raise ConfigError("symbols must be integers")
    if sym.min() < 0 or sym.max() >= alphabet_size:
        raise ConfigError(
            f"symbol out of range: saw {int(sym.min())}..{int(sym.max())} "
            f"for alphabet size {alphabet_size}")
    counts = np.bincount(sym.ravel(), minlength=alphabet_size)
    return EmpiricalSymbolDistribution(counts / sym.size, num_observations=sym.size)
