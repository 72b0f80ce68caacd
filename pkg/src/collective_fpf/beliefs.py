"""Belief containers: probability vectors on the simplex and Gaussian
mean/covariance pairs.

Both are immutable value types validated on construction; every filter
step returns a fresh instance, so invariant checks run after each step
for free.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

SIMPLEX_TOL = 1e-10
SYMMETRY_TOL = 1e-10
PSD_TOL = 1e-10


@dataclass(frozen=True)
class SimplexBelief:
    """Probability vector over a finite state set."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise ConfigError("belief must be a nonempty 1-d probability vector")
        if np.any(p < -SIMPLEX_TOL):
            raise ConfigError(f"belief has negative entries (min {p.min():.3e})")
        total = p.sum()
        if abs(total - 1.0) > SIMPLEX_TOL:
            raise ConfigError(f"belief mass is {total!r}, expected 1")
        object.__setattr__(self, "probs", np.clip(p, 0.0, None))

    @property
    def num_states(self) -> int:
        return self.probs.size

    @classmethod
    def uniform(cls, num_states: int) -> "SimplexBelief":
        return cls(np.full(num_states, 1.0 / num_states))

    @classmethod
    def dirac(cls, state: int, num_states: int) -> "SimplexBelief":
        p = np.zeros(num_states)
        p[state] = 1.0
        return cls(p)

    def to_json_dict(self) -> dict:
        return {"probs": self.probs.tolist()}


@dataclass(frozen=True)
class GaussianBelief:
    """Gaussian belief given by its mean vector and covariance matrix.

    ``psd_tol`` is the tolerated negative-eigenvalue slack; step functions
    that have already screened for divergence pass a looser value.
    """

    mean: np.ndarray
    cov: np.ndarray
    psd_tol: float = field(default=PSD_TOL, compare=False)

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        c = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if m.ndim != 1 or c.shape != (m.size, m.size):
            raise ConfigError(f"mean/cov shapes inconsistent: {m.shape} vs {c.shape}")
        if not np.all(np.isfinite(m)) or not np.all(np.isfinite(c)):
            raise ConfigError("belief contains non-finite entries")
        if np.max(np.abs(c - c.T)) > SYMMETRY_TOL * max(1.0, np.max(np.abs(c))):
            raise ConfigError("covariance is not symmetric")
        min_eig = float(np.linalg.eigvalsh(c).min()) if m.size > 0 else 0.0
        if min_eig < -self.psd_tol:
            raise ConfigError(f"covariance has eigenvalue {min_eig:.3e} < -{self.psd_tol:.0e}")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", c)

    @property
    def dim(self) -> int:
        return self.mean.size

    def to_json_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist()}


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.T)
