"""Closed-form collective filters for linear-Gaussian models.

The continuous-time collective recursion is a Kalman-Bucy filter whose
covariance gain term is scaled by (1 - V/sigma_w^2), where V is the
empirical variance of the pooled observation increments: V = 0 recovers
the classical filter, V = sigma_w^2 switches the gain off entirely and
leaves the pure moment flow.  A discrete-time counterpart handles vector
observations with a general noise covariance.
"""

from __future__ import annotations

import numpy as np

from .aggregate import AggregateStats
from .beliefs import GaussianBelief, symmetrize
from .errors import ConfigError, FilterDivergenceError
from .models import LinearGaussianModel

__all__ = ["GaussianBelief", "ckf_step", "kalman_bucy_step", "discrete_ckf_update"]

_PSD_BLOWUP_TOL = 1e-6


def ckf_step(belief: GaussianBelief, model: LinearGaussianModel,
             stats: AggregateStats) -> GaussianBelief:
    """One Euler step of the collective Kalman-Bucy recursion.

    mean += A m dt + (1/sw^2) Cov H' (dZ_mean - H m dt)
    cov  += (A Cov + Cov A' + Q - (1/sw^2)(1 - V/sw^2) Cov H' H Cov) dt

    The covariance is symmetrized after the step; an eigenvalue below
    -1e-6 raises (dt too large for these dynamics).  V > sigma_w^2 is
    allowed -- the gain term then feeds covariance growth -- and is only
    bounded by this divergence check.
    """
    h_row = model.obs_row()
    sw2 = model.obs_noise_std ** 2
    dt = stats.dt
    m, cov = belief.mean, belief.cov
    cov_h = cov @ h_row
    mean_next = m + (model.A @ m) * dt + cov_h * (
        (stats.mean_increment - (h_row @ m) * dt) / sw2)
    gain_scale = (1.0 - stats.increment_var / sw2) / sw2
    cov_next = cov + (model.A @ cov + cov @ model.A.T + model.Q
                      - gain_scale * np.outer(cov_h, cov_h)) * dt
    cov_next = symmetrize(cov_next)
    min_eig = float(np.linalg.eigvalsh(cov_next).min())
    if min_eig < -_PSD_BLOWUP_TOL:
        raise FilterDivergenceError(
            f"covariance eigenvalue {min_eig:.3e} < -1e-6 after step; "
            "dt too large for these dynamics")
    return GaussianBelief(mean_next, cov_next, psd_tol=_PSD_BLOWUP_TOL)


def kalman_bucy_step(belief: GaussianBelief, model: LinearGaussianModel,
                     increment: float, dt: float) -> GaussianBelief:
    """Classical Kalman-Bucy Euler step driven by a single observation
    path; literally the collective step on a one-path aggregate."""
    return ckf_step(belief, model, AggregateStats.single(increment, dt))


def discrete_ckf_update(belief: GaussianBelief, A, H, Q, R, z_mean, z_var,
                        ) -> GaussianBelief:
    """Discrete-time collective update with vector observations.

    Predict m' = A m, Cov' = A Cov A' + Q; gain K = Cov' H' S^-1 with
    S = H Cov' H' + R; then

        m+   = m' + K (z_mean - H m')
        Cov+ = Cov' - K (S - z_var) K'

    where z_mean/z_var are the moments of the pooled observation batch.
    z_var = 0 is the classical Kalman update; z_var = S leaves the
    predicted covariance untouched (the batch carries no information).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    z_mean = np.atleast_1d(np.asarray(z_mean, dtype=float))
    z_var = np.atleast_2d(np.asarray(z_var, dtype=float))
    obs_dim = H.shape[0]
    if R.shape != (obs_dim, obs_dim) or z_var.shape != (obs_dim, obs_dim) \
            or z_mean.shape != (obs_dim,):
        raise ConfigError("observation-space shapes are inconsistent")

    mean_pred = A @ belief.mean
    cov_pred = symmetrize(A @ belief.cov @ A.T + Q)
    innov_cov = H @ cov_pred @ H.T + R
    try:
        gain = np.linalg.solve(innov_cov.T, (cov_pred @ H.T).T).T
    except np.linalg.LinAlgError:
        raise FilterDivergenceError("innovation covariance is singular") from None
    mean_next = mean_pred + gain @ (z_mean - H @ mean_pred)
    cov_next = symmetrize(cov_pred - gain @ (innov_cov - z_var) @ gain.T)
    min_eig = float(np.linalg.eigvalsh(cov_next).min())
    if min_eig < -_PSD_BLOWUP_TOL:
        raise FilterDivergenceError(
            f"covariance eigenvalue {min_eig:.3e} < -1e-6 after update")
    return GaussianBelief(mean_next, cov_next, psd_tol=_PSD_BLOWUP_TOL)
