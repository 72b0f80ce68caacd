"""Pure-numpy chain kernels.

Each function advances a whole recursion over the time grid with the
per-entity dimension vectorized.  The compiled extension
(``_kernels.pyx``) exports the same signatures; either backend may be
selected at import time (see ``_backend``).  All randomness is drawn by
the caller and passed in as arrays so both backends consume identical
noise.

Shapes: T = number of steps, M = agents, N = particles, d = state dim.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import FilterDivergenceError, StepSizeError

BACKEND_NAME = "python"

_PSD_BLOWUP_TOL = 1e-6


def _check_psd(cov: np.ndarray, step: int) -> None:
    if float(np.linalg.eigvalsh(cov).min()) < -_PSD_BLOWUP_TOL:
        raise FilterDivergenceError(
            f"covariance lost positive semidefiniteness at step {step}; "
            "dt is too large for these dynamics", step=step)


def lg_paths(A, Q_sqrt, h_row, sigma_w, dt, x0, proc_noise, obs_noise):
    """Euler-Maruyama paths for M linear-Gaussian agents.

    x0 (M, d); proc_noise (T, M, d); obs_noise (T, M).
    Returns states (T+1, M, d) and observation increments (T, M).
    """
    num_steps, num_agents, dim = proc_noise.shape
    sq = math.sqrt(dt)
    states = np.empty((num_steps + 1, num_agents, dim))
    dz = np.empty((num_steps, num_agents))
    states[0] = x0
    for t in range(num_steps):
        x = states[t]
        dz[t] = (x @ h_row) * dt + sigma_w * sq * obs_noise[t]
        states[t + 1] = x + (x @ A.T) * dt + sq * (proc_noise[t] @ Q_sqrt.T)
    return states, dz


def ctmc_paths(jump_rates, obs_values, sigma_w, dt, states0, jump_uniforms,
               obs_noise):
    """Bernoulli-thinned jump paths for M finite-state agents.

    From state y a step jumps to x with probability jump_rates[x, y] * dt;
    one uniform per agent per step decides the (possibly absent) target.
    Returns states (T+1, M) and observation increments (T, M).
    """
    num_steps, num_agents = jump_uniforms.shape
    dim = jump_rates.shape[0]
    sq = math.sqrt(dt)
    prob = jump_rates.T * dt          # prob[y, x] = P(y -> x)
    np.fill_diagonal(prob, 0.0)
    cdf = np.cumsum(prob, axis=1)
    states = np.empty((num_steps + 1, num_agents), dtype=np.int64)
    dz = np.empty((num_steps, num_agents))
    states[0] = states0
    for t in range(num_steps):
        cur = states[t]
        dz[t] = obs_values[cur] * dt + sigma_w * sq * obs_noise[t]
        rows = cdf[cur]
        target = (rows <= jump_uniforms[t][:, None]).sum(axis=1)
        states[t + 1] = np.where(target < dim, np.minimum(target, dim - 1), cur)
    return states, dz


def ckf_chain(A, h_row, Q, sigma_w, dt, m0, Sigma0, mean_inc, inc_var):
    """Collective Kalman-Bucy recursion over a whole aggregate-stats stream.

    Euler steps of the mean/covariance flow with the covariance gain term
    scaled by (1 - V/sigma_w^2); covariance symmetrized each step and
    checked for divergence.  Returns mean (T+1, d) and covariance
    (T+1, d, d) trajectories.
    """
    num_steps = mean_inc.shape[0]
    dim = A.shape[0]
    sw2 = sigma_w * sigma_w
    means = np.empty((num_steps + 1, dim))
    covs = np.empty((num_steps + 1, dim, dim))
    means[0], covs[0] = m0, Sigma0
    for t in range(num_steps):
        m, cov = means[t], covs[t]
        cov_h = cov @ h_row
        means[t + 1] = m + (A @ m) * dt + cov_h * ((mean_inc[t] - (h_row @ m) * dt) / sw2)
        gain_scale = (1.0 - inc_var[t] / sw2) / sw2
        nxt = cov + (A @ cov + cov @ A.T + Q - gain_scale * np.outer(cov_h, cov_h)) * dt
        nxt = 0.5 * (nxt + nxt.T)
        _check_psd(nxt, t)
        covs[t + 1] = nxt
    return means, covs


def kalman_bucy_bank(A, h_row, Q, sigma_w, dt, m0, Sigma0, dz):
    """M independent Kalman-Bucy filters sharing one model and prior.

    The covariance recursion is data-independent, so a single Riccati
    chain serves all agents while the means (M, d) are driven by the
    per-agent increment paths dz (T, M).  Returns terminal means (M, d)
    and the shared terminal covariance (d, d).
    """
    num_steps, num_agents = dz.shape
    sw2 = sigma_w * sigma_w
    means = np.tile(m0, (num_agents, 1))
    cov = Sigma0.copy()
    for t in range(num_steps):
        cov_h = cov @ h_row
        innov = dz[t] - (means @ h_row) * dt          # (M,)
        means = means + (means @ A.T) * dt + innov[:, None] * (cov_h / sw2)[None, :]
        nxt = cov + (A @ cov + cov @ A.T + Q - np.outer(cov_h, cov_h) / sw2) * dt
        nxt = 0.5 * (nxt + nxt.T)
        _check_psd(nxt, t)
        cov = nxt
    return means, cov


def lg_fpf_chain(A, Q_sqrt, h_row, sigma_w, dt, particles0, proc_noise,
                 mean_inc, inc_var):
    """Linear-Gaussian feedback particle filter over a stats stream.

    Each step forms the empirical-covariance gain, splits the predicted
    observation between the particle and the ensemble mean with weight
    alpha = (1 - V/sigma_w^2)/2, and advances all particles.  Returns the
    terminal particle array plus the empirical mean/cov trajectories.
    """
    num_steps, num_particles, dim = proc_noise.shape
    sw2 = sigma_w * sigma_w
    sq = math.sqrt(dt)
    particles = particles0.copy()
    means = np.empty((num_steps + 1, dim))
    covs = np.empty((num_steps + 1, dim, dim))
    for t in range(num_steps):
        mbar = particles.mean(axis=0)
        centered = particles - mbar
        cov = centered.T @ centered / (num_particles - 1)
        cov = 0.5 * (cov + cov.T)
        means[t], covs[t] = mbar, cov
        gain = cov @ h_row / sw2
        alpha = 0.5 * (1.0 - inc_var[t] / sw2)
        pred = alpha * (particles @ h_row) + (1.0 - alpha) * (h_row @ mbar)
        particles = (particles + (particles @ A.T) * dt
                     + sq * (proc_noise[t] @ Q_sqrt.T)
                     + (mean_inc[t] - pred * dt)[:, None] * gain[None, :])
    mbar = particles.mean(axis=0)
    centered = particles - mbar
    cov = centered.T @ centered / (num_particles - 1)
    means[num_steps], covs[num_steps] = mbar, 0.5 * (cov + cov.T)
    return particles, means, covs


def wonham_chain(adjoint, obs_values, sigma_w, dt, p0, mean_inc, inc_var,
                 quad_var):
    """Collective filter on the simplex for a finite-state chain.

    Euler steps of the forward-generator flow plus the innovation and
    variance-mismatch corrections; negative entries are clipped and the
    vector renormalized.  Raises if clipping destroys most of the mass.
    Returns the belief trajectory (T+1, d).
    """
    num_steps = mean_inc.shape[0]
    sw2 = sigma_w * sigma_w
    probs = np.empty((num_steps + 1, p0.shape[0]))
    probs[0] = p0
    p = p0.copy()
    for t in range(num_steps):
        h_mean = p @ obs_values
        spread = obs_values - h_mean
        g = 0.5 * spread * spread
        g_mean = p @ g
        innov = mean_inc[t] - h_mean * dt
        mismatch = (inc_var[t] + quad_var[t]) / sw2 - 1.0
        nxt = (p + (adjoint @ p) * dt
               + p * spread * (innov / sw2)
               + p * (g - g_mean) * (mismatch * dt / sw2))
        clipped = np.clip(nxt, 0.0, None)
        mass = clipped.sum()
        if not np.isfinite(mass) or mass < 0.5:
            raise FilterDivergenceError(
                f"belief mass is {mass:.3g} after clipping at step {t}; "
                "filter diverged", step=t)
        p = clipped / mass
        probs[t + 1] = p
    return probs


def finite_fpf_chain(jump_rates, obs_values, sigma_w, dt, states0, uniforms,
                     mean_inc, inc_var, quad_var):
    """Finite-state feedback particle filter over a stats stream.

    Per step: the particle histogram sets the gain vectors; the anchor
    constants follow the sign rule making both modulated increments
    nonnegative; base rates plus modulated increments give the per-target
    jump probabilities, sampled with one uniform per particle.  Returns
    the terminal states (N,) and the histogram trajectory (T+1, d).
    """
    num_steps, num_particles = uniforms.shape
    dim = jump_rates.shape[0]
    sw2 = sigma_w * sigma_w
    base = jump_rates.T * dt
    np.fill_diagonal(base, 0.0)
    states = states0.copy()
    hist = np.empty((num_steps + 1, dim))
    hist[0] = np.bincount(states, minlength=dim) / num_particles
    for t in range(num_steps):
        pi = hist[t]
        h_mean = pi @ obs_values
        spread = obs_values - h_mean
        g = 0.5 * spread * spread
        innov = mean_inc[t] - h_mean * dt
        mismatch = ((inc_var[t] + quad_var[t]) / sw2 - 1.0) * dt
        anchor = obs_values.min() if innov >= 0 else obs_values.max()
        anchor_var = g.min() if mismatch >= 0 else g.max()
        du = pi * (obs_values - anchor) * (innov / sw2)
        du_var = pi * (g - anchor_var) * (mismatch / sw2)
        if du.min() < 0 or du_var.min() < 0:
            raise FilterDivergenceError(
                f"modulated jump increment went negative at step {t}", step=t)
        prob = base + (du + du_var)[None, :]
        np.fill_diagonal(prob, 0.0)
        totals = prob.sum(axis=1)
        if totals.max() >= 1.0:
            raise StepSizeError(
                f"total per-particle jump probability {totals.max():.3g} >= 1 "
                f"at step {t}; decrease dt")
        cdf = np.cumsum(prob, axis=1)
        rows = cdf[states]
        target = (rows <= uniforms[t][:, None]).sum(axis=1)
        states = np.where(target < dim, np.minimum(target, dim - 1), states)
        hist[t + 1] = np.bincount(states, minlength=dim) / num_particles
    return states, hist
