"""Generative models and ground-truth ensemble simulation.

Three model families are supported: continuous-time linear-Gaussian
diffusions, continuous-time finite-state Markov jump processes, and
discrete-time hidden Markov models.  Simulators produce an
:class:`AgentEnsemble` of M mutually independent state/observation
paths on a shared time grid.

Reproducibility: agent ``j`` draws from
``SeedSequence(seed, spawn_key=(..., j))``, so growing M appends new
agents without reshuffling the streams of existing ones.  Within an
agent's stream the draw order is fixed per simulator (documented on
each function).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _backend
from .beliefs import SimplexBelief
from .errors import ConfigError, StepSizeError

_PSD_VALIDATION_TOL = 1e-10


def psd_sqrt(matrix: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Rejects matrices with eigenvalues below -1e-10 (relative); clips the
    roundoff-negative remainder to zero.
    """
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    if np.max(np.abs(m - m.T)) > 1e-10 * max(1.0, np.max(np.abs(m))):
        raise ConfigError(f"{name} must be symmetric")
    w, u = np.linalg.eigh(m)
    scale = max(1.0, float(w.max(initial=0.0)))
    if w.min() < -_PSD_VALIDATION_TOL * scale:
        raise ConfigError(f"{name} is not positive semidefinite (min eig {w.min():.3e})")
    return (u * np.sqrt(np.clip(w, 0.0, None))) @ u.T


def _as_obs_matrix(H, dim: int) -> np.ndarray:
    h = np.asarray(H, dtype=float)
    if h.ndim == 1:
        h = h[None, :]
    if h.ndim != 2 or h.shape[1] != dim:
        raise ConfigError(f"observation matrix shape {h.shape} incompatible with state dim {dim}")
    return h


@dataclass(frozen=True)
class LinearGaussianModel:
    """dX = A X dt + Q^{1/2} dB with observations dZ = H X dt + sigma_w dW.

    ``H`` may be (m, d) for the discrete-time vector-observation
    recursion; the continuous-time simulators and filters require a
    single observation row.
    """

    A: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    obs_noise_std: float
    prior_mean: np.ndarray
    prior_cov: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.A, dtype=float))
        d = a.shape[0]
        if a.shape != (d, d):
            raise ConfigError(f"drift matrix must be square, got {a.shape}")
        h = _as_obs_matrix(self.H, d)
        q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        m0 = np.atleast_1d(np.asarray(self.prior_mean, dtype=float))
        s0 = np.atleast_2d(np.asarray(self.prior_cov, dtype=float))
        if q.shape != (d, d) or m0.shape != (d,) or s0.shape != (d, d):
            raise ConfigError("model matrix dimensions are inconsistent")
        if self.obs_noise_std <= 0:
            raise ConfigError("obs_noise_std must be > 0")
        psd_sqrt(q, "process noise covariance")  # validates PSD
        psd_sqrt(s0, "prior covariance")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "H", h)
        object.__setattr__(self, "Q", q)
        object.__setattr__(self, "prior_mean", m0)
        object.__setattr__(self, "prior_cov", s0)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def obs_dim(self) -> int:
        return self.H.shape[0]

    @cached_property
    def process_noise_sqrt(self) -> np.ndarray:
        return psd_sqrt(self.Q, "process noise covariance")

    @cached_property
    def prior_cov_sqrt(self) -> np.ndarray:
        return psd_sqrt(self.prior_cov, "prior covariance")

    def obs_row(self) -> np.ndarray:
        if self.obs_dim != 1:
            raise ConfigError("continuous-time operation requires a scalar observation row")
        return self.H[0]


@dataclass(frozen=True)
class FiniteStateModel:
    """Continuous-time Markov chain on d states observed through a scalar
    diffusion: dZ = h(X) dt + sigma_w dW.

    ``jump_rates[x, y]`` is the rate of jumping to state x from state y;
    the diagonal is ignored and stored as zero.
    """

    jump_rates: np.ndarray
    obs_values: np.ndarray
    obs_noise_std: float
    prior: SimplexBelief

    def __post_init__(self):
        r = np.atleast_2d(np.asarray(self.jump_rates, dtype=float))
        d = r.shape[0]
        if r.shape != (d, d):
            raise ConfigError(f"jump_rates must be square, got {r.shape}")
        off = r[~np.eye(d, dtype=bool)]
        if off.size and off.min() < 0:
            raise ConfigError("off-diagonal jump rates must be nonnegative")
        h = np.atleast_1d(np.asarray(self.obs_values, dtype=float))
        if h.shape != (d,):
            raise ConfigError("obs_values must have one entry per state")
        if self.obs_noise_std <= 0:
            raise ConfigError("obs_noise_std must be > 0")
        if self.prior.num_states != d:
            raise ConfigError("prior size does not match number of states")
        r = r.copy()
        np.fill_diagonal(r, 0.0)
        object.__setattr__(self, "jump_rates", r)
        object.__setattr__(self, "obs_values", h)

    @property
    def num_states(self) -> int:
        return self.jump_rates.shape[0]

    def exit_rates(self) -> np.ndarray:
        """Total exit rate per state (column sums of the rate matrix)."""
        return self.jump_rates.sum(axis=0)

    def rate_adjoint(self) -> np.ndarray:
        """Generator adjoint L with L[x, y] = rate(y -> x) off the diagonal;
        columns sum to zero, so d(pi)/dt = L pi conserves mass."""
        adj = self.jump_rates.copy()
        adj[np.diag_indices_from(adj)] = -self.exit_rates()
        return adj


@dataclass(frozen=True)
class HmmModel:
    """Discrete-time finite HMM.

    ``transition[x, xp]`` is P(next = x | current = xp) and
    ``emission[z, x]`` is P(symbol = z | state = x); both are
    column-stochastic.
    """

    transition: np.ndarray
    emission: np.ndarray
    prior: SimplexBelief

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.transition, dtype=float))
        o = np.atleast_2d(np.asarray(self.emission, dtype=float))
        d = p.shape[0]
        if p.shape != (d, d):
            raise ConfigError(f"transition must be square, got {p.shape}")
        if o.shape[1] != d:
            raise ConfigError("emission must have one column per state")
        for name, mat in (("transition", p), ("emission", o)):
            if mat.min() < 0 or mat.max() > 1.0 + 1e-12:
                raise ConfigError(f"{name} entries must lie in [0, 1]")
            col_sums = mat.sum(axis=0)
            if np.max(np.abs(col_sums - 1.0)) > 1e-12:
                raise ConfigError(f"{name} columns must sum to 1 within 1e-12")
        if self.prior.num_states != d:
            raise ConfigError("prior size does not match number of states")
        object.__setattr__(self, "transition", p)
        object.__setattr__(self, "emission", o)

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def alphabet_size(self) -> int:
        return self.emission.shape[0]


@dataclass(frozen=True)
class AgentEnsemble:
    """M independent agent trajectories on a shared time grid.

    ``states`` is (num_steps+1, M, d) for Euclidean models or
    (num_steps+1, M) integer-coded for finite-state/HMM models.
    Continuous-time observations are stored as per-step increments in
    ``obs_increments`` (num_steps, M); cumulative paths are reconstructed
    on demand.  Discrete HMM observations live in ``symbols``.
    """

    times: np.ndarray
    states: np.ndarray
    obs_increments: np.ndarray | None = None
    symbols: np.ndarray | None = None

    def __post_init__(self):
        if self.num_agents < 1:
            raise ConfigError("ensemble needs at least one agent")
        if (self.obs_increments is None) == (self.symbols is None):
            raise ConfigError("exactly one of obs_increments/symbols must be set")
        obs = self.obs_increments if self.obs_increments is not None else self.symbols
        if obs.shape[:2] != (self.num_steps, self.num_agents):
            raise ConfigError("observation array misaligned with the time grid")

    @property
    def num_agents(self) -> int:
        return self.states.shape[1]

    @property
    def num_steps(self) -> int:
        return self.times.size - 1

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def cumulative_observations(self) -> np.ndarray:
        """Cumulative observation paths Z with Z[0] = 0, shape (num_steps+1, M)."""
        if self.obs_increments is None:
            raise ConfigError("discrete-symbol ensembles have no cumulative path")
        z = np.zeros((self.num_steps + 1, self.num_agents))
        np.cumsum(self.obs_increments, axis=0, out=z[1:])
        return z

    def to_csv(self, path) -> None:
        """Columnar dump: one row per (time, agent); state components then
        the step's observation (increment or symbol, empty on the last row)."""
        euclidean = self.states.ndim == 3
        dim = self.states.shape[2] if euclidean else 1
        obs_name = "dZ" if self.obs_increments is not None else "symbol"
        obs = self.obs_increments if self.obs_increments is not None else self.symbols
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time", "agent_id"]
                            + [f"x{k}" for k in range(dim)] + [obs_name])
            for t, time in enumerate(self.times):
                for j in range(self.num_agents):
                    state = self.states[t, j].tolist() if euclidean else [int(self.states[t, j])]
                    tail = [repr(float(obs[t, j])) if self.obs_increments is not None
                            else int(obs[t, j])] if t < self.num_steps else [""]
                    writer.writerow([repr(float(time)), j] + state + tail)


def agent_seed_sequences(seed, count: int) -> list[np.random.SeedSequence]:
    """Independent per-agent seed sequences derived by appending the agent
    index to the spawn key; stable under growing ``count``."""
    if isinstance(seed, np.random.SeedSequence):
        entropy, base_key = seed.entropy, tuple(seed.spawn_key)
    else:
        entropy, base_key = seed, ()
    return [np.random.SeedSequence(entropy=entropy, spawn_key=base_key + (j,))
            for j in range(count)]


def _check_grid(dt: float, horizon: float, num_agents: int) -> int:
    if dt <= 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    if horizon < dt:
        raise ConfigError("horizon must cover at least one step")
    if num_agents < 1:
        raise ConfigError("need at least one agent")
    return int(round(horizon / dt))


def simulate_lg_agents(model: LinearGaussianModel, num_agents: int, dt: float,
                       horizon: float, seed) -> AgentEnsemble:
    """Euler-Maruyama simulation of M independent linear-Gaussian agents.

    Per-agent draw order: initial-condition normals (d), process normals
    (num_steps, d), observation normals (num_steps).  Observation
    increments use the state at the start of each step:
    dZ[t] = H x[t] dt + sigma_w sqrt(dt) xi.
    """
    h_row = model.obs_row()
    n = _check_grid(dt, horizon, num_agents)
    d = model.dim
    x0 = np.empty((num_agents, d))
    proc = np.empty((n, num_agents, d))
    obs = np.empty((n, num_agents))
    for j, ss in enumerate(agent_seed_sequences(seed, num_agents)):
        rng = np.random.default_rng(ss)
        x0[j] = model.prior_mean + model.prior_cov_sqrt @ rng.standard_normal(d)
        proc[:, j, :] = rng.standard_normal((n, d))
        obs[:, j] = rng.standard_normal(n)
    states, dz = _backend.active().lg_paths(
        model.A, model.process_noise_sqrt, h_row, model.obs_noise_std, dt,
        x0, proc, obs)
    return AgentEnsemble(times=dt * np.arange(n + 1), states=states,
                         obs_increments=dz)


def simulate_ctmc_agents(model: FiniteStateModel, num_agents: int, dt: float,
                         horizon: float, seed) -> AgentEnsemble:
    """Bernoulli-thinned simulation of M independent finite-state agents
    on a fixed grid: from state y, each step jumps to x with probability
    rate(y -> x) * dt.

    Per-agent draw order: one initial uniform, jump uniforms (num_steps),
    observation normals (num_steps).
    """
    n = _check_grid(dt, horizon, num_agents)
    max_exit = float(model.exit_rates().max())
    if max_exit * dt >= 1.0:
        raise StepSizeError(
            f"exit rate {max_exit:.3g} * dt {dt:.3g} >= 1; decrease dt")
    prior_cdf = np.cumsum(model.prior.probs)
    init = np.empty(num_agents)
    jumps = np.empty((n, num_agents))
    obs = np.empty((n, num_agents))
    for j, ss in enumerate(agent_seed_sequences(seed, num_agents)):
        rng = np.random.default_rng(ss)
        init[j] = rng.random()
        jumps[:, j] = rng.random(n)
        obs[:, j] = rng.standard_normal(n)
    states0 = np.searchsorted(prior_cdf, init, side="right").astype(np.int64)
    np.clip(states0, 0, model.num_states - 1, out=states0)
    states, dz = _backend.active().ctmc_paths(
        model.jump_rates, model.obs_values, model.obs_noise_std, dt,
        states0, jumps, obs)
    return AgentEnsemble(times=dt * np.arange(n + 1), states=states,
                         obs_increments=dz)


def simulate_hmm_agents(model: HmmModel, num_agents: int, num_steps: int,
                        seed) -> AgentEnsemble:
    """M independent HMM state/symbol sequences.

    Row 0 of ``states`` is the initial draw from the prior (no symbol is
    emitted for it); step k holds the state after the k-th transition and
    the symbol it emitted.  Per-agent draw order: one initial uniform,
    transition uniforms (num_steps), emission uniforms (num_steps).
    """
    if num_steps < 1:
        raise ConfigError("need at least one step")
    if num_agents < 1:
        raise ConfigError("need at least one agent")
    init = np.empty(num_agents)
    u_trans = np.empty((num_steps, num_agents))
    u_emit = np.empty((num_steps, num_agents))
    for j, ss in enumerate(agent_seed_sequences(seed, num_agents)):
        rng = np.random.default_rng(ss)
        init[j] = rng.random()
        u_trans[:, j] = rng.random(num_steps)
        u_emit[:, j] = rng.random(num_steps)
    d, m = model.num_states, model.alphabet_size
    trans_cdf = np.cumsum(model.transition, axis=0)
    emit_cdf = np.cumsum(model.emission, axis=0)
    states = np.empty((num_steps + 1, num_agents), dtype=np.int64)
    symbols = np.empty((num_steps, num_agents), dtype=np.int64)
    states[0] = np.minimum(
        np.searchsorted(np.cumsum(model.prior.probs), init, side="right"), d - 1)
    for t in range(num_steps):
        cdf_cols = trans_cdf[:, states[t]]            # (d, M)
        states[t + 1] = np.minimum((cdf_cols < u_trans[t]).sum(axis=0), d - 1)
        emit_cols = emit_cdf[:, states[t + 1]]        # (m, M)
        symbols[t] = np.minimum((emit_cols < u_emit[t]).sum(axis=0), m - 1)
    return AgentEnsemble(times=np.arange(num_steps + 1, dtype=float),
                         states=states, symbols=symbols)
