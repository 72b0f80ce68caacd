"""Experiment driver: convergence studies comparing the per-agent Kalman
baseline, the collective Kalman filter, and the feedback particle filters.

Three sweeps are provided: agent count M (baseline mixture vs collective
filter), particle count N (collective filter vs particle filter), and a
finite-state particle-count sweep scored by total-variation distance
against the exact simplex filter.  The baseline consumes per-agent
observation paths; the collective filters only ever see the aggregate
statistics, so no agent identity crosses that interface.

Every run is deterministic given (config, master seed): randomness is
keyed by (experiment tag, sweep value, seed index) so rows are
independent of sweep order and of each other.  The wall-clock runtime
column is the one quantity reruns cannot reproduce byte-identically.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import warnings

import numpy as np

from . import __version__, _backend
from .aggregate import aggregate_increment_path
from .beliefs import SimplexBelief
from .errors import ConfigError, FilterDivergenceError
from .models import (FiniteStateModel, LinearGaussianModel,
                     simulate_ctmc_agents, simulate_lg_agents)

__all__ = [
    "ExperimentConfig", "ResultRow", "SeedRecord", "ExperimentOutput",
    "section5_model", "default_finite_model", "default_config",
    "gaussian_mixture_moments", "normalized_error", "loglog_slope",
    "run_change_m", "run_change_n", "run_finite_state",
    "run_change_m_detailed", "run_change_n_detailed",
    "run_finite_state_detailed", "write_records_csv", "write_manifest",
]

CSV_HEADER = ("sweep", "seed", "mean_err", "var_err", "runtime_s")

# spawn-key tags keeping every random stream in the suite distinct
_TAG_CHANGE_M = 1
_TAG_CHANGE_N_AGENTS = 2
_TAG_CHANGE_N_PARTICLES = 3
_TAG_FINITE_AGENTS = 4
_TAG_FINITE_PARTICLES = 5


def section5_model() -> LinearGaussianModel:
    """The benchmark two-dimensional oscillator with damping used by all
    linear-Gaussian experiment defaults."""
    return LinearGaussianModel(
        A=np.array([[0.0, 1.0], [-1.0, -0.5]]),
        H=np.array([[0.0, 1.0]]),
        Q=0.1 * np.eye(2),
        obs_noise_std=float(np.sqrt(0.7)),
        prior_mean=np.array([1.0, 0.0]),
        prior_cov=np.array([[1.0, 0.2], [0.2, 1.0]]),
    )


def default_finite_model() -> FiniteStateModel:
    """Ergodic three-state chain with spread observation levels."""
    return FiniteStateModel(
        jump_rates=np.array([[0.0, 0.6, 0.3],
                             [0.8, 0.0, 0.6],
                             [0.4, 0.5, 0.0]]),
        obs_values=np.array([0.0, 1.0, 2.0]),
        obs_noise_std=float(np.sqrt(0.7)),
        prior=SimplexBelief(np.array([0.5, 0.3, 0.2])),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    """Scenario parameters; the defaults reproduce the benchmark study."""

    model: LinearGaussianModel = field(default_factory=section5_model)
    finite_model: FiniteStateModel = field(default_factory=default_finite_model)
    dt: float = 0.01
    horizon: float = 5.0
    m_values: tuple[int, ...] = (1, 2, 5, 10, 20, 50, 100, 200)
    n_values: tuple[int, ...] = (30, 100, 300, 1000)
    fixed_m: int = 30
    finite_n_values: tuple[int, ...] = (100, 500, 1000, 5000)
    finite_horizon: float = 2.0
    num_seeds: int = 10
    seed: int = 0
    quad_var_ema: float | None = None
    output_path: str | None = None
    output_format: str = "csv"

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if not self.m_values or not self.n_values or not self.finite_n_values:
            raise ConfigError("sweep lists must be nonempty")
        if self.num_seeds < 1:
            raise ConfigError("num_seeds must be >= 1")
        if self.output_format not in ("csv", "json"):
            raise ConfigError(f"unknown output format {self.output_format!r}")


def default_config(**overrides) -> ExperimentConfig:
    return replace(ExperimentConfig(), **overrides) if overrides else ExperimentConfig()


@dataclass(frozen=True)
class SeedRecord:
    """One (sweep value, seed) run: the CSV row unit."""

    sweep: int
    seed: int
    mean_err: float
    var_err: float
    runtime_s: float


@dataclass(frozen=True)
class ResultRow:
    """Seed-aggregated summary for one sweep value."""

    sweep: int
    mean_err: float
    var_err: float
    mean_err_std: float
    var_err_std: float
    seed_count: int
    runtime_s: float

    def __post_init__(self):
        if self.mean_err < 0 or self.var_err < 0:
            raise ConfigError("errors cannot be negative")


@dataclass(frozen=True)
class ExperimentOutput:
    rows: list[ResultRow]
    records: list[SeedRecord]
    diagnostics: dict


def gaussian_mixture_moments(components) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of a uniform mixture of Gaussians:
    m = avg of means, Cov = avg of (Cov_j + (m_j - m)(m_j - m)')."""
    comps = list(components)
    if not comps:
        raise ConfigError("mixture needs at least one component")
    means = np.array([np.asarray(m, dtype=float) for m, _ in comps])
    mean = means.mean(axis=0)
    diffs = means - mean
    cov = sum(np.asarray(c, dtype=float) for _, c in comps) / len(comps)
    cov = cov + diffs.T @ diffs / len(comps)
    return mean, 0.5 * (cov + cov.T)


def normalized_error(estimate, reference) -> tuple[float, float]:
    """Relative l2 distance of the means and relative Frobenius distance
    of the covariances.  A zero-norm reference triggers a RuntimeWarning
    and falls back to the unnormalized distance."""
    m_e, c_e = (np.asarray(a, dtype=float) for a in estimate)
    m_r, c_r = (np.asarray(a, dtype=float) for a in reference)
    if m_e.shape != m_r.shape or c_e.shape != c_r.shape:
        raise ConfigError("estimate/reference shapes disagree")

    def _relative(diff_norm: float, ref_norm: float, label: str) -> float:
        if ref_norm == 0.0:
            warnings.warn(f"zero-norm reference {label}; reporting unnormalized error",
                          RuntimeWarning, stacklevel=3)
            return diff_norm
        return diff_norm / ref_norm

    mean_err = _relative(float(np.linalg.norm(m_e - m_r)),
                         float(np.linalg.norm(m_r)), "mean")
    var_err = _relative(float(np.linalg.norm(c_e - c_r)),
                        float(np.linalg.norm(c_r)), "covariance")
    return mean_err, var_err


def loglog_slope(x, y) -> float:
    """Least-squares slope of log(y) against log(x)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size or x.size < 2:
        raise ConfigError("slope needs at least two (x, y) pairs")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ConfigError("log-log slope needs positive data")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def _key(config: ExperimentConfig, tag: int, sweep: int, seed_idx: int,
         ) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=config.seed,
                                  spawn_key=(tag, sweep, seed_idx))


def _aggregate_rows(records: list[SeedRecord]) -> list[ResultRow]:
    rows = []
    for sweep in sorted({r.sweep for r in records}):
        errs = [(r.mean_err, r.var_err, r.runtime_s)
                for r in records if r.sweep == sweep]
        mean_e = np.array([e[0] for e in errs])
        var_e = np.array([e[1] for e in errs])
        rows.append(ResultRow(sweep=sweep,
                              mean_err=float(mean_e.mean()),
                              var_err=float(var_e.mean()),
                              mean_err_std=float(mean_e.std(ddof=0)),
                              var_err_std=float(var_e.std(ddof=0)),
                              seed_count=len(errs),
                              runtime_s=float(sum(e[2] for e in errs))))
    return rows


def _worker_count() -> int:
    raw = os.environ.get("COLLECTIVE_FPF_THREADS", "1")
    try:
        count = int(raw)
    except ValueError:
        raise ConfigError(f"COLLECTIVE_FPF_THREADS must be an integer, got {raw!r}")
    return max(1, count)


def _run_tasks(tasks, worker):
    """Run (sweep, seed) tasks, possibly threaded; results sorted by key
    so the output is independent of scheduling."""
    threads = _worker_count()
    if threads == 1:
        results = [worker(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(worker, tasks))
    return sorted(results, key=lambda r: (r.sweep, r.seed))


def _with_context(err: FilterDivergenceError, experiment: str, sweep: int,
                  seed: int) -> FilterDivergenceError:
    return FilterDivergenceError(
        f"{experiment}: sweep={sweep} seed={seed} step={err.step}: {err}",
        experiment=experiment, sweep_value=sweep, seed=seed, step=err.step)


def _change_m_record(config: ExperimentConfig, num_agents: int, seed_idx: int,
                     ) -> SeedRecord:
    model = config.model
    kern = _backend.active()
    start = time.perf_counter()
    ens = simulate_lg_agents(model, num_agents, config.dt, config.horizon,
                             _key(config, _TAG_CHANGE_M, num_agents, seed_idx))
    try:
        kf_means, kf_cov = kern.kalman_bucy_bank(
            model.A, model.obs_row(), model.Q, model.obs_noise_std, config.dt,
            model.prior_mean, model.prior_cov, ens.obs_increments)
        mix = gaussian_mixture_moments([(m, kf_cov) for m in kf_means])
        mean_inc, inc_var, _ = aggregate_increment_path(
            ens.obs_increments, config.dt, config.quad_var_ema)
        means, covs = kern.ckf_chain(
            model.A, model.obs_row(), model.Q, model.obs_noise_std, config.dt,
            model.prior_mean, model.prior_cov, mean_inc, inc_var)
    except FilterDivergenceError as err:
        raise _with_context(err, "change-m", num_agents, seed_idx) from err
    mean_err, var_err = normalized_error((means[-1], covs[-1]), mix)
    return SeedRecord(sweep=num_agents, seed=seed_idx, mean_err=mean_err,
                      var_err=var_err, runtime_s=time.perf_counter() - start)


def run_change_m_detailed(config: ExperimentConfig) -> ExperimentOutput:
    """Sweep the number of agents M: per seed, run M independent
    Kalman-Bucy filters with known association, pool them into mixture
    moments, and compare against the collective filter driven by the
    aggregate statistics of the same ensemble."""
    tasks = [(m, s) for m in config.m_values for s in range(config.num_seeds)]
    records = _run_tasks(tasks, lambda t: _change_m_record(config, *t))
    return ExperimentOutput(rows=_aggregate_rows(records), records=records,
                            diagnostics={"experiment": "change-m"})


def run_change_m(config: ExperimentConfig) -> list[ResultRow]:
    return run_change_m_detailed(config).rows


def _change_n_seed_data(config: ExperimentConfig, seed_idx: int):
    """Shared per-seed work for the change-N sweep: one agent ensemble,
    one aggregate stream, one collective-filter trajectory."""
    model = config.model
    kern = _backend.active()
    ens = simulate_lg_agents(model, config.fixed_m, config.dt, config.horizon,
                             _key(config, _TAG_CHANGE_N_AGENTS, 0, seed_idx))
    mean_inc, inc_var, _ = aggregate_increment_path(
        ens.obs_increments, config.dt, config.quad_var_ema)
    means, covs = kern.ckf_chain(
        model.A, model.obs_row(), model.Q, model.obs_noise_std, config.dt,
        model.prior_mean, model.prior_cov, mean_inc, inc_var)
    return mean_inc, inc_var, means[-1], covs[-1]


def _change_n_record(config: ExperimentConfig, num_particles: int,
                     seed_idx: int, shared) -> SeedRecord:
    model = config.model
    kern = _backend.active()
    mean_inc, inc_var, ckf_mean, ckf_cov = shared
    start = time.perf_counter()
    rng = np.random.default_rng(
        _key(config, _TAG_CHANGE_N_PARTICLES, num_particles, seed_idx))
    particles0 = (model.prior_mean
                  + rng.standard_normal((num_particles, model.dim))
                  @ model.prior_cov_sqrt.T)
    proc = rng.standard_normal((mean_inc.shape[0], num_particles, model.dim))
    try:
        _, means, covs = kern.lg_fpf_chain(
            model.A, model.process_noise_sqrt, model.obs_row(),
            model.obs_noise_std, config.dt, particles0, proc, mean_inc, inc_var)
    except FilterDivergenceError as err:
        raise _with_context(err, "change-n", num_particles, seed_idx) from err
    mean_err, var_err = normalized_error((means[-1], covs[-1]),
                                         (ckf_mean, ckf_cov))
    return SeedRecord(sweep=num_particles, seed=seed_idx, mean_err=mean_err,
                      var_err=var_err, runtime_s=time.perf_counter() - start)


def run_change_n_detailed(config: ExperimentConfig) -> ExperimentOutput:
    """Sweep the particle count N at fixed M: the particle filter and the
    collective filter consume one shared aggregate-statistics stream per
    seed; errors compare their terminal moments."""
    shared = {s: _change_n_seed_data(config, s) for s in range(config.num_seeds)}
    tasks = [(n, s) for n in config.n_values for s in range(config.num_seeds)]
    records = _run_tasks(
        tasks, lambda t: _change_n_record(config, t[0], t[1], shared[t[1]]))
    diags = {"experiment": "change-n", "fixed_m": config.fixed_m}
    rows = _aggregate_rows(records)
    if len(config.n_values) >= 2:
        diags["loglog_slope_mean_err"] = loglog_slope(
            [r.sweep for r in rows], [max(r.mean_err, 1e-300) for r in rows])
    return ExperimentOutput(rows=rows, records=records, diagnostics=diags)


def run_change_n(config: ExperimentConfig) -> list[ResultRow]:
    return run_change_n_detailed(config).rows


def _finite_seed_data(config: ExperimentConfig, seed_idx: int):
    model = config.finite_model
    kern = _backend.active()
    ens = simulate_ctmc_agents(model, config.fixed_m, config.dt,
                               config.finite_horizon,
                               _key(config, _TAG_FINITE_AGENTS, 0, seed_idx))
    mean_inc, inc_var, quad_var = aggregate_increment_path(
        ens.obs_increments, config.dt, config.quad_var_ema)
    probs = kern.wonham_chain(model.rate_adjoint(), model.obs_values,
                              model.obs_noise_std, config.dt,
                              model.prior.probs, mean_inc, inc_var, quad_var)
    return mean_inc, inc_var, quad_var, probs[-1]


def _obs_moments(probs: np.ndarray, obs_values: np.ndarray) -> tuple[float, float]:
    mean = float(probs @ obs_values)
    return mean, float(probs @ (obs_values - mean) ** 2)


def _finite_record(config: ExperimentConfig, num_particles: int, seed_idx: int,
                   shared) -> SeedRecord:
    model = config.finite_model
    kern = _backend.active()
    mean_inc, inc_var, quad_var, ref_probs = shared
    start = time.perf_counter()
    rng = np.random.default_rng(
        _key(config, _TAG_FINITE_PARTICLES, num_particles, seed_idx))
    cdf = np.cumsum(model.prior.probs)
    states0 = np.minimum(np.searchsorted(cdf, rng.random(num_particles),
                                         side="right"),
                         model.num_states - 1).astype(np.int64)
    uniforms = rng.random((mean_inc.shape[0], num_particles))
    try:
        _, hist = kern.finite_fpf_chain(
            model.jump_rates, model.obs_values, model.obs_noise_std, config.dt,
            states0, uniforms, mean_inc, inc_var, quad_var)
    except FilterDivergenceError as err:
        raise _with_context(err, "finite", num_particles, seed_idx) from err
    tv = 0.5 * float(np.abs(hist[-1] - ref_probs).sum())
    _, var_f = _obs_moments(hist[-1], model.obs_values)
    _, var_r = _obs_moments(ref_probs, model.obs_values)
    var_err = abs(var_f - var_r) / var_r if var_r > 0 else abs(var_f - var_r)
    return SeedRecord(sweep=num_particles, seed=seed_idx, mean_err=tv,
                      var_err=var_err, runtime_s=time.perf_counter() - start)


def run_finite_state_detailed(config: ExperimentConfig) -> ExperimentOutput:
    """Finite-state particle sweep: the exact simplex filter is the
    reference trajectory; the particle histogram is scored by terminal
    total-variation distance (mean_err column) and by the relative error
    of the posterior observation variance (var_err column)."""
    shared = {s: _finite_seed_data(config, s) for s in range(config.num_seeds)}
    tasks = [(n, s) for n in config.finite_n_values
             for s in range(config.num_seeds)]
    records = _run_tasks(
        tasks, lambda t: _finite_record(config, t[0], t[1], shared[t[1]]))
    return ExperimentOutput(rows=_aggregate_rows(records), records=records,
                            diagnostics={"experiment": "finite",
                                         "fixed_m": config.fixed_m})


def run_finite_state(config: ExperimentConfig) -> list[ResultRow]:
    return run_finite_state_detailed(config).rows


def write_records_csv(path, records: list[SeedRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow([r.sweep, r.seed, repr(r.mean_err), repr(r.var_err),
                             f"{r.runtime_s:.6f}"])


def _config_dict(config: ExperimentConfig) -> dict:
    def clean(value):
        if isinstance(value, np.ndarray):
            return value.tolist()
        if isinstance(value, SimplexBelief):
            return value.probs.tolist()
        if isinstance(value, (LinearGaussianModel, FiniteStateModel)):
            return {k: clean(getattr(value, k)) for k in value.__dataclass_fields__}
        if isinstance(value, tuple):
            return list(value)
        return value

    return {k: clean(getattr(config, k)) for k in config.__dataclass_fields__}


def write_manifest(path, config: ExperimentConfig, output: ExperimentOutput,
                   ) -> None:
    """JSON run manifest: full configuration, code version, backend, the
    error-metric definitions, and the (empty on success) blow-up log."""
    manifest = {
        "version": __version__,
        "backend": _backend.active_name(),
        "seed": config.seed,
        "config": _config_dict(config),
        "diagnostics": output.diagnostics,
        "error_metric": {
            "mean_err": "||m_est - m_ref||_2 / ||m_ref||_2 at terminal time "
                        "(finite experiment: total-variation distance)",
            "var_err": "||S_est - S_ref||_F / ||S_ref||_F at terminal time "
                       "(finite experiment: relative posterior-variance error)",
        },
        "blowup_log": [],
        "rows": [{"sweep": r.sweep, "mean_err": r.mean_err, "var_err": r.var_err,
                  "mean_err_std": r.mean_err_std, "var_err_std": r.var_err_std,
                  "seed_count": r.seed_count} for r in output.rows],
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
