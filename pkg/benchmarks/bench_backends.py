#!/usr/bin/env python3
"""Benchmark the compiled kernel extension against the pure-numpy fallback.

Runs every chain kernel on a workload sized like the default experiment
sweeps, reports best-of-N wall times for both backends plus the largest
result deviation between them.

Usage:
    python benchmarks/bench_backends.py [--repeats 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from collective_fpf import _backend, _kernels_py
from collective_fpf.aggregate import aggregate_increment_path
from collective_fpf.harness import default_finite_model, section5_model


def best_of(fn, repeats: int) -> tuple[float, object]:
    best = float("inf")
    result = None
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - start)
    return best, result


def max_deviation(a, b) -> float:
    worst = 0.0
    for x, y in zip(a, b):
        worst = max(worst, float(np.max(np.abs(np.asarray(x, dtype=float)
                                               - np.asarray(y, dtype=float)))))
    return worst


def build_workloads():
    rng = np.random.default_rng(0)
    lg = section5_model()
    fin = default_finite_model()
    dt, steps = 0.01, 500
    agents, particles, fin_particles = 200, 1000, 5000

    x0 = lg.prior_mean + rng.standard_normal((agents, 2)) @ lg.prior_cov_sqrt.T
    proc_agents = rng.standard_normal((steps, agents, 2))
    obs_agents = rng.standard_normal((steps, agents))
    _, dz = _kernels_py.lg_paths(lg.A, lg.process_noise_sqrt, lg.obs_row(),
                                 lg.obs_noise_std, dt, x0, proc_agents,
                                 obs_agents)
    mean_inc, inc_var, quad_var = aggregate_increment_path(dz, dt)

    parts0 = lg.prior_mean + rng.standard_normal((particles, 2)) @ lg.prior_cov_sqrt.T
    proc_parts = rng.standard_normal((steps, particles, 2))

    fin_steps = 200
    fin_states0 = rng.integers(0, 3, agents).astype(np.int64)
    fin_jump_u = rng.random((fin_steps, agents))
    fin_obs = rng.standard_normal((fin_steps, agents))
    _, fin_dz = _kernels_py.ctmc_paths(fin.jump_rates, fin.obs_values,
                                       fin.obs_noise_std, dt, fin_states0,
                                       fin_jump_u, fin_obs)
    f_mean, f_var, f_quad = aggregate_increment_path(fin_dz, dt)
    fpf_states0 = rng.integers(0, 3, fin_particles).astype(np.int64)
    fpf_u = rng.random((fin_steps, fin_particles))

    lg_args = (lg.A, lg.process_noise_sqrt, lg.obs_row(), lg.obs_noise_std, dt)
    riccati_args = (lg.A, lg.obs_row(), lg.Q, lg.obs_noise_std, dt,
                    lg.prior_mean, lg.prior_cov)
    fin_args = (fin.jump_rates, fin.obs_values, fin.obs_noise_std, dt)

    return [
        (f"lg_paths            (M={agents}, T={steps})",
         lambda k: k.lg_paths(*lg_args, x0, proc_agents, obs_agents)),
        (f"kalman_bucy_bank    (M={agents}, T={steps})",
         lambda k: k.kalman_bucy_bank(*riccati_args, dz)),
        (f"ckf_chain           (T={steps})",
         lambda k: k.ckf_chain(*riccati_args, mean_inc, inc_var)),
        (f"lg_fpf_chain        (N={particles}, T={steps})",
         lambda k: k.lg_fpf_chain(*lg_args, parts0, proc_parts, mean_inc,
                                  inc_var)),
        (f"ctmc_paths          (M={agents}, T={fin_steps})",
         lambda k: k.ctmc_paths(*fin_args, fin_states0, fin_jump_u, fin_obs)),
        (f"wonham_chain        (d=3, T={fin_steps})",
         lambda k: k.wonham_chain(fin.rate_adjoint(), fin.obs_values,
                                  fin.obs_noise_std, dt, fin.prior.probs,
                                  f_mean, f_var, f_quad)),
        (f"finite_fpf_chain    (N={fin_particles}, T={fin_steps})",
         lambda k: k.finite_fpf_chain(*fin_args, fpf_states0, fpf_u, f_mean,
                                      f_var, f_quad)),
    ]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    backends = _backend.available()
    compiled = backends.get("compiled")
    if compiled is None:
        print("compiled extension not built; timing the python backend only")

    header = f"{'kernel':<42} {'python':>10}"
    if compiled is not None:
        header += f" {'compiled':>10} {'speedup':>8} {'max dev':>9}"
    print(header)
    print("-" * len(header))
    for name, runner in build_workloads():
        t_py, out_py = best_of(lambda: runner(_kernels_py), args.repeats)
        line = f"{name:<42} {t_py * 1e3:>8.2f}ms"
        if compiled is not None:
            t_c, out_c = best_of(lambda: runner(compiled), args.repeats)
            dev = max_deviation(out_py, out_c)
            line += f" {t_c * 1e3:>8.2f}ms {t_py / t_c:>7.1f}x {dev:>9.1e}"
        print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
