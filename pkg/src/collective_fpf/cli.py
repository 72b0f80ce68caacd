"""Command-line entry point.

Subcommands: simulate, filter-hmm, experiment-change-m,
experiment-change-n, experiment-finite, oracle-check.  Exit codes: 0 on
success, 1 on configuration errors (with a field diagnostic), 2 on
numerical divergence (with experiment/sweep/seed/step context).
Partially written output files are removed on failure.

Environment: COLLECTIVE_FPF_THREADS caps experiment parallelism;
COLLECTIVE_FPF_BACKEND pins the kernel backend.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .aggregate import EmpiricalSymbolDistribution
from .beliefs import SimplexBelief
from .collective_hmm import collective_update, filter_path, kl_oracle, predict
from .config import load_config
from .errors import ConfigError, FilterDivergenceError
from .harness import (ExperimentOutput, run_change_m_detailed,
                      run_change_n_detailed, run_finite_state_detailed,
                      write_manifest, write_records_csv)
from .models import HmmModel, simulate_lg_agents


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as ConfigError (exit 1)."""

    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="collective-fpf",
                     description="Collective filtering simulations and experiments")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, out_required=True):
        p.add_argument("--config", help="TOML config file (defaults reproduce "
                                        "the benchmark scenario)")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", required=out_required, help="output file path")
        p.add_argument("--format", choices=("csv", "json"),
                       help="output format (default csv)")

    common(sub.add_parser("simulate", help="simulate a linear-Gaussian agent "
                                           "ensemble and dump it to CSV"))
    sim = sub.choices["simulate"]
    sim.add_argument("--agents", type=int,
                     help="number of agents (default: fixed_m from the config)")

    hmm = sub.add_parser("filter-hmm", help="run the collective HMM filter on "
                                            "a JSON scenario")
    hmm.add_argument("--config", required=True,
                     help="JSON file with transition/emission/prior/q_sequence")
    hmm.add_argument("--out", required=True, help="output JSON path")

    for name in ("experiment-change-m", "experiment-change-n",
                 "experiment-finite"):
        common(sub.add_parser(name, help=f"run the {name.removeprefix('experiment-')} sweep"))

    oracle = sub.add_parser("oracle-check", help="compare the closed-form "
                            "collective update against the KL-projection "
                            "oracle on random instances")
    oracle.add_argument("--trials", type=int, default=200)
    oracle.add_argument("--seed", type=int, default=0)
    return parser


def _load(args) -> "ExperimentConfig":
    config = load_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "format", None):
        config = replace(config, output_format=args.format)
    return config


class _OutputFiles:
    """Tracks files created by a command so failures can clean them up."""

    def __init__(self):
        self.paths: list[str] = []

    def claim(self, path: str) -> str:
        self.paths.append(path)
        return path

    def remove_all(self):
        for path in self.paths:
            if os.path.exists(path):
                os.remove(path)


def _write_experiment(out_path: str, fmt: str, config, output: ExperimentOutput,
                      files: _OutputFiles) -> None:
    if fmt == "csv":
        write_records_csv(files.claim(out_path), output.records)
    else:
        payload = {"records": [{"sweep": r.sweep, "seed": r.seed,
                                "mean_err": r.mean_err, "var_err": r.var_err,
                                "runtime_s": round(r.runtime_s, 6)}
                               for r in output.records]}
        with open(files.claim(out_path), "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    write_manifest(files.claim(out_path + ".manifest.json"), config, output)


def _cmd_simulate(args, files: _OutputFiles) -> int:
    config = _load(args)
    agents = args.agents if args.agents is not None else config.fixed_m
    ens = simulate_lg_agents(config.model, agents, config.dt, config.horizon,
                             np.random.SeedSequence(entropy=config.seed,
                                                    spawn_key=(0,)))
    ens.to_csv(files.claim(args.out))
    print(f"wrote {agents} agent paths ({ens.num_steps} steps) to {args.out}")
    return 0


def _cmd_filter_hmm(args, files: _OutputFiles) -> int:
    from .collective_hmm import load_hmm_scenario
    try:
        with open(args.config) as fh:
            payload = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {args.config}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"malformed JSON in {args.config}: {err}") from err
    model, qs = load_hmm_scenario(payload)
    posteriors = filter_path(model, qs)
    with open(files.claim(args.out), "w") as fh:
        json.dump({"posteriors": [b.probs.tolist() for b in posteriors]},
                  fh, indent=2)
        fh.write("\n")
    print(f"filtered {len(qs)} steps; wrote posteriors to {args.out}")
    return 0


def _run_experiment(args, runner, files: _OutputFiles) -> int:
    config = _load(args)
    output = runner(config)
    _write_experiment(args.out, config.output_format, config, output, files)
    print(f"wrote {len(output.records)} records to {args.out} "
          f"(+ manifest {args.out}.manifest.json)")
    return 0


def _cmd_oracle_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(args.trials):
        d = int(rng.integers(2, 6))
        m = int(rng.integers(2, 6))
        transition = rng.random((d, d)) + 0.05
        transition /= transition.sum(axis=0)
        emission = rng.random((m, d)) + 0.05
        emission /= emission.sum(axis=0)
        prior = rng.random(d) + 0.05
        model = HmmModel(transition, emission, SimplexBelief(prior / prior.sum()))
        counts = rng.multinomial(int(rng.integers(1, 60)), np.full(m, 1.0 / m))
        q = EmpiricalSymbolDistribution(counts / counts.sum(), counts.sum())
        predicted = predict(model.prior, model)
        direct = collective_update(predicted, model, q)
        via_oracle = kl_oracle(predicted, model, q).state_marginal()
        worst = max(worst, float(np.max(np.abs(direct.probs - via_oracle))))
    print(f"max |closed-form - oracle marginal| over {args.trials} trials: "
          f"{worst:.3e}")
    return 0 if worst < 1e-6 else 1


def main(argv=None) -> int:
    parser = _build_parser()
    files = _OutputFiles()
    try:
        args = parser.parse_args(argv)
        if args.command == "simulate":
            return _cmd_simulate(args, files)
        if args.command == "filter-hmm":
            return _cmd_filter_hmm(args, files)
        if args.command == "experiment-change-m":
            return _run_experiment(args, run_change_m_detailed, files)
        if args.command == "experiment-change-n":
            return _run_experiment(args, run_change_n_detailed, files)
        if args.command == "experiment-finite":
            return _run_experiment(args, run_finite_state_detailed, files)
        if args.command == "oracle-check":
            return _cmd_oracle_check(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as err:
        files.remove_all()
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except FilterDivergenceError as err:
        files.remove_all()
        ctx = err.context()
        print(f"numerical divergence: {err} (context: {ctx})", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
