"""Discrete-time collective filtering on finite state/observation spaces.

The update step replaces the classical single-observation Bayes rule by
a mixture over the empirical symbol distribution: each observed symbol's
posterior is weighted by its empirical frequency.  A brute-force
KL-projection oracle solves the same one-step problem as a constrained
minimization over joint distributions and is used to validate the
closed-form update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .aggregate import EmpiricalSymbolDistribution
from .beliefs import SimplexBelief
from .errors import CollectiveFilterError, ConfigError, ImpossibleObservationError
from .models import HmmModel

__all__ = [
    "SimplexBelief", "JointDistribution", "predict", "collective_update",
    "kl_oracle", "filter_path", "load_hmm_scenario",
]

_FEASIBILITY_TOL = 1e-14


@dataclass(frozen=True)
class JointDistribution:
    """Joint distribution over (state, symbol) pairs, shape (d, m)."""

    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        if t.ndim != 2:
            raise ConfigError("joint table must be 2-d")
        if t.min() < 0 or abs(t.sum() - 1.0) > 1e-9:
            raise ConfigError("joint table entries must be >= 0 and sum to 1")
        object.__setattr__(self, "table", t)

    def state_marginal(self) -> np.ndarray:
        return self.table.sum(axis=1)

    def symbol_marginal(self) -> np.ndarray:
        return self.table.sum(axis=0)

    def kl_divergence_from(self, nominal: np.ndarray) -> float:
        """D(self || nominal), with 0 log 0 = 0; +inf when self puts mass
        where nominal has none."""
        p = self.table.ravel()
        q = np.asarray(nominal, dtype=float).ravel()
        pos = p > 0
        if np.any(q[pos] <= 0):
            return float("inf")
        return float(np.sum(p[pos] * np.log(p[pos] / q[pos])))


def predict(belief: SimplexBelief, model: HmmModel) -> SimplexBelief:
    """One transition step: pi'(x) = sum_x' p(x | x') pi(x')."""
    out = model.transition @ belief.probs
    return SimplexBelief(out / out.sum())


def _check_feasible(q: np.ndarray, likelihood: np.ndarray) -> None:
    bad = (q > 0) & (likelihood < _FEASIBILITY_TOL)
    if np.any(bad):
        raise ImpossibleObservationError(
            f"symbols {np.flatnonzero(bad).tolist()} observed with positive "
            "frequency but zero predicted likelihood; model and data disagree")


def collective_update(prior: SimplexBelief, model: HmmModel,
                      q: EmpiricalSymbolDistribution) -> SimplexBelief:
    """Measurement step against an empirical symbol distribution.

    pi+(x) = sum_z [o(z|x) pi(x) / xi(z)] q(z) with xi(z) = sum_x o(z|x) pi(x).
    Symbols with q(z) = 0 contribute nothing and are skipped, so a zero
    predicted likelihood there is harmless.  A Dirac q recovers the
    classical Bayes update.
    """
    if q.alphabet_size != model.alphabet_size:
        raise ConfigError("symbol distribution size does not match the model alphabet")
    pi = prior.probs
    xi = model.emission @ pi
    _check_feasible(q.probs, xi)
    seen = q.probs > 0
    weights = np.zeros_like(q.probs)
    weights[seen] = q.probs[seen] / xi[seen]
    post = pi * (model.emission.T @ weights)
    return SimplexBelief(post / post.sum())


def _column_scaling_minimizer(nominal: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Closed-form solution: scale each symbol column of the nominal joint
    to the required marginal."""
    col = nominal.sum(axis=0)
    out = np.zeros_like(nominal)
    seen = q > 0
    out[:, seen] = nominal[:, seen] * (q[seen] / col[seen])
    return out


def _iterative_minimizer(nominal: np.ndarray, q: np.ndarray, tol: float = 1e-10,
                         max_iter: int = 10_000) -> np.ndarray:
    """Damped multiplicative dual ascent on the symbol-marginal constraint.

    Deliberately takes half steps in the dual variable so convergence is
    genuinely iterative; serves as an independent computational path for
    cross-checking the closed form.
    """
    table = nominal.copy()
    seen = q > 0
    table[:, ~seen] = 0.0
    for _ in range(max_iter):
        col = table.sum(axis=0)
        residual = np.max(np.abs(col - q))
        if residual <= tol:
            return table
        factor = np.ones_like(q)
        factor[seen] = np.exp(0.5 * (np.log(q[seen]) - np.log(col[seen])))
        table = table * factor
    raise CollectiveFilterError(
        f"iterative KL minimizer failed to reach tol {tol} "
        f"(last residual {residual:.3e})")


def kl_oracle(prior: SimplexBelief, model: HmmModel,
              q: EmpiricalSymbolDistribution) -> JointDistribution:
    """Minimize D(P~ || P) over joints whose symbol marginal equals q,
    where P(x, z) = prior(x) o(z|x).

    Solved twice: by damped iterative multiplicative updates (run to
    1e-10 marginal residual) and by closed-form column scaling; the two
    must agree or the call fails.  The iterative minimizer is returned
    so downstream comparisons against the closed-form filter remain a
    two-implementation check.
    """
    pi = prior.probs
    nominal = pi[:, None] * model.emission.T     # (d, m)
    _check_feasible(q.probs, nominal.sum(axis=0))
    iterative = _iterative_minimizer(nominal, q.probs)
    closed = _column_scaling_minimizer(nominal, q.probs)
    gap = np.max(np.abs(iterative - closed))
    if gap > 1e-8:
        raise CollectiveFilterError(
            f"KL minimizer cross-check failed: paths disagree by {gap:.3e}")
    return JointDistribution(iterative)


def filter_path(model: HmmModel,
                q_sequence: list[EmpiricalSymbolDistribution],
                ) -> list[SimplexBelief]:
    """Run the predict/update recursion from the model prior through a
    sequence of empirical symbol distributions; returns the posterior at
    each step."""
    if not q_sequence:
        raise ConfigError("q_sequence must be nonempty")
    belief = model.prior
    posteriors = []
    for step, q in enumerate(q_sequence):
        try:
            belief = collective_update(predict(belief, model), model, q)
        except CollectiveFilterError as err:
            raise type(err)(f"step {step}: {err}") from err
        posteriors.append(belief)
    return posteriors


def load_hmm_scenario(payload: dict) -> tuple[HmmModel, list[EmpiricalSymbolDistribution]]:
    """Build a model and q-sequence from a JSON-style dict.

    Matrix orientation: ``transition[x][x']`` is P(next = x | current = x')
    and ``emission[z][x]`` is P(symbol = z | state = x), i.e. nested
    row-major arrays whose columns sum to one.  ``q_sequence`` holds one
    probability vector per step and ``num_observations`` the pool size M
    (defaults to 1, which admits only Dirac rows).
    """
    try:
        model = HmmModel(transition=np.asarray(payload["transition"], dtype=float),
                         emission=np.asarray(payload["emission"], dtype=float),
                         prior=SimplexBelief(np.asarray(payload["prior"], dtype=float)))
        num_obs = int(payload.get("num_observations", 1))
        qs = [EmpiricalSymbolDistribution(np.asarray(row, dtype=float), num_obs)
              for row in payload["q_sequence"]]
    except KeyError as missing:
        raise ConfigError(f"HMM scenario is missing field {missing}") from None
    return model, qs
