"""Collective filtering from aggregate, anonymized observations.

State estimation for M non-interacting agents whose measurements are
pooled without agent labels: closed-form collective Kalman filters,
collective updates for finite HMMs, feedback particle filters, and an
experiment harness with convergence sweeps.
"""

__version__ = "0.1.0"

from .aggregate import (AggregateStats, EmpiricalSymbolDistribution,
                        aggregate_increment, empirical_symbol_distribution)
from .beliefs import GaussianBelief, SimplexBelief
from .collective_hmm import collective_update, filter_path, kl_oracle, predict
from .collective_kalman import ckf_step, discrete_ckf_update, kalman_bucy_step
from .errors import (CollectiveFilterError, ConfigError, FilterDivergenceError,
                     ImpossibleObservationError, StepSizeError)
from .fpf import (EuclideanEnsemble, FiniteEnsemble, collective_wonham_step,
                  constant_gain_fpf_step, empirical_moments, finite_fpf_step,
                  lg_fpf_step)
from .models import (AgentEnsemble, FiniteStateModel, HmmModel,
                     LinearGaussianModel, simulate_ctmc_agents,
                     simulate_hmm_agents, simulate_lg_agents)

__all__ = [
    "__version__",
    "AggregateStats", "EmpiricalSymbolDistribution", "aggregate_increment",
    "empirical_symbol_distribution",
    "GaussianBelief", "SimplexBelief",
    "collective_update", "filter_path", "kl_oracle", "predict",
    "ckf_step", "discrete_ckf_update", "kalman_bucy_step",
    "CollectiveFilterError", "ConfigError", "FilterDivergenceError",
    "ImpossibleObservationError", "StepSizeError",
    "EuclideanEnsemble", "FiniteEnsemble", "collective_wonham_step",
    "constant_gain_fpf_step", "empirical_moments", "finite_fpf_step",
    "lg_fpf_step",
    "AgentEnsemble", "FiniteStateModel", "HmmModel", "LinearGaussianModel",
    "simulate_ctmc_agents", "simulate_hmm_agents", "simulate_lg_agents",
]
