"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration problems exit 1,
numerical divergence exits 2.
"""

from __future__ import annotations


class CollectiveFilterError(Exception):
    """Base class for all package errors."""


class ConfigError(CollectiveFilterError):
    """Invalid model/experiment configuration or malformed input file."""


class StepSizeError(ConfigError):
    """The time step is too large for the requested dynamics (per-step
    jump or exit probabilities would reach 1)."""


class ImpossibleObservationError(CollectiveFilterError):
    """An observed symbol has positive empirical mass but zero predicted
    likelihood; signals model/data mismatch rather than a numeric issue."""


class FilterDivergenceError(CollectiveFilterError):
    """A filter recursion left its valid state set (covariance lost
    positive semidefiniteness, or a probability vector lost most of its
    mass to clipping).

    Carries optional provenance so experiment drivers can report where
    the divergence happened.
    """

    def __init__(self, message: str, *, experiment: str | None = None,
                 sweep_value: float | None = None, seed: int | None = None,
                 step: int | None = None):
        super().__init__(message)
        self.experiment = experiment
        self.sweep_value = sweep_value
        self.seed = seed
        self.step = step

    def context(self) -> dict:
        return {
            "experiment": self.experiment,
            "sweep_value": self.sweep_value,
            "seed": self.seed,
            "step": self.step,
        }
