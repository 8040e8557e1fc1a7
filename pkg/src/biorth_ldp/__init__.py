"""Biorthogonal ensembles: large-deviation rate functionals, equilibrium measures and samplers."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:
    __version__ = "0.1.0"

from .ensemble_model import (AngelescoSpec, EnsembleSpec, GaussPower, JacobiPower, LogSquare,
                             PowerExp, TablePotential, bosonic_spec, gue_type_spec)
from .errors import (AccuracyError, ConfigError, ContractError, ConvergenceError, DomainError,
                     NumericalError, PrecisionError)

__all__ = [
    "AngelescoSpec", "EnsembleSpec", "GaussPower", "JacobiPower", "LogSquare", "PowerExp",
    "TablePotential", "bosonic_spec", "gue_type_spec", "AccuracyError", "ConfigError",
    "ContractError", "ConvergenceError", "DomainError", "NumericalError", "PrecisionError",
    "__version__",
]
