"""Generalized backward doubly stochastic differential equations driven by
Teugels martingales: simulation, Picard solver, hypothesis audits and the
explicit constants of the existence argument."""

__version__ = "0.1.0"

from .certificates import constant_M, mu_and_Mp, next_breakpoint, phi_sequence, schedule
from .coefficients import CoefficientSet, ModulusSpec
from .errors import ConfigurationError, GBDSDEError
from .levy_model import LevyModel, model_preset, moments_mu, moments_nu
from .paths import IncreasingProcessSpec, TimeGrid, simulate
from .presets import preset
from .solver import SolverConfig, solve
from .teugels import basis_for_model, orthonormalize

__all__ = [
    "CoefficientSet",
    "ConfigurationError",
    "GBDSDEError",
    "IncreasingProcessSpec",
    "LevyModel",
    "ModulusSpec",
    "SolverConfig",
    "TimeGrid",
    "basis_for_model",
    "constant_M",
    "model_preset",
    "moments_mu",
    "moments_nu",
    "mu_and_Mp",
    "next_breakpoint",
    "orthonormalize",
    "phi_sequence",
    "preset",
    "schedule",
    "simulate",
    "solve",
]
