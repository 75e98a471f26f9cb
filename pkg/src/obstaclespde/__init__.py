"""
Simulation and property checks for the obstacle problem of degenerate
nonlinear stochastic diffusion on the torus.
"""

from .errors import ConfigurationError, IntegrationError, OracleInvalidError
from .grid import Field, TorusGrid, VectorField
from .model import ModelSpec, NoiseMode, NoiseModel, PowerNonlinearity, validate_assumptions
from .sde_driver import NoisePathSpec, wiener_increments
from .solver import SolverConfig, Trajectory, compensation_measure, solve, solve_ensemble, step

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "Field",
    "IntegrationError",
    "ModelSpec",
    "NoiseMode",
    "NoiseModel",
    "NoisePathSpec",
    "OracleInvalidError",
    "PowerNonlinearity",
    "SolverConfig",
    "TorusGrid",
    "Trajectory",
    "VectorField",
    "compensation_measure",
    "solve",
    "solve_ensemble",
    "step",
    "validate_assumptions",
    "wiener_increments",
]
