"""Coefficients of the obstacle problem."""

from .coefficients import (
    INITIAL_CONDITIONS,
    NO_OBSTACLE_LEVEL,
    OBSTACLES,
    REACTIONS,
    make_initial_condition,
    make_obstacle,
    make_reaction,
)
from .noise import NoiseMode, NoiseModel
from .nonlinearity import (
    GenericNonlinearity,
    Nonlinearity,
    PowerNonlinearity,
    SmoothedNonlinearity,
)
from .spec import ModelSpec, negative_part, penalty, validate_assumptions
from ..quadrature import bracket

__all__ = [
    "INITIAL_CONDITIONS",
    "NO_OBSTACLE_LEVEL",
    "OBSTACLES",
    "REACTIONS",
    "GenericNonlinearity",
    "ModelSpec",
    "NoiseMode",
    "NoiseModel",
    "Nonlinearity",
    "PowerNonlinearity",
    "SmoothedNonlinearity",
    "bracket",
    "make_initial_condition",
    "make_obstacle",
    "make_reaction",
    "negative_part",
    "penalty",
    "validate_assumptions",
]
