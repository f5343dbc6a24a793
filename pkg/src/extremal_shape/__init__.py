"""Extremal functions of the zero-average Poincare-Sobolev quotient on balls, annuli and the interval."""

from .errors import (
    BracketError,
    ConstraintError,
    DegenerateInputError,
    ExtremalShapeError,
    GridMismatchError,
    InitError,
    NumericalFailureError,
    ParameterError,
    ResolutionError,
    SymmetryMismatchError,
    UnsupportedDimensionError,
)
from .fields import Field
from .geometry import Grid, HalfSpace, build_annulus_grid, build_ball_grid, build_interval_grid
from .solver import ProblemSpec, SolveResult, find_antisymmetry_break, minimize, minimize_multistart, sweep_p

__all__ = [
    "BracketError",
    "ConstraintError",
    "DegenerateInputError",
    "ExtremalShapeError",
    "Field",
    "Grid",
    "GridMismatchError",
    "HalfSpace",
    "InitError",
    "NumericalFailureError",
    "ParameterError",
    "ProblemSpec",
    "ResolutionError",
    "SolveResult",
    "SymmetryMismatchError",
    "UnsupportedDimensionError",
    "build_annulus_grid",
    "build_ball_grid",
    "build_interval_grid",
    "find_antisymmetry_break",
    "minimize",
    "minimize_multistart",
    "sweep_p",
]
