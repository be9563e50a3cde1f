"""Numerical toolkit for quasilinear problems with generalized Orlicz growth."""

__version__ = "0.1.0"

from .errors import OrliczError
from .phi_core import PhiFunction
from .structures import ModelSpec, build_model
from .growth import build_growth_function
from .solver import GridFunction, minimize, solve_equation

__all__ = ["OrliczError", "PhiFunction", "ModelSpec", "build_model", "build_growth_function", "GridFunction",
           "minimize", "solve_equation", "__version__"]
