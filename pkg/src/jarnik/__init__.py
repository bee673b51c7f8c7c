"""Exact and empirical experiments on rational approximation inside missing-digits sets."""
from .errors import ConsistencyError, PreconditionError
from .fractal import CylinderWord, DigitSystem, hausdorff_dim, measure_of_region

__version__ = "0.1.0"

__all__ = ["ConsistencyError", "CylinderWord", "DigitSystem", "PreconditionError",
           "hausdorff_dim", "measure_of_region"]
