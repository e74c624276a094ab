"""Numerical laboratory for quantitative almost-periodic homogenization of 2m-order elliptic systems."""

from .apfield import CoeffField, CoeffMode, SamplerConfig, scalar_field, check_admissible
from .discrete import GridField, SolverConfig, TorusGrid

__version__ = "0.1.0"

__all__ = [
    "CoeffField",
    "CoeffMode",
    "SamplerConfig",
    "scalar_field",
    "check_admissible",
    "GridField",
    "SolverConfig",
    "TorusGrid",
    "__version__",
]
