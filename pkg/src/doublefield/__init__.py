"""Exact symbolic computations for double field geometry on a coordinate patch."""

from .symcore import CoordSystem, ScalarExpr, scalar_arith, scalar_diff, scalar_eval, scalar_parse

__version__ = "0.1.0"

__all__ = [
    "CoordSystem",
    "ScalarExpr",
    "scalar_arith",
    "scalar_diff",
    "scalar_eval",
    "scalar_parse",
]
