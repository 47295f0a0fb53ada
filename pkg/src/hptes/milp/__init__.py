"""Mixed-integer linear programming: model container, simplex, branch-and-bound."""

from .bnb import linearize_product, solve_lp, solve_milp
from .model import (BINARY, CONTINUOUS, EQ, FEAS_TOL, GE, INT_TOL, LE, MilpModel,
                    MilpSolution, ModelError)
from .simplex import Basis, LPEngine, LPResult

__all__ = [
    "BINARY", "CONTINUOUS", "EQ", "GE", "LE", "FEAS_TOL", "INT_TOL",
    "MilpModel", "MilpSolution", "ModelError", "LPEngine", "LPResult", "Basis",
    "solve_lp", "solve_milp", "linearize_product",
]
