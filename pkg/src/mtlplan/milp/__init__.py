"""Mixed-integer linear programming: model container, simplex, branch and bound."""

from .model import BINARY, CONTINUOUS, EQ, GE, LE, Constraint, MilpModel, Var, Violation, check_solution
from .bnb import NODE_LIMIT, MilpError, MilpResult, solve_milp
from .lpformat import LpFormatError, read_lp, write_lp
from .simplex import INFEASIBLE, ITERATION_LIMIT, OPTIMAL, UNBOUNDED, LpResult, linprog_dense, solve_lp

__all__ = [
    "BINARY", "CONTINUOUS", "EQ", "GE", "LE", "Constraint", "MilpModel", "Var",
    "Violation", "check_solution", "INFEASIBLE", "ITERATION_LIMIT", "OPTIMAL",
    "UNBOUNDED", "LpResult", "linprog_dense", "solve_lp",
    "NODE_LIMIT", "MilpError", "MilpResult", "solve_milp",
    "LpFormatError", "read_lp", "write_lp",
]
