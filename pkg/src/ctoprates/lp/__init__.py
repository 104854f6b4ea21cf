"""Linear and mixed-integer programming: model container, solvers, LP text format."""

from .branch_bound import solve_mip
from .highs import solve_highs
from .lpformat import export_model, parse_model
from .model import (FEAS_TOL, INFEASIBLE, OPTIMAL, UNBOUNDED, Constraint, MathModel,
                    MathSolution, Variable)
from .simplex import solve_lp

BACKENDS = ("highs", "simplex")


def solve(model: MathModel, backend: str = "highs") -> MathSolution:
    """Solve ``model`` (LP or MIP) with the named backend.

    ``"simplex"`` routes to the in-package reference solver
    (:func:`solve_lp` / :func:`solve_mip`); ``"highs"`` to scipy's HiGHS.
    """
    if backend == "highs":
        return solve_highs(model)
    if backend == "simplex":
        return solve_mip(model) if model.is_mip else solve_lp(model)
    raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")


__all__ = [
    "BACKENDS", "Constraint", "FEAS_TOL", "INFEASIBLE", "MathModel", "MathSolution",
    "OPTIMAL", "UNBOUNDED", "Variable", "export_model", "parse_model", "solve",
    "solve_highs", "solve_lp", "solve_mip",
]
