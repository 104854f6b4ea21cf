"""HiGHS backend via :func:`scipy.optimize.milp` for models beyond the reference solver's reach."""

from __future__ import annotations

import time

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .model import INFEASIBLE, OPTIMAL, UNBOUNDED, MathModel, MathSolution

_STATUS = {0: OPTIMAL, 2: INFEASIBLE, 3: UNBOUNDED}


def solve_highs(model: MathModel, relax: bool = False, time_limit: float | None = None) -> MathSolution:
    t0 = time.perf_counter()
    c = model.objective_vector()
    lb, ub = model.bounds()
    integrality = np.zeros(model.n_vars) if relax else model.integrality().astype(float)
    constraints = []
    if model.n_cons:
        A, lo, hi = model.matrix()
        constraints.append(LinearConstraint(A, lo, hi))
    options = {"presolve": True, "mip_rel_gap": 0.0}
    if time_limit is not None:
        options["time_limit"] = time_limit
    res = milp(c, constraints=constraints, integrality=integrality,
               bounds=Bounds(lb, ub), options=options)
    status = _STATUS.get(res.status)
    runtime = time.perf_counter() - t0
    if status is None:
        raise RuntimeError(f"HiGHS failed on {model.name}: {res.message}")
    if status != OPTIMAL:
        return MathSolution(status, model=model, runtime=runtime)
    x = np.asarray(res.x, dtype=float)
    ints = model.integrality() & (not relax)
    x[ints] = np.round(x[ints])
    return MathSolution(OPTIMAL, model.evaluate(x), x, model, runtime=runtime)
