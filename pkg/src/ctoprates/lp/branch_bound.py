"""Depth-first branch and bound on top of :func:`solve_lp`."""

from __future__ import annotations

import math
import time

import numpy as np

from .model import FEAS_TOL, INFEASIBLE, OPTIMAL, UNBOUNDED, MathModel, MathSolution
from .simplex import solve_lp


def _most_fractional(x: np.ndarray, integer: np.ndarray) -> int | None:
    frac = np.abs(x - np.round(x))
    frac[~integer] = 0.0
    if frac.max(initial=0.0) <= FEAS_TOL:
        return None
    dist = np.abs((x - np.floor(x)) - 0.5)
    dist[~integer | (frac <= FEAS_TOL)] = np.inf
    # argmin returns the lowest index among ties
    return int(np.argmin(dist))


def solve_mip(model: MathModel, max_nodes: int = 200_000) -> MathSolution:
    """Optimal integer solution by depth-first branch and bound.

    Branches on the most fractional integer variable (lowest index on ties),
    explores the down-branch first and prunes nodes whose relaxation bound
    cannot beat the incumbent.
    """
    t0 = time.perf_counter()
    integer = model.integrality()
    lb0, ub0 = model.bounds()
    lb0 = np.where(integer, np.ceil(lb0 - FEAS_TOL), lb0)
    ub0 = np.where(integer, np.floor(ub0 + FEAS_TOL), ub0)

    work = model.copy()
    best_x, best_obj = None, math.inf
    stack = [(lb0, ub0)]
    nodes = 0
    root_unbounded = False
    while stack:
        lb, ub = stack.pop()
        nodes += 1
        if nodes > max_nodes:
            raise RuntimeError("branch-and-bound node limit reached")
        for j, v in enumerate(work.variables):
            v.lb, v.ub, v.integer = lb[j], ub[j], False
        rel = solve_lp(work)
        if rel.status == UNBOUNDED:
            if nodes == 1:
                root_unbounded = True
                break
            continue
        if rel.status != OPTIMAL:
            continue
        if rel.objective >= best_obj - 1e-9:
            continue
        j = _most_fractional(rel.values, integer)
        if j is None:
            x = rel.values.copy()
            x[integer] = np.round(x[integer])
            best_x, best_obj = x, model.evaluate(x)
            continue
        v = rel.values[j]
        down_ub = ub.copy()
        down_ub[j] = math.floor(v)
        up_lb = lb.copy()
        up_lb[j] = math.ceil(v)
        # LIFO: push up first so the down branch is explored first
        stack.append((up_lb, ub))
        stack.append((lb, down_ub))
    runtime = time.perf_counter() - t0
    if root_unbounded:
        return MathSolution(UNBOUNDED, model=model, nodes=nodes, runtime=runtime)
    if best_x is None:
        return MathSolution(INFEASIBLE, model=model, nodes=nodes, runtime=runtime)
    return MathSolution(OPTIMAL, best_obj, best_x, model, nodes=nodes, runtime=runtime)
