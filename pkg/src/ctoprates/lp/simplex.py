"""Dense two-phase tableau simplex.

Pivoting uses Dantzig's rule and falls back to Bland's rule after a run of
degenerate pivots, which rules out cycling. Intended for the small models in
the test-suite and for cross-checking the HiGHS backend, not for scale.
"""

from __future__ import annotations

import math
import time

import numpy as np

from .model import INFEASIBLE, OPTIMAL, UNBOUNDED, MathModel, MathSolution

PIVOT_TOL = 1e-9
DEGENERATE_RUN = 50


class _Tableau:
    def __init__(self, T: np.ndarray, basis: np.ndarray):
        self.T = T            # last row is the objective row, last column the rhs
        self.basis = basis

    def pivot(self, row: int, col: int):
        T = self.T
        T[row] /= T[row, col]
        col_vals = T[:, col].copy()
        col_vals[row] = 0.0
        T -= np.outer(col_vals, T[row])
        T[np.abs(T) < 1e-13] = 0.0
        self.basis[row] = col

    def run(self, allowed: np.ndarray, max_iter: int) -> str:
        """Minimise the objective row over columns flagged in ``allowed``."""
        T = self.T
        m = T.shape[0] - 1
        degenerate = 0
        for _ in range(max_iter):
            reduced = T[-1, :-1]
            cand = np.nonzero((reduced < -PIVOT_TOL) & allowed)[0]
            if cand.size == 0:
                return OPTIMAL
            if degenerate >= DEGENERATE_RUN:
                col = int(cand[0])  # Bland
            else:
                col = int(cand[np.argmin(reduced[cand])])
            colv = T[:m, col]
            pos = np.nonzero(colv > PIVOT_TOL)[0]
            if pos.size == 0:
                return UNBOUNDED
            ratios = T[pos, -1] / colv[pos]
            rmin = ratios.min()
            ties = pos[ratios <= rmin + PIVOT_TOL * max(1.0, abs(rmin))]
            # Bland's leaving rule: smallest basic variable index among ties
            row = int(ties[np.argmin(self.basis[ties])])
            degenerate = degenerate + 1 if rmin <= PIVOT_TOL else 0
            self.pivot(row, col)
        raise RuntimeError("simplex iteration limit reached")


def _standard_form(model: MathModel):
    """Rewrite as ``A y (<=,=,>=) b`` over shifted variables ``y >= 0``.

    Returns rows, senses, rhs, objective, shift and a column map.
    Free variables are split into two non-negative parts.
    """
    n = model.n_vars
    lb, ub = model.bounds()
    cols = []          # (orig index, sign, offset)
    shift = np.zeros(n)
    for j in range(n):
        if math.isfinite(lb[j]):
            shift[j] = lb[j]
            cols.append((j, 1.0))
        elif math.isfinite(ub[j]):
            shift[j] = ub[j]
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    colmap = {}
    for k, (j, s) in enumerate(cols):
        colmap.setdefault(j, []).append((k, s))

    rows, senses, rhs = [], [], []

    def add_row(coeffs: dict[int, float], sense: str, b: float):
        r = np.zeros(len(cols))
        for j, a in coeffs.items():
            for k, s in colmap[j]:
                r[k] += a * s
            b -= a * shift[j]
        rows.append(r)
        senses.append(sense)
        rhs.append(b)

    for c in model.constraints:
        add_row(c.coeffs, c.sense, c.rhs)
    for j in range(n):
        if math.isfinite(lb[j]) and math.isfinite(ub[j]):
            add_row({j: 1.0}, "<=", ub[j])
    c = np.zeros(len(cols))
    obj_shift = model.objective_constant
    for j, a in model.objective.items():
        for k, s in colmap[j]:
            c[k] += a * s
        obj_shift += a * shift[j]
    A = np.array(rows).reshape(len(rows), len(cols))
    return A, senses, np.array(rhs, dtype=float), c, obj_shift, shift, cols


def solve_lp(model: MathModel, max_iter: int = 50_000) -> MathSolution:
    """Solve the continuous relaxation of ``model`` to a vertex optimum."""
    if model.n_vars == 0:
        raise ValueError("model has no variables")
    t0 = time.perf_counter()
    lb, ub = model.bounds()
    if np.any(lb > ub + PIVOT_TOL):
        return MathSolution(INFEASIBLE, model=model, runtime=time.perf_counter() - t0)
    A, senses, b, c, obj_shift, shift, cols = _standard_form(model)
    m, n = A.shape

    # flip rows so the rhs is non-negative
    A = A.copy()
    for i in range(m):
        if b[i] < 0:
            A[i] *= -1
            b[i] *= -1
            senses[i] = {"<=": ">=", ">=": "<=", "=": "="}[senses[i]]

    n_slack = sum(s != "=" for s in senses)
    n_art = sum(s != "<=" for s in senses)
    width = n + n_slack + n_art + 1
    T = np.zeros((m + 1, width))
    T[:m, :n] = A
    T[:m, -1] = b
    basis = np.empty(m, dtype=np.int64)
    k_slack, k_art = n, n + n_slack
    art_cols = []
    for i, s in enumerate(senses):
        if s == "<=":
            T[i, k_slack] = 1.0
            basis[i] = k_slack
            k_slack += 1
        else:
            if s == ">=":
                T[i, k_slack] = -1.0
                k_slack += 1
            T[i, k_art] = 1.0
            basis[i] = k_art
            art_cols.append(k_art)
            k_art += 1
    tab = _Tableau(T, basis)
    allowed = np.ones(width - 1, dtype=bool)

    if art_cols:
        # phase 1: minimise the sum of artificials
        T[-1, :] = 0.0
        for i in range(m):
            if basis[i] >= n + n_slack:
                T[-1] -= T[i]
        for a in art_cols:
            T[-1, a] = 0.0
        tab.run(allowed, max_iter)
        if -T[-1, -1] > 1e-7 * max(1.0, np.abs(b).max(initial=0.0)):
            return MathSolution(INFEASIBLE, model=model, runtime=time.perf_counter() - t0)
        # drive remaining artificials out of the basis
        for i in range(m):
            if basis[i] >= n + n_slack:
                row = T[i, :n + n_slack]
                nz = np.nonzero(np.abs(row) > PIVOT_TOL)[0]
                if nz.size:
                    tab.pivot(i, int(nz[0]))
        allowed[n + n_slack:] = False

    # phase 2
    T[-1, :] = 0.0
    T[-1, :n] = c
    for i in range(m):
        j = basis[i]
        if j < n and c[j] != 0.0:
            T[-1] -= c[j] * T[i]
    status = tab.run(allowed, max_iter)
    if status == UNBOUNDED:
        return MathSolution(UNBOUNDED, model=model, runtime=time.perf_counter() - t0)

    y = np.zeros(width - 1)
    for i in range(m):
        y[basis[i]] = T[i, -1]
    x = shift.copy()
    for k, (j, s) in enumerate(cols):
        x[j] += s * y[k]
    # snap tiny noise onto bounds
    x = np.where(np.abs(x - lb) < 1e-10, lb, x)
    x = np.where(np.abs(x - ub) < 1e-10, ub, x)
    obj = model.evaluate(x)
    return MathSolution(OPTIMAL, obj, x, model, runtime=time.perf_counter() - t0)
