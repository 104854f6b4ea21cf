"""Solver-neutral linear / mixed-integer model container."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

import numpy as np
import scipy.sparse as sp

FEAS_TOL = 1e-7

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass
class Variable:
    name: str
    lb: float = 0.0
    ub: float = math.inf
    integer: bool = False


@dataclass
class Constraint:
    coeffs: dict[int, float]
    sense: str  # "<=", "=", ">="
    rhs: float
    name: str = ""


class MathModel:
    """Minimisation model built incrementally by index.

    ``meta`` holds free-form annotations that the model builders use to map
    variables back to domain quantities.
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self.objective: dict[int, float] = {}
        self.objective_constant = 0.0
        self.meta: dict[str, Any] = {}
        self._index: dict[str, int] = {}

    def __repr__(self):
        return (f"MathModel({self.name!r}, vars={self.n_vars}, cons={self.n_cons}, "
                f"int={sum(v.integer for v in self.variables)})")

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_cons(self) -> int:
        return len(self.constraints)

    @property
    def is_mip(self) -> bool:
        return any(v.integer for v in self.variables)

    def add_var(self, name: str, lb: float = 0.0, ub: float = math.inf,
                integer: bool = False, obj: float = 0.0) -> int:
        if name in self._index:
            raise ValueError(f"duplicate variable {name}")
        idx = len(self.variables)
        self.variables.append(Variable(name, float(lb), float(ub), bool(integer)))
        self._index[name] = idx
        if obj:
            self.objective[idx] = self.objective.get(idx, 0.0) + float(obj)
        return idx

    def add_constr(self, coeffs: Mapping[int, float] | Iterable[tuple[int, float]],
                   sense: str, rhs: float, name: str = "") -> int:
        if sense not in ("<=", "=", ">="):
            raise ValueError(f"bad sense {sense!r}")
        merged: dict[int, float] = {}
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        for j, c in items:
            if not 0 <= j < len(self.variables):
                raise IndexError(f"constraint references undeclared variable {j}")
            merged[j] = merged.get(j, 0.0) + float(c)
        merged = {j: c for j, c in merged.items() if c != 0.0}
        self.constraints.append(Constraint(merged, sense, float(rhs),
                                           name or f"c{len(self.constraints)}"))
        return len(self.constraints) - 1

    def set_objective(self, coeffs: Mapping[int, float], constant: float = 0.0):
        self.objective = {j: float(c) for j, c in coeffs.items() if c != 0.0}
        self.objective_constant = float(constant)

    def index(self, name: str) -> int:
        return self._index[name]

    def copy(self) -> "MathModel":
        m = MathModel(self.name)
        m.variables = [Variable(v.name, v.lb, v.ub, v.integer) for v in self.variables]
        m.constraints = [Constraint(dict(c.coeffs), c.sense, c.rhs, c.name) for c in self.constraints]
        m.objective = dict(self.objective)
        m.objective_constant = self.objective_constant
        m.meta = dict(self.meta)
        m._index = dict(self._index)
        return m

    def relaxation(self) -> "MathModel":
        m = self.copy()
        for v in m.variables:
            v.integer = False
        return m

    # -- array views ------------------------------------------------------------
    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for j, v in self.objective.items():
            c[j] = v
        return c

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lb = np.array([v.lb for v in self.variables], dtype=float)
        ub = np.array([v.ub for v in self.variables], dtype=float)
        return lb, ub

    def integrality(self) -> np.ndarray:
        return np.array([v.integer for v in self.variables], dtype=bool)

    def matrix(self) -> tuple[sp.csr_matrix, np.ndarray, np.ndarray]:
        """Sparse ``A`` with row-wise lower/upper activity bounds."""
        rows, cols, vals = [], [], []
        lo = np.empty(self.n_cons)
        hi = np.empty(self.n_cons)
        for i, c in enumerate(self.constraints):
            for j, a in c.coeffs.items():
                rows.append(i)
                cols.append(j)
                vals.append(a)
            lo[i] = c.rhs if c.sense in ("=", ">=") else -math.inf
            hi[i] = c.rhs if c.sense in ("=", "<=") else math.inf
        A = sp.csr_matrix((vals, (rows, cols)), shape=(self.n_cons, self.n_vars))
        return A, lo, hi

    def evaluate(self, x: np.ndarray) -> float:
        return float(self.objective_vector() @ x) + self.objective_constant

    def violations(self, x: np.ndarray, tol: float = FEAS_TOL) -> list[str]:
        """Independent feasibility check of a point."""
        out = []
        for j, v in enumerate(self.variables):
            if x[j] < v.lb - tol or x[j] > v.ub + tol:
                out.append(f"{v.name}={x[j]} outside [{v.lb}, {v.ub}]")
            if v.integer and abs(x[j] - round(x[j])) > tol:
                out.append(f"{v.name}={x[j]} not integral")
        for c in self.constraints:
            act = sum(a * x[j] for j, a in c.coeffs.items())
            if c.sense == "<=" and act > c.rhs + tol or \
               c.sense == ">=" and act < c.rhs - tol or \
               c.sense == "=" and abs(act - c.rhs) > tol:
                out.append(f"{c.name}: activity {act} {c.sense} {c.rhs}")
        return out


@dataclass
class MathSolution:
    status: str
    objective: float = math.nan
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    model: MathModel | None = field(default=None, repr=False)
    nodes: int = 0
    runtime: float = 0.0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.model.index(name)])

    def get(self, name: str, default: float = 0.0) -> float:
        try:
            return self[name]
        except KeyError:
            return default
