"""Stochastic rate-planning programs and their post-processing.

Two families are built here:

* FCA-PCA models (ESOM and its semi-dynamic variant) that push aggregate
  flow through the network with pre-computed split ratios, and
* path-commodity PCA models (two-stage and semi-dynamic) that keep every
  path as its own commodity and are solved as integer programs.

Every builder returns a :class:`~ctoprates.lp.MathModel` whose ``meta``
records which variables hold rates, ground delay and air holding so that
:func:`extract_fca_rates` and :func:`per_scenario_costs` can read a solution
without knowing the formulation.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .lp import MathModel, MathSolution
from .network import DemandMatrix, Instance, ResourceKind
from .rates import RatePlan, round_half_up

ESOM = "esom"
SD_ESOM = "sd-esom"
PCA2 = "pca2"
SD_PCA = "sd-pca"
MODEL_KINDS = (ESOM, SD_ESOM, PCA2, SD_PCA)


class CorruptSolutionError(ValueError):
    pass


# -- cost bookkeeping ---------------------------------------------------------

@dataclass(frozen=True)
class CostBreakdown:
    """Per-scenario ground/air delay periods and their priced totals."""

    ground: np.ndarray
    air: np.ndarray
    probabilities: np.ndarray
    c_ground: float = 1.0
    c_air: float = 2.0
    label: str = ""
    runtime: float = 0.0

    def __post_init__(self):
        for name in ("ground", "air", "probabilities"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    @property
    def total(self) -> np.ndarray:
        return self.c_ground * self.ground + self.c_air * self.air

    @property
    def expected(self) -> float:
        return float(self.probabilities @ self.total)

    @classmethod
    def from_components(cls, ground: Sequence[float], air: Sequence[float],
                        probabilities: Sequence[float], c_ground: float = 1.0,
                        c_air: float = 2.0, label: str = "") -> "CostBreakdown":
        return cls(np.asarray(ground, float), np.asarray(air, float),
                   np.asarray(probabilities, float), c_ground, c_air, label)


def per_scenario_costs(solution: MathSolution, instance: Instance) -> CostBreakdown:
    """Recompute the ground/air/total split of a solved model from raw variables."""
    model = solution.model
    Q = instance.scenario_tree.n_scenarios
    x = solution.values if solution.optimal else np.zeros(model.n_vars)
    ground = np.zeros(Q)
    air = np.zeros(Q)
    for q in range(Q):
        ground[q] = sum(w * x[j] for j, w in model.meta["ground_terms"][q])
        air[q] = sum(x[j] for j in model.meta["air_terms"][q])
    return CostBreakdown(ground, air, np.asarray(instance.scenario_tree.probabilities),
                         instance.costs.ground, instance.costs.air,
                         label=model.meta.get("kind", ""), runtime=solution.runtime)


# -- FCA-PCA family -------------------------------------------------------------

def _demand_bound(instance: Instance, demand: DemandMatrix) -> float:
    return float(max(1, demand.total()))


def _ratio(split_ratios, key, t) -> float:
    return float(split_ratios[key][t - 1])


def _esom_skeleton(m: MathModel, instance: Instance, split_ratios, P_of, N: float):
    """Add PCA crossing/holding variables and flow balances shared by both ESOMs.

    ``P_of(r, t, q)`` returns the variable index of the FCA rate of ``r`` in
    period ``t`` for scenario ``q``.
    """
    T = instance.T
    Q = instance.scenario_tree.n_scenarios
    cap = instance.capacities
    kinds = {r.id: r.kind for r in instance.resources}
    L, A = {}, {}
    for r in instance.pcas:
        M = cap.of(r)
        for q in range(Q):
            for t in range(1, T + 1):
                L[r, t, q] = m.add_var(f"L({r},{t},{q + 1})", 0, min(float(M[t - 1, q]), N))
                A[r, t, q] = m.add_var(f"A({r},{t},{q + 1})", 0, 0.0 if t == T else N)
    for r in instance.pcas:
        for q in range(Q):
            for t in range(1, T + 1):
                row = {L[r, t, q]: 1.0, A[r, t, q]: 1.0}
                if t > 1:
                    row[A[r, t - 1, q]] = -1.0
                for arc in instance.in_arcs(r):
                    tau = t - arc.travel_time
                    if tau < 1:
                        continue
                    f = _ratio(split_ratios, arc.key, tau)
                    if f == 0.0:
                        continue
                    src = P_of(arc.source, tau, q) if kinds[arc.source] is ResourceKind.FCA \
                        else L[arc.source, tau, q]
                    row[src] = row.get(src, 0.0) - f
                m.add_constr(row, "=", 0.0, f"flow({r},{t},{q + 1})")
    return L, A


def _fca_upstream(m: MathModel, instance: Instance, split_ratios, r, t, P_of, q) -> dict[int, float]:
    row = {}
    for arc in instance.in_arcs(r):
        if instance.kind_of(arc.source) is not ResourceKind.FCA:
            continue
        tau = t - arc.travel_time
        if tau < 1:
            continue
        f = _ratio(split_ratios, arc.key, tau)
        if f:
            j = P_of(arc.source, tau, q)
            row[j] = row.get(j, 0.0) - f
    return row


def build_esom(instance: Instance, demand: DemandMatrix,
               split_ratios: Mapping[tuple[str, str], np.ndarray]) -> MathModel:
    """Static FCA-PCA model: one rate plan per FCA, scenario-dependent air holding."""
    T = instance.T
    Q = instance.scenario_tree.n_scenarios
    p = instance.scenario_tree.probabilities
    cg, ca = instance.costs.ground, instance.costs.air
    N = _demand_bound(instance, demand)
    m = MathModel("esom")
    G, Pt, P = {}, {}, {}
    for r in instance.fcas:
        for t in range(1, T + 1):
            G[r, t] = m.add_var(f"G({r},{t})", 0, 0.0 if t == T else N, obj=cg)
            Pt[r, t] = m.add_var(f"Pd({r},{t})", 0, N)
            P[r, t] = m.add_var(f"P({r},{t})", 0, N)
    P_of = lambda r, t, q: P[r, t]  # noqa: E731
    for r in instance.fcas:
        D = demand.direct[r]
        for t in range(1, T + 1):
            # direct demand accepted = D_t - (G_t - G_{t-1})
            row = {Pt[r, t]: 1.0, G[r, t]: 1.0}
            if t > 1:
                row[G[r, t - 1]] = -1.0
            m.add_constr(row, "=", float(D[t - 1]), f"ground({r},{t})")
            row = {P[r, t]: 1.0, Pt[r, t]: -1.0}
            for j, c in _fca_upstream(m, instance, split_ratios, r, t, P_of, 0).items():
                row[j] = row.get(j, 0.0) + c
            m.add_constr(row, "=", 0.0, f"rate({r},{t})")
    L, A = _esom_skeleton(m, instance, split_ratios, P_of, N)
    for (r, t, q), j in A.items():
        m.objective[j] = m.objective.get(j, 0.0) + ca * p[q]
    ground = [(G[k], 1.0) for k in sorted(G, key=lambda k: G[k])]
    m.meta.update(
        kind=ESOM,
        rates={(r, t, q): P[r, t] for (r, t) in P for q in range(Q)},
        ground_terms={q: ground for q in range(Q)},
        air_terms={q: [j for (r, t, qq), j in A.items() if qq == q] for q in range(Q)},
        crossings=L, holds=A,
    )
    return m


def build_semidynamic_esom(instance: Instance, demand: DemandMatrix,
                           split_ratios: Mapping[tuple[str, str], np.ndarray]) -> MathModel:
    """Multistage FCA-PCA model with scenario-dependent rates and nonanticipativity."""
    tree = instance.scenario_tree
    T = instance.T
    Q = tree.n_scenarios
    p = tree.probabilities
    cg, ca = instance.costs.ground, instance.costs.air
    N = _demand_bound(instance, demand)
    m = MathModel("sd-esom")
    X = {}
    for r in instance.fcas:
        S = demand.by_stage[r]
        for q in range(Q):
            for s in range(tree.n_stages):
                for t in np.nonzero(S[s])[0] + 1:
                    for tp in range(t, T + 1):
                        X[r, q, s, t, tp] = m.add_var(
                            f"X({r},{q + 1},{s + 1},{t},{tp})", 0, float(S[s, t - 1]),
                            obj=p[q] * cg * (tp - t))
    P = {}
    for r in instance.fcas:
        for q in range(Q):
            for t in range(1, T + 1):
                P[r, t, q] = m.add_var(f"P({r},{t},{q + 1})", 0, N)
    P_of = lambda r, t, q: P[r, t, q]  # noqa: E731

    released = defaultdict(list)
    for (r, q, s, t, tp), j in X.items():
        released[r, q, tp].append(j)
    for r in instance.fcas:
        S = demand.by_stage[r]
        for q in range(Q):
            for s in range(tree.n_stages):
                for t in np.nonzero(S[s])[0] + 1:
                    m.add_constr({X[r, q, s, t, tp]: 1.0 for tp in range(t, T + 1)},
                                 "=", float(S[s, t - 1]), f"conserve({r},{q + 1},{s + 1},{t})")
            for t in range(1, T + 1):
                row = {P[r, t, q]: 1.0}
                for j in released[r, q, t]:
                    row[j] = -1.0
                for j, c in _fca_upstream(m, instance, split_ratios, r, t, P_of, q).items():
                    row[j] = row.get(j, 0.0) + c
                m.add_constr(row, "=", 0.0, f"rate({r},{t},{q + 1})")

    # decisions about stage-s flights may only differ between scenarios that
    # are already distinguishable when stage s begins
    for r in instance.fcas:
        S = demand.by_stage[r]
        for s in range(tree.n_stages):
            for group in tree.branches_at(s + 1):
                q0 = group[0]
                for q in group[1:]:
                    for t in np.nonzero(S[s])[0] + 1:
                        for tp in range(t, T + 1):
                            m.add_constr({X[r, q, s, t, tp]: 1.0, X[r, q0, s, t, tp]: -1.0}, "=", 0.0,
                                         f"na({r},{s + 1},{t},{tp},{q0 + 1},{q + 1})")

    L, A = _esom_skeleton(m, instance, split_ratios, P_of, N)
    for (r, t, q), j in A.items():
        m.objective[j] = m.objective.get(j, 0.0) + ca * p[q]
    m.meta.update(
        kind=SD_ESOM,
        rates=P,
        ground_terms={q: [(j, float(tp - t)) for (r, qq, s, t, tp), j in X.items() if qq == q and tp > t]
                      for q in range(Q)},
        air_terms={q: [j for (r, t, qq), j in A.items() if qq == q] for q in range(Q)},
        reschedules=X, crossings=L, holds=A,
    )
    return m


# -- path-commodity PCA family ----------------------------------------------------

def _path_lags(instance: Instance, path) -> list[int]:
    lags = [0]
    for u, v in zip(path.nodes, path.nodes[1:]):
        lags.append(instance.arc(u, v).travel_time)
    return lags


def _recourse(m: MathModel, instance: Instance, inflow, scenarios: Sequence[int],
              N: float, paths=None, conserve=None):
    """Per-path crossings and air holds with shared PCA capacity.

    ``inflow(path, t, q)`` returns ``(coeffs, constant)`` describing the
    arrivals at the path's first PCA. ``conserve(path, q)`` gives the same for
    the total to be landed at the final PCA.
    """
    T = instance.T
    cap = instance.capacities
    paths = instance.paths if paths is None else paths
    L, A = {}, {}
    usage = defaultdict(list)
    for path in paths:
        lags = _path_lags(instance, path)
        for q in scenarios:
            for i, k in enumerate(path.nodes):
                for t in range(1, T + 1):
                    L[path.id, i, t, q] = m.add_var(f"L({path.id},{k},{t},{q + 1})", 0, N, integer=True)
                    A[path.id, i, t, q] = m.add_var(f"A({path.id},{k},{t},{q + 1})", 0,
                                                    0.0 if t == T else N, integer=True)
                    usage[k, t, q].append(L[path.id, i, t, q])
            for i, k in enumerate(path.nodes):
                for t in range(1, T + 1):
                    row = {L[path.id, i, t, q]: 1.0, A[path.id, i, t, q]: 1.0}
                    if t > 1:
                        row[A[path.id, i, t - 1, q]] = -1.0
                    rhs = 0.0
                    if i == 0:
                        coeffs, const = inflow(path, t, q)
                        for j, c in coeffs.items():
                            row[j] = row.get(j, 0.0) - c
                        rhs = const
                    elif t - lags[i] >= 1:
                        j = L[path.id, i - 1, t - lags[i], q]
                        row[j] = row.get(j, 0.0) - 1.0
                    m.add_constr(row, "=", rhs, f"pass({path.id},{k},{t},{q + 1})")
            if conserve is not None:
                coeffs, const = conserve(path, q)
                last = len(path.nodes) - 1
                row = {L[path.id, last, t, q]: 1.0 for t in range(1, T + 1)}
                for j, c in coeffs.items():
                    row[j] = row.get(j, 0.0) - c
                m.add_constr(row, "=", const, f"land({path.id},{q + 1})")
    for (k, t, q), js in sorted(usage.items(), key=lambda kv: (kv[0][2], kv[0][0], kv[0][1])):
        m.add_constr({j: 1.0 for j in js}, "<=", float(cap.get(k, t, q)), f"cap({k},{t},{q + 1})")
    return L, A


def _path_demand(demand) -> tuple[dict[int, np.ndarray], dict[int, np.ndarray]]:
    """Accept a DemandMatrix or a plain ``{path: (T,)}`` / ``{path: (S, T)}`` mapping."""
    if isinstance(demand, DemandMatrix):
        return dict(demand.by_path), dict(demand.by_path_stage)
    flat, staged = {}, {}
    for pid, arr in demand.items():
        arr = np.asarray(arr)
        if arr.ndim == 1:
            flat[pid] = arr
            staged[pid] = arr[None, :]
        else:
            staged[pid] = arr
            flat[pid] = arr.sum(axis=0)
    return flat, staged


def build_two_stage_pca(instance: Instance, demand_by_path, allow_backlog: bool = False) -> MathModel:
    """Two-stage integer PCA model.

    First stage: per-path planned arrivals at the first PCA, shared by all
    scenarios. Second stage: per-scenario air holding with PCA capacity shared
    across paths. With ``allow_backlog`` unaccepted demand may remain on the
    ground at the end of the horizon (used by the saturation heuristics).
    """
    flat, _ = _path_demand(demand_by_path)
    tree = instance.scenario_tree
    T = instance.T
    Q = tree.n_scenarios
    p = tree.probabilities
    cg, ca = instance.costs.ground, instance.costs.air
    N = float(max(1, sum(int(v.sum()) for v in flat.values())))
    m = MathModel("pca2")
    G, P = {}, {}
    paths = [pa for pa in instance.paths]
    for path in paths:
        S = np.zeros(T) if path.id not in flat else flat[path.id]
        for t in range(1, T + 1):
            G[path.id, t] = m.add_var(f"G({path.id},{t})", 0, N if (t < T or allow_backlog) else 0.0,
                                      integer=True, obj=cg)
            P[path.id, t] = m.add_var(f"P({path.id},{t})", 0, N, integer=True)
        for t in range(1, T + 1):
            row = {P[path.id, t]: 1.0, G[path.id, t]: 1.0}
            if t > 1:
                row[G[path.id, t - 1]] = -1.0
            m.add_constr(row, "=", float(S[t - 1]), f"ground({path.id},{t})")

    inflow = lambda path, t, q: ({P[path.id, t]: 1.0}, 0.0)  # noqa: E731
    conserve = lambda path, q: ({P[path.id, t]: 1.0 for t in range(1, T + 1)}, 0.0)  # noqa: E731
    L, A = _recourse(m, instance, inflow, range(Q), N, paths, conserve)
    for (pid, i, t, q), j in A.items():
        m.objective[j] = m.objective.get(j, 0.0) + ca * p[q]
    ground = [(j, 1.0) for j in G.values()]
    m.meta.update(
        kind=PCA2,
        path_rates={(pid, t, q): j for (pid, t), j in P.items() for q in range(Q)},
        ground_terms={q: ground for q in range(Q)},
        air_terms={q: [j for (pid, i, t, qq), j in A.items() if qq == q] for q in range(Q)},
        crossings=L, holds=A, demand=flat,
    )
    return m


def build_semidynamic_pca(instance: Instance, demand_by_path, allow_backlog: bool = False) -> MathModel:
    """Semi-dynamic integer PCA model.

    Ground holding is tracked per departure stage as a cumulative count;
    holdings of stage-s flights are shared by scenarios in the same branch at
    the start of stage s.
    """
    flat, staged = _path_demand(demand_by_path)
    tree = instance.scenario_tree
    T = instance.T
    Q = tree.n_scenarios
    p = tree.probabilities
    cg, ca = instance.costs.ground, instance.costs.air
    N = float(max(1, sum(int(v.sum()) for v in flat.values())))
    m = MathModel("sd-pca")
    G, P = {}, {}
    for path in instance.paths:
        S = staged.get(path.id, np.zeros((1, T)))
        for q in range(Q):
            for t in range(1, T + 1):
                P[path.id, t, q] = m.add_var(f"P({path.id},{t},{q + 1})", 0, N, integer=True)
            for s in range(S.shape[0]):
                nz = np.nonzero(S[s])[0]
                if nz.size == 0:
                    continue
                first = int(nz[0]) + 1
                for t in range(first, T + 1):
                    G[path.id, s, t, q] = m.add_var(
                        f"G({path.id},{s + 1},{t},{q + 1})", 0,
                        N if (t < T or allow_backlog) else 0.0, integer=True, obj=p[q] * cg)
            for t in range(1, T + 1):
                row = {P[path.id, t, q]: 1.0}
                rhs = 0.0
                for s in range(S.shape[0]):
                    if (path.id, s, t, q) not in G:
                        rhs += float(S[s, t - 1])
                        continue
                    # stage s releases S_{s,t} - (G_{s,t} - G_{s,t-1}) >= 0
                    rel = {G[path.id, s, t, q]: 1.0}
                    if (path.id, s, t - 1, q) in G:
                        rel[G[path.id, s, t - 1, q]] = -1.0
                    m.add_constr(rel, "<=", float(S[s, t - 1]), f"release({path.id},{s + 1},{t},{q + 1})")
                    row[G[path.id, s, t, q]] = 1.0
                    if (path.id, s, t - 1, q) in G:
                        row[G[path.id, s, t - 1, q]] = -1.0
                    rhs += float(S[s, t - 1])
                m.add_constr(row, "=", rhs, f"ground({path.id},{t},{q + 1})")
        for s in range(S.shape[0]):
            for group in tree.branches_at(s + 1):
                q0 = group[0]
                for q in group[1:]:
                    for t in range(1, T + 1):
                        if (path.id, s, t, q0) in G:
                            m.add_constr({G[path.id, s, t, q]: 1.0, G[path.id, s, t, q0]: -1.0}, "=", 0.0,
                                         f"na({path.id},{s + 1},{t},{q0 + 1},{q + 1})")

    inflow = lambda path, t, q: ({P[path.id, t, q]: 1.0}, 0.0)  # noqa: E731
    conserve = lambda path, q: ({P[path.id, t, q]: 1.0 for t in range(1, T + 1)}, 0.0)  # noqa: E731
    L, A = _recourse(m, instance, inflow, range(Q), N, instance.paths, conserve)
    for (pid, i, t, q), j in A.items():
        m.objective[j] = m.objective.get(j, 0.0) + ca * p[q]
    m.meta.update(
        kind=SD_PCA,
        path_rates=P,
        ground_terms={q: [(j, 1.0) for (pid, s, t, qq), j in G.items() if qq == q] for q in range(Q)},
        air_terms={q: [j for (pid, i, t, qq), j in A.items() if qq == q] for q in range(Q)},
        crossings=L, holds=A, demand=flat,
    )
    return m


def build_model(kind: str, instance: Instance, demand: DemandMatrix,
                split_ratios: Mapping[tuple[str, str], np.ndarray] | None = None) -> MathModel:
    if kind == ESOM:
        return build_esom(instance, demand, split_ratios)
    if kind == SD_ESOM:
        return build_semidynamic_esom(instance, demand, split_ratios)
    if kind == PCA2:
        return build_two_stage_pca(instance, demand)
    if kind == SD_PCA:
        return build_semidynamic_pca(instance, demand)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


# -- rate extraction --------------------------------------------------------------

def _checked(solution: MathSolution) -> np.ndarray:
    if not solution.optimal:
        raise CorruptSolutionError(f"solution status is {solution.status}")
    x = solution.values
    if not np.all(np.isfinite(x)) or np.any(x < -1e-7):
        raise CorruptSolutionError("solution has negative or non-finite values")
    return x


def extract_fca_rates(solution: MathSolution, instance: Instance, model_kind: str | None = None,
                      scenario: int = 0) -> RatePlan:
    """Integer FCA rates from a solved model.

    FCA-PCA models carry FCA rates directly (rounded half-up). For PCA models
    each path's planned first-PCA arrivals are moved back by the FCA-to-PCA
    travel time and summed over all paths metered by the same FCA. The
    semi-dynamic models yield one plan per scenario; pick it with ``scenario``.
    """
    model = solution.model
    kind = model_kind or model.meta["kind"]
    x = _checked(solution)
    T = instance.T
    fcas = instance.fcas
    out = np.zeros((len(fcas), T))
    if kind in (ESOM, SD_ESOM):
        for (r, t, q), j in model.meta["rates"].items():
            if q == scenario:
                out[fcas.index(r), t - 1] = x[j]
        return RatePlan(tuple(fcas), round_half_up(out))
    if kind in (PCA2, SD_PCA):
        for (pid, t, q), j in model.meta["path_rates"].items():
            if q != scenario:
                continue
            path = instance.path(pid)
            tau = t - instance.entry_lag(path)
            if 1 <= tau <= T:
                out[fcas.index(path.entry_fca), tau - 1] += x[j]
        return RatePlan(tuple(fcas), round_half_up(out))
    raise ValueError(f"unknown model kind {kind!r}")


def path_flow_totals(solution: MathSolution, instance: Instance) -> dict[tuple[int, int], tuple[float, float]]:
    """``{(path, scenario): (landed at final PCA, scheduled)}`` for PCA-type models."""
    model = solution.model
    L = model.meta["crossings"]
    demand = model.meta["demand"]
    x = solution.values
    out = {}
    Q = instance.scenario_tree.n_scenarios
    for path in instance.paths:
        last = len(path.nodes) - 1
        for q in range(Q):
            landed = sum(x[L[path.id, last, t, q]] for t in range(1, instance.T + 1)
                         if (path.id, last, t, q) in L)
            out[path.id, q] = (float(landed), float(demand.get(path.id, np.zeros(1)).sum()))
    return out


def pca_load(solution: MathSolution, instance: Instance) -> np.ndarray:
    """Total crossings per (PCA, period, scenario) summed over paths/flows."""
    model = solution.model
    x = solution.values
    pcas = instance.capacities.resources
    load = np.zeros((len(pcas), instance.T, instance.scenario_tree.n_scenarios))
    L = model.meta["crossings"]
    if model.meta["kind"] in (ESOM, SD_ESOM):
        for (r, t, q), j in L.items():
            load[pcas.index(r), t - 1, q] += x[j]
    else:
        for (pid, i, t, q), j in L.items():
            k = instance.path(pid).nodes[i]
            load[pcas.index(k), t - 1, q] += x[j]
    return load
