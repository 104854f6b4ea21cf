"""Simulation-based rate optimization.

Phase one produces seed rate plans cheaply (saturation heuristics, capacity
interpolation); phase two refines a subset of FCA rates with an integer
Hooke-Jeeves pattern search against :func:`~ctoprates.ctop.evaluate_rates`.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .ctop import AllocationOverflow, FlowSimError, evaluate_rates, scheduled_path_demand
from .lp import solve
from .network import Instance, derive_demand
from .rates import RatePlan, round_half_up
from .stoch import PCA2, build_two_stage_pca, extract_fca_rates

SATURATION_LEVEL = 999
EXPLORATORY, PATTERN, SHRINK = "exploratory", "pattern", "shrink"


class SolveFailed(RuntimeError):
    pass


# -- phase one ------------------------------------------------------------------

def _nominal_rate(instance: Instance, fca: str) -> np.ndarray:
    """Per-period best-case capacity of the PCA an FCA meters, moved upstream by the lag."""
    pca = instance.fca_pca(fca)
    lag = next(instance.entry_lag(p) for p in instance.paths if p.entry_fca == fca) \
        if any(p.entry_fca == fca for p in instance.paths) else 0
    nom = instance.capacities.nominal(pca)
    idx = np.minimum(np.arange(instance.T) + lag, instance.T - 1)
    return nom[idx]


def open_padding(rates: RatePlan, instance: Instance) -> RatePlan:
    """Set rates after the active window to nominal capacity (the program has ended)."""
    arr = rates.rates.copy()
    a = instance.horizon.active
    for i, r in enumerate(rates.resources):
        arr[i, a:] = _nominal_rate(instance, r)[a:]
    return RatePlan(rates.resources, arr)


def _solve_rates(instance: Instance, demand: dict[int, np.ndarray], backend: str) -> RatePlan:
    model = build_two_stage_pca(instance, demand, allow_backlog=True)
    sol = solve(model, backend)
    if not sol.optimal:
        raise SolveFailed(f"saturated PCA model is {sol.status}")
    return open_padding(extract_fca_rates(sol, instance, PCA2), instance)


def _active_cells(instance: Instance) -> dict[int, np.ndarray]:
    """Per path, a mask of first-PCA periods reached from active FCA periods."""
    T, a = instance.T, instance.horizon.active
    out = {}
    for p in instance.paths:
        lag = instance.entry_lag(p)
        m = np.zeros(T, dtype=bool)
        m[lag:min(T, a + lag)] = True
        out[p.id] = m
    return out


def saturate_uniform(instance: Instance, level: int = SATURATION_LEVEL, backend: str = "highs") -> RatePlan:
    """Rates from the two-stage PCA model flooded with ``level`` flights per path and period."""
    demand = {pid: np.where(mask, level, 0).astype(np.int64) for pid, mask in _active_cells(instance).items()}
    return _solve_rates(instance, demand, backend)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    rates: RatePlan
    cost: float
    demand: dict


@dataclass
class SaturationResult:
    rates: RatePlan
    history: list[IterationRecord]
    converged: bool

    @property
    def iterations(self) -> int:
        return len(self.history)


def _scale_demand(demand: dict[int, np.ndarray], masks: dict[int, np.ndarray], target: float) -> dict[int, np.ndarray]:
    total = sum(float(d[masks[pid]].sum()) for pid, d in demand.items())
    factor = target / total if total > 0 else 0.0
    out = {}
    for pid, mask in masks.items():
        d = np.asarray(demand.get(pid, np.zeros(mask.size)), dtype=float)
        scaled = round_half_up(d * factor)
        scaled[mask & (scaled < 1)] = 1
        scaled[~mask] = 0
        out[pid] = scaled
    return out


def saturate_iterative(instance: Instance, max_iter: int = 8, scale: float = 10.0,
                       backend: str = "highs") -> SaturationResult:
    """Demand-following saturation.

    Each round scales the current path-demand estimate so that its total is
    ``scale`` times the raw total, raises empty cells to 1, solves the
    saturated model and re-runs the allocation under the resulting rates to
    get the next demand estimate. Stops when the rate plan repeats.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    masks = _active_cells(instance)
    estimate = dict(derive_demand(instance.flights, instance).by_path)
    target = scale * max(1, sum(int(d.sum()) for d in estimate.values()))
    history: list[IterationRecord] = []
    prev = None
    for it in range(1, max_iter + 1):
        demand = _scale_demand(estimate, masks, target)
        rates = _solve_rates(instance, demand, backend)
        try:
            ev = evaluate_rates(rates, instance, backend)
            cost = ev.total
            estimate = scheduled_path_demand(ev.allocation, instance)
        except (AllocationOverflow, FlowSimError):
            cost = math.inf
        history.append(IterationRecord(it, rates, cost, demand))
        if rates == prev:
            return SaturationResult(rates, history, True)
        if not math.isfinite(cost):
            break
        prev = rates
    return SaturationResult(history[-1].rates, history, False)


def interpolate_capacity(instance: Instance, mode: str = "weighted") -> RatePlan:
    """Rates from scenario capacities: probability-weighted mean or median per period."""
    p = np.asarray(instance.scenario_tree.probabilities)
    T = instance.T
    fcas = instance.fcas
    out = np.zeros((len(fcas), T), dtype=np.int64)
    for i, r in enumerate(fcas):
        pca = instance.fca_pca(r)
        paths = [pa for pa in instance.paths if pa.entry_fca == r]
        lag = instance.entry_lag(paths[0]) if paths else 0
        M = instance.capacities.of(pca).astype(float)  # (T, Q)
        idx = np.minimum(np.arange(T) + lag, T - 1)
        if mode == "weighted":
            out[i] = round_half_up(M[idx] @ p)
        elif mode == "median":
            out[i] = round_half_up(np.median(M[idx], axis=1))
        else:
            raise ValueError(f"unknown interpolation mode {mode!r}")
    return RatePlan(tuple(fcas), out)


# -- phase two: pattern search ----------------------------------------------------

@dataclass
class SearchConfig:
    """Integer pattern-search settings.

    ``subset`` names the FCAs whose active-period rates are searched; ``bounds``
    is either one ``(lo, hi)`` pair for every variable or one pair per variable.
    """

    subset: tuple[str, ...] = ()
    bounds: tuple | Sequence[tuple[int, int]] | None = None
    step: int = 4
    shrink: float = 0.5
    max_evals: int = 2000
    time_budget: float = 300.0
    periods: tuple[int, ...] | None = None
    workers: int = 1

    def __post_init__(self):
        if self.step < 1:
            raise ValueError("step must be >= 1")
        if self.max_evals <= 0 or self.time_budget <= 0:
            raise ValueError("budgets must be positive")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must be in (0, 1)")


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    x: tuple[int, ...]
    objective: float
    move: str
    best: float
    step: int


@dataclass
class SearchTrace:
    records: list[TraceRecord] = field(default_factory=list)
    evaluations: int = 0
    stop_reason: str = ""

    @property
    def best(self) -> float:
        return self.records[-1].best if self.records else math.inf

    @property
    def budget_exhausted(self) -> bool:
        return self.stop_reason in ("eval-budget", "time-budget")

    def add(self, x, f, move, step):
        best = min(f, self.best)
        self.records.append(TraceRecord(len(self.records), tuple(int(v) for v in x), float(f), move, best, step))


class _Budget(Exception):
    def __init__(self, reason):
        self.reason = reason


class _Evaluator:
    """Memoised, budgeted objective; batches may run in worker processes."""

    def __init__(self, f, max_evals, time_budget, workers):
        self.f = f
        self.cache: dict[tuple, float] = {}
        self.max_evals = max_evals
        self.deadline = time.monotonic() + time_budget
        self.pool = ProcessPoolExecutor(workers) if workers > 1 else None

    def batch(self, points: list[np.ndarray]) -> list[float]:
        keys = [tuple(int(v) for v in x) for x in points]
        todo = list(dict.fromkeys(k for k in keys if k not in self.cache))
        if todo and time.monotonic() >= self.deadline:
            raise _Budget("time-budget")
        room = self.max_evals - len(self.cache)
        short = len(todo) > room
        todo = todo[:max(room, 0)]
        if self.pool is not None and len(todo) > 1:
            vals = list(self.pool.map(self.f, [np.array(k) for k in todo]))
        else:
            vals = [self.f(np.array(k)) for k in todo]
        for k, v in zip(todo, vals):
            self.cache[k] = float(v)
        if short:
            raise _Budget("eval-budget")
        return [self.cache[k] for k in keys]

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()


def hooke_jeeves(x0: Sequence[int], f: Callable[[np.ndarray], float], lower: Sequence[int],
                 upper: Sequence[int], step: int = 4, shrink: float = 0.5, max_evals: int = 2000,
                 time_budget: float = 300.0, workers: int = 1) -> tuple[np.ndarray, float, SearchTrace]:
    """Integer pattern search on a box.

    Exploration evaluates every ``±step`` coordinate neighbour plus the
    combination of all improving coordinate moves, then keeps the best
    (ties: lowest coordinate, ``+`` before ``-``). Pattern moves repeat the
    last displacement while exploration around the extrapolated point keeps
    improving. Without improvement the step is multiplied by ``shrink``
    (floored, at least 1); the search stops at step 1 without improvement.
    """
    lo = np.asarray(lower, dtype=np.int64)
    hi = np.asarray(upper, dtype=np.int64)
    x0 = np.clip(np.asarray(x0, dtype=np.int64), lo, hi)
    ev = _Evaluator(f, max_evals, time_budget, workers)
    trace = SearchTrace()
    best_x, best_f = x0.copy(), math.inf

    def explore(center, fc, h):
        cands = []
        for i in range(center.size):
            for d in (h, -h):
                y = center.copy()
                y[i] = min(hi[i], max(lo[i], y[i] + d))
                if y[i] != center[i]:
                    cands.append((i, d, y))
        vals = ev.batch([y for _, _, y in cands])
        pick, pf = center, fc
        combo = center.copy()
        for (i, d, y), v in zip(cands, vals):
            if v < pf:
                pick, pf = y, v
        best_dir = {}
        for (i, d, y), v in zip(cands, vals):
            if v < fc and (i not in best_dir or v < best_dir[i][1]):
                best_dir[i] = (y[i], v)
        if len(best_dir) > 1:
            for i, (val, _) in best_dir.items():
                combo[i] = val
            (vc,) = ev.batch([combo])
            if vc < pf:
                pick, pf = combo, vc
        return pick, pf

    try:
        (fb,) = ev.batch([x0])
        base = x0
        best_x, best_f = base.copy(), fb
        trace.add(base, fb, EXPLORATORY, step)
        h = int(step)
        while True:
            xn, fn = explore(base, fb, h)
            if fn < fb:
                trace.add(xn, fn, EXPLORATORY, h)
                best_x, best_f = xn.copy(), fn
                while True:
                    xp = np.clip(xn + (xn - base), lo, hi)
                    base, fb = xn, fn
                    (fp,) = ev.batch([xp])
                    xe, fe = explore(xp, fp, h)
                    if fe < fb:
                        xn, fn = xe, fe
                        trace.add(xn, fn, PATTERN, h)
                        best_x, best_f = xn.copy(), fn
                        continue
                    break
            else:
                if h == 1:
                    trace.stop_reason = "converged"
                    break
                h = max(1, int(math.floor(h * shrink)))
                trace.add(base, fb, SHRINK, h)
    except _Budget as b:
        trace.stop_reason = b.reason
    finally:
        trace.evaluations = len(ev.cache)
        ev.close()
    return best_x, best_f, trace


class RateObjective:
    """``evaluate_rates`` over a vector of searched cells; overflow maps to +inf."""

    def __init__(self, instance: Instance, base: RatePlan, cells: Sequence[tuple[str, int]],
                 backend: str = "highs"):
        self.instance = instance
        self.base = base
        self.cells = list(cells)
        self.backend = backend

    def plan(self, x) -> RatePlan:
        return self.base.with_vector(self.cells, x)

    def __call__(self, x) -> float:
        return safe_cost(self.plan(x), self.instance, self.backend)


def safe_cost(rates: RatePlan, instance: Instance, backend: str = "highs") -> float:
    try:
        return evaluate_rates(rates, instance, backend).total
    except (AllocationOverflow, FlowSimError):
        return math.inf


def search_cells(instance: Instance, config: SearchConfig) -> list[tuple[str, int]]:
    periods = config.periods or tuple(range(1, instance.horizon.active + 1))
    return [(r, t) for r in config.subset for t in periods]


def _bounds(config: SearchConfig, seed_vec: np.ndarray, default_hi: np.ndarray):
    n = seed_vec.size
    if config.bounds is None:
        lo = np.zeros(n, dtype=np.int64)
        hi = np.maximum(default_hi, seed_vec)
    elif len(config.bounds) == 2 and np.isscalar(config.bounds[0]):
        lo = np.full(n, int(config.bounds[0]))
        hi = np.full(n, int(config.bounds[1]))
    else:
        b = np.asarray(config.bounds, dtype=np.int64)
        lo, hi = b[:, 0], b[:, 1]
    if np.any(seed_vec < lo) or np.any(seed_vec > hi):
        raise ValueError("seed lies outside the search bounds")
    return lo, hi


def pattern_search(seed, objective: Callable, config: SearchConfig,
                   instance: Instance | None = None) -> tuple:
    """Refine ``seed`` by integer pattern search.

    ``seed`` is either a plain integer vector (``objective`` takes vectors) or
    a :class:`RatePlan`; for a plan the searched variables are the
    ``config.subset`` x active-period cells and ``objective`` takes plans.
    Returns ``(best, best objective, trace)`` with ``best`` of the seed's type.
    """
    if isinstance(seed, RatePlan):
        if instance is None:
            periods = config.periods or tuple(range(1, seed.T + 1))
            cells = [(r, t) for r in config.subset for t in periods]
            default_hi = np.full(len(cells), int(seed.rates.max(initial=0)) * 2 + 1)
        else:
            cells = search_cells(instance, config)
            default_hi = np.array([_nominal_rate(instance, r)[t - 1] for r, t in cells], dtype=np.int64)
        x0 = seed.vector(cells)
        lo, hi = _bounds(config, x0, default_hi)
        f = objective if isinstance(objective, RateObjective) else _PlanObjective(objective, seed, cells)
        x, fx, trace = hooke_jeeves(x0, f, lo, hi, config.step, config.shrink, config.max_evals,
                                    config.time_budget, config.workers)
        return seed.with_vector(cells, x), fx, trace
    x0 = np.asarray(seed, dtype=np.int64)
    lo, hi = _bounds(config, x0, x0 + 10 * config.step)
    return hooke_jeeves(x0, objective, lo, hi, config.step, config.shrink, config.max_evals,
                        config.time_budget, config.workers)


class _PlanObjective:
    def __init__(self, objective, base, cells):
        self.objective, self.base, self.cells = objective, base, cells

    def __call__(self, x):
        return self.objective(self.base.with_vector(self.cells, x))


# -- two-phase driver ----------------------------------------------------------------

def congestion_ranking(instance: Instance) -> list[tuple[str, float]]:
    """FCAs by active-window demand over expected capacity of the metered PCA."""
    demand = derive_demand(instance.flights, instance)
    p = np.asarray(instance.scenario_tree.probabilities)
    a = instance.horizon.active
    out = []
    for r in instance.fcas:
        cap = float((instance.capacities.of(instance.fca_pca(r))[:a] @ p).sum())
        d = float(demand.direct[r][:a].sum())
        out.append((r, d / cap if cap > 0 else math.inf))
    return sorted(out, key=lambda kv: (-kv[1], kv[0]))


def default_subset(instance: Instance, k: int = 2) -> tuple[str, ...]:
    return tuple(r for r, _ in congestion_ranking(instance)[:k])


SEED_HEURISTICS: dict[str, Callable[[Instance], RatePlan]] = {
    "uniform": lambda inst: saturate_uniform(inst),
    "iterative": lambda inst: saturate_iterative(inst).rates,
    "interpolate": lambda inst: open_padding(interpolate_capacity(inst, "weighted"), inst),
    "median": lambda inst: open_padding(interpolate_capacity(inst, "median"), inst),
}
DEFAULT_SEEDS = ("uniform", "iterative", "interpolate")


@dataclass
class SeedReport:
    name: str
    seed: RatePlan
    seed_cost: float
    refined: RatePlan
    refined_cost: float
    trace: SearchTrace
    runtime: float

    @property
    def improvement(self) -> float:
        if not math.isfinite(self.seed_cost) or self.seed_cost == 0:
            return 0.0
        return (self.seed_cost - self.refined_cost) / self.seed_cost


@dataclass
class OptimizeResult:
    rates: RatePlan
    cost: float
    best_seed: str
    reports: list[SeedReport]
    subset: tuple[str, ...]

    def table(self) -> list[tuple[str, float, float, float]]:
        return [(r.name, r.seed_cost, r.refined_cost, 100.0 * r.improvement) for r in self.reports]


def two_phase_optimize(instance: Instance, seeds: Sequence[str | tuple[str, RatePlan]] = DEFAULT_SEEDS,
                       config: SearchConfig | None = None, backend: str = "highs") -> OptimizeResult:
    """Seed heuristics followed by pattern search from each seed.

    ``seeds`` holds heuristic names from :data:`SEED_HEURISTICS` or
    ``(name, RatePlan)`` pairs. The time budget in ``config`` covers the
    whole run and is shared evenly among the seeds still to be refined.
    """
    if not seeds:
        raise ValueError("at least one seed heuristic is required")
    config = config or SearchConfig()
    if not config.subset:
        config = _replace_config(config, subset=default_subset(instance))
    t_end = time.monotonic() + config.time_budget
    plans = []
    for s in seeds:
        name, plan = (s, SEED_HEURISTICS[s](instance)) if isinstance(s, str) else s
        plans.append((name, plan))
    reports = []
    for i, (name, plan) in enumerate(plans):
        t0 = time.monotonic()
        share = max(1e-3, (t_end - t0) / (len(plans) - i))
        cfg = _replace_config(config, time_budget=share)
        cells = search_cells(instance, cfg)
        obj = RateObjective(instance, plan, cells, backend)
        seed_cost = obj(plan.vector(cells))
        refined, cost, trace = pattern_search(plan, obj, cfg, instance)
        if cost > seed_cost:  # only if the budget ran out before the seed was scored
            refined, cost = plan, seed_cost
        reports.append(SeedReport(name, plan, seed_cost, refined, cost, trace, time.monotonic() - t0))
    best = min(reports, key=lambda r: r.refined_cost)
    return OptimizeResult(best.refined, best.refined_cost, best.name, reports, tuple(config.subset))


def _replace_config(config: SearchConfig, **changes) -> SearchConfig:
    from dataclasses import replace
    return replace(config, **changes)
