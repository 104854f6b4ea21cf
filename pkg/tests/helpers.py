"""Instance builders and independent oracles shared by the test modules."""

from __future__ import annotations

import itertools
import math

import numpy as np

from ctoprates.ctop import ASSIGNED, FREE, MARKED, Inclusion, Program, initial_arrival_time
from ctoprates.lp import MathModel
from ctoprates.network import (PERIOD_SECONDS, Branch, CapacityProfile, CostParams, Flight, Horizon,
                               Instance, NetworkArc, Path, Resource, ResourceKind, ScenarioTree,
                               TrajectoryOption)
from ctoprates.stoch import pca_load

PROGRAM = Program({"FCA1": (0.0, 4 * 900.0), "FCA2": (0.0, 4 * 900.0)}, 0.0, 8)


def make_instance(fcas, pcas, arcs, paths, caps, tree=None, flights=(), active=4, padding=4,
                  costs=(1.0, 2.0), start=0.0, name="test"):
    """``caps[pca]`` is a (T, Q) array-like or a scalar applied everywhere."""
    tree = tree or ScenarioTree.single()
    T = active + padding
    Q = tree.n_scenarios
    vals = np.zeros((len(pcas), T, Q), dtype=np.int64)
    for i, r in enumerate(pcas):
        vals[i] = np.broadcast_to(np.asarray(caps[r]), (T, Q))
    return Instance(
        resources=tuple(Resource(r, ResourceKind.FCA) for r in fcas)
        + tuple(Resource(r, ResourceKind.PCA) for r in pcas),
        arcs=tuple(arcs), paths=tuple(paths), scenario_tree=tree,
        capacities=CapacityProfile(tuple(pcas), vals), flights=tuple(flights),
        horizon=Horizon(active, padding, start), costs=CostParams(*costs), name=name)


def flight(fid, path, fca, period, offset=0, etd=None, exempt=False, alts=(), start=0.0):
    """Flight crossing ``fca`` at ``period``/``offset``; ``alts`` = (path, fca, period, offset, cost)."""
    t = start + (period - 1) * PERIOD_SECONDS + offset
    opts = [TrajectoryOption(path, (fca,), (t,), 0.0)]
    for p2, f2, per2, off2, cost in alts:
        opts.append(TrajectoryOption(p2, (f2,), (start + (per2 - 1) * PERIOD_SECONDS + off2,), cost))
    return Flight(fid, t - 1800 if etd is None else etd, tuple(opts), exempt)


def single_path_instance(caps, active=4, padding=4, flights=(), tree=None, costs=(1.0, 2.0)):
    """FCA1 -> PCA1, one path."""
    return make_instance(["FCA1"], ["PCA1"], [NetworkArc("FCA1", "PCA1", 0)],
                         [Path(1, ("PCA1",), "FCA1")], {"PCA1": caps}, tree, flights,
                         active, padding, costs)


def pathology_instance():
    """One FCA splitting to PCA1/PCA2 with ratios 1/0 in period 1 and 0/1 afterwards."""
    T = 6
    r1 = np.zeros(T)
    r1[0] = 1.0
    arcs = [NetworkArc("FCA1", "PCA1", 0, r1), NetworkArc("FCA1", "PCA2", 0, 1.0 - r1)]
    paths = [Path(1, ("PCA1",), "FCA1"), Path(2, ("PCA2",), "FCA1")]
    fl = [flight(f"F{i}", 1, "FCA1", 1) for i in range(4)]
    return make_instance(["FCA1"], ["PCA1", "PCA2"], arcs, paths, {"PCA1": 2, "PCA2": 10},
                         flights=fl, active=3, padding=3)


def three_scenario_tree(t2, t3, probs=(0.3, 0.4, 0.3)):
    return ScenarioTree(probs, (1, t2, t3),
                        (Branch(1, (0, 1, 2)), Branch(2, (0,)), Branch(2, (1, 2)),
                         Branch(3, (0,)), Branch(3, (1,)), Branch(3, (2,))))


def random_instance(rng: np.random.Generator, n_flights=None, scenarios=3, active=6, padding=5):
    """Two FCAs over two PCAs feeding an airport, with a nested 3-scenario tree."""
    fcas = ["FCA1", "FCA2"]
    pcas = ["PCA1", "PCA2", "APT"]
    arcs = [NetworkArc("FCA1", "PCA1", 0), NetworkArc("FCA2", "PCA2", 0),
            NetworkArc("PCA1", "APT", int(rng.integers(1, 3))), NetworkArc("PCA2", "APT", int(rng.integers(1, 3)))]
    paths = [Path(1, ("PCA1", "APT"), "FCA1"), Path(2, ("PCA2", "APT"), "FCA2")]
    T = active + padding
    if scenarios == 1:
        tree = ScenarioTree.single()
    else:
        t2 = int(rng.integers(2, active))
        t3 = int(rng.integers(t2 + 1, active + 1))
        p = rng.dirichlet(np.ones(3))
        p = np.round(p / p.sum(), 6)
        p[-1] = 1.0 - p[:-1].sum()
        tree = three_scenario_tree(t2, t3, tuple(p))
    Q = tree.n_scenarios
    caps = {}
    for r in pcas:
        base = rng.integers(1, 4, size=T)
        arr = np.repeat(base[:, None], Q, axis=1)
        if Q == 3:
            arr[t2 - 1:, 0] = rng.integers(1, 5, size=T - t2 + 1)
            arr[t3 - 1:, 2] = rng.integers(1, 5, size=T - t3 + 1)
        arr[active:, :] = np.maximum(arr[active:, :], 4)
        caps[r] = arr
    n = int(rng.integers(3, 9)) if n_flights is None else n_flights
    flights = []
    for i in range(n):
        pid = int(rng.integers(1, 3))
        per = int(rng.integers(1, active - 1))
        etd = (per - 1) * PERIOD_SECONDS - int(rng.integers(0, 4)) * PERIOD_SECONDS
        flights.append(flight(f"F{i:03d}", pid, f"FCA{pid}", per, int(rng.integers(0, 900)), etd=etd))
    return make_instance(fcas, pcas, arcs, paths, caps, tree, flights, active, padding,
                         costs=(1.0, float(rng.choice([1.5, 2.0, 3.0]))))


# -- allocation oracle ----------------------------------------------------------------

def random_flights(rng, n):
    fl = []
    for i in range(n):
        opts = []
        for k in range(int(rng.integers(1, 4))):
            t0 = float(rng.integers(-600, 4 * 900))
            fcas = ("FCA1",) if rng.random() < 0.5 else ("FCA2",)
            times = (t0,)
            if rng.random() < 0.3:
                fcas = fcas + (("FCA2",) if fcas == ("FCA1",) else ("FCA1",))
                times = (t0, t0 + float(rng.integers(60, 1800)))
            opts.append(TrajectoryOption(int(rng.integers(1, 3)), fcas, times,
                                         0.0 if k == 0 else float(rng.integers(0, 40))))
        fl.append(Flight(f"F{i:03d}", opts[0].fca_arrival_times[0] - 1800, tuple(opts), bool(rng.random() < 0.2)))
    return fl


def brute_price(opt, state, times, program):
    """Independent pricing: scan every slot of the first controlled FCA."""
    cr = [(r, x) for r, x in zip(opt.fcas, opt.fca_arrival_times) if r in program.windows and x >= program.start]
    if not cr:
        return 0.0
    r, x = cr[0]
    free = [t for t, s in zip(times[r], state[r]) if s == FREE and t >= x - 1e-6]
    return min(free) - x if free else math.inf


def replay_check(program, flights, slots, res):
    by_id = {f.id: f for f in flights}
    state = {r: np.zeros_like(s) for r, s in slots.state.items()}
    times = slots.times
    seen_nonexempt = False
    for fid in res.order:
        a = res[fid]
        f = by_id[fid]
        if a.status is Inclusion.EXEMPT:
            assert not seen_nonexempt, "exempt flight processed after a controlled one"
        else:
            seen_nonexempt = True
            costs = [brute_price(o, state, times, program) / 60.0 + o.relative_cost for o in f.tos]
            best = min(costs)
            assert abs(costs[a.option] - best) <= 1e-9
            assert a.option == next(k for k, c in enumerate(costs) if c <= best + 1e-9)
        if a.slot_time is not None:
            idx = int(np.nonzero(times[a.fca] == a.slot_time)[0][0])
            assert state[a.fca][idx] == FREE
            state[a.fca][idx] = ASSIGNED
        for r, t in a.marked:
            idx = int(np.nonzero(times[r] == t)[0][0])
            assert state[r][idx] == FREE
            state[r][idx] = MARKED
    # IAT order within each class
    for cls in (Inclusion.EXEMPT, Inclusion.INCLUDED):
        keys = [(initial_arrival_time(by_id[f], program), f) for f in res.order if res[f].status is cls]
        assert keys == sorted(keys)
    for r in state:
        assert np.array_equal(state[r], res.slots.state[r])


# -- oracles ------------------------------------------------------------------------

def vertex_enumeration(model: MathModel) -> float | None:
    """Minimum objective over all basic feasible points of a small bounded LP."""
    A, lo, hi = model.matrix()
    A = A.toarray()
    lb, ub = model.bounds()
    n = model.n_vars
    rows, rhs = [], []
    for i in range(A.shape[0]):
        if np.isfinite(hi[i]):
            rows.append(A[i]); rhs.append(hi[i])
        if np.isfinite(lo[i]) and lo[i] != hi[i]:
            rows.append(-A[i]); rhs.append(-lo[i])
        elif np.isfinite(lo[i]) and lo[i] == hi[i]:
            rows.append(-A[i]); rhs.append(-lo[i])
    for j in range(n):
        e = np.zeros(n); e[j] = 1.0
        if np.isfinite(ub[j]):
            rows.append(e); rhs.append(ub[j])
        if np.isfinite(lb[j]):
            rows.append(-e); rhs.append(-lb[j])
    G, h = np.array(rows), np.array(rhs)
    c = model.objective_vector()
    best = None
    for idx in itertools.combinations(range(G.shape[0]), n):
        sub = G[list(idx)]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        x = np.linalg.solve(sub, h[list(idx)])
        if np.all(G @ x <= h + 1e-7):
            v = float(c @ x) + model.objective_constant
            best = v if best is None else min(best, v)
    return best


def lattice_enumeration(model: MathModel) -> float | None:
    """Minimum objective over all integer points of a small box (pure-integer MIP)."""
    lb, ub = model.bounds()
    axes = [np.arange(int(np.ceil(l)), int(np.floor(u)) + 1) for l, u in zip(lb, ub)]
    X = np.array(np.meshgrid(*axes, indexing="ij")).reshape(len(axes), -1).astype(float)
    A, lo, hi = model.matrix()
    act = A @ X if model.n_cons else np.zeros((0, X.shape[1]))
    ok = np.all((act >= lo[:, None] - 1e-9) & (act <= hi[:, None] + 1e-9), axis=0)
    if not ok.any():
        return None
    vals = model.objective_vector() @ X[:, ok] + model.objective_constant
    return float(vals.min())


def fcfs_queue(arrivals, capacity) -> int:
    """Independent FCFS queue: aircraft-periods spent waiting."""
    waiting = []
    total = 0
    for t, (a, c) in enumerate(zip(arrivals, capacity)):
        waiting.extend([t] * int(a))
        served = min(len(waiting), int(c))
        waiting = waiting[served:]
        total += len(waiting)
    assert not waiting, "queue not drained"
    return total


def check_pca_solution(sol, instance, conserve=True):
    """Capacity, terminal-hold and conservation checks; returns a list of problems."""
    problems = []
    load = pca_load(sol, instance)
    caps = instance.capacities.values
    if np.any(load > caps + 1e-7):
        problems.append("capacity exceeded")
    meta = sol.model.meta
    T = instance.T
    for (pid, i, t, q), j in meta["holds"].items():
        if t == T and abs(sol.values[j]) > 1e-7:
            problems.append(f"terminal hold on path {pid}")
    if conserve:
        from ctoprates.stoch import path_flow_totals
        for (pid, q), (landed, sched) in path_flow_totals(sol, instance).items():
            if abs(landed - sched) > 1e-6:
                problems.append(f"path {pid} scenario {q}: landed {landed} vs scheduled {sched}")
    return problems


def check_flow_result(res, instance):
    problems = []
    if np.any(res.load > instance.capacities.values + 1e-7):
        problems.append("capacity exceeded")
    for (pid, i, t, q), v in res.holds.items():
        if t == instance.T and v > 1e-7:
            problems.append(f"terminal hold on path {pid}")
    for (pid, q), (landed, sched) in res.landed(instance).items():
        if abs(landed - sched) > 1e-6:
            problems.append(f"path {pid} scenario {q}: landed {landed} vs scheduled {sched}")
    return problems


def random_lp(rng: np.random.Generator, integer=False, max_vars=5, max_cons=6, box=5, min_vars=2):
    """Small random model on a box with mixed-sense constraints.

    Right-hand sides are set around a random lattice point so most draws are
    feasible; a few are made infeasible on purpose.
    """
    n = int(rng.integers(min_vars, max_vars + 1))
    m = MathModel("rand")
    ub = rng.integers(1, box + 1, size=n)
    for j in range(n):
        m.add_var(f"x{j}", 0, float(ub[j]), integer=integer, obj=float(rng.integers(-5, 6)))
    x0 = np.array([rng.integers(0, u + 1) for u in ub], dtype=float)
    broken = rng.random() < 0.15
    for i in range(int(rng.integers(1, max_cons + 1))):
        coeffs = {j: float(rng.integers(-3, 4)) for j in range(n) if rng.random() < 0.7}
        act = sum(c * x0[j] for j, c in coeffs.items())
        sense = str(rng.choice(["<=", ">=", "="], p=[0.6, 0.3, 0.1]))
        slack = float(rng.integers(0, 3))
        rhs = act + slack if sense == "<=" else act - slack if sense == ">=" else act
        m.add_constr(coeffs, sense, rhs)
    if broken:
        m.add_constr({0: 1.0}, ">=", float(ub[0]) + 1)
    return m
