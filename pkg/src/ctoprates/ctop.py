"""Lightweight CTOP: slots, TOS allocation and stochastic flow simulation.

The pipeline :func:`evaluate_rates` turns a :class:`RatePlan` into a cost:

1. :func:`create_slots` spreads each period's rate evenly over 15 minutes;
2. :func:`allocate_tos` hands out slots (exempt flights first, then IAT order),
   picking for each flight the option with the lowest adjusted cost;
3. :func:`flow_simulate` pushes the resulting path arrivals through the PCA
   capacity scenarios and prices the air holding.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .lp import MathModel, solve
from .network import PERIOD_SECONDS, Flight, Instance, TrajectoryOption
from .rates import RatePlan

FREE, ASSIGNED, MARKED = 0, 1, 2


class AllocationOverflow(RuntimeError):
    """No slot is left for a flight inside the padded horizon."""

    def __init__(self, flight_id: str, message: str = ""):
        super().__init__(message or f"no feasible slot for flight {flight_id}")
        self.flight_id = flight_id


class FlowSimError(RuntimeError):
    pass


class Inclusion(str, Enum):
    INCLUDED = "included"
    EXEMPT = "exempt"
    EXCLUDED = "excluded"


# -- slots ----------------------------------------------------------------------

def slot_offsets(rate: int) -> list[int]:
    """round((i-1)*900/P), i = 1..P, with halves rounded up (exact integers)."""
    P = int(rate)
    return [(2 * (i - 1) * PERIOD_SECONDS + P) // (2 * P) for i in range(1, P + 1)]


@dataclass
class SlotTable:
    """Mutable per-FCA slot lists in time order.

    ``state`` is FREE / ASSIGNED / MARKED; ``owner`` holds a flight id or ``""``.
    """

    resources: tuple[str, ...]
    start: float
    times: dict[str, np.ndarray]
    periods: dict[str, np.ndarray]
    offsets: dict[str, np.ndarray]
    state: dict[str, np.ndarray]
    owner: dict[str, list[str]]

    def copy(self) -> "SlotTable":
        return SlotTable(self.resources, self.start, self.times, self.periods, self.offsets,
                         {r: s.copy() for r, s in self.state.items()},
                         {r: list(o) for r, o in self.owner.items()})

    def first_free(self, fca: str, not_before: float, max_period: int | None = None) -> int | None:
        """Index of the earliest free slot at or after ``not_before``."""
        times = self.times[fca]
        state = self.state[fca]
        i = bisect.bisect_left(times, not_before - 1e-6)
        while i < len(times):
            if max_period is not None and self.periods[fca][i] > max_period:
                return None
            if state[i] == FREE:
                return i
            i += 1
        return None

    def take(self, fca: str, idx: int, flight_id: str, how: int = ASSIGNED):
        if self.state[fca][idx] != FREE:
            raise ValueError(f"slot {fca}[{idx}] already owned by {self.owner[fca][idx]}")
        self.state[fca][idx] = how
        self.owner[fca][idx] = flight_id

    def counts(self, fca: str, period: int) -> tuple[int, int, int]:
        """(assigned, marked, free) slots of an FCA period."""
        sel = self.periods[fca] == period
        st = self.state[fca][sel]
        return int(np.sum(st == ASSIGNED)), int(np.sum(st == MARKED)), int(np.sum(st == FREE))

    def dump(self) -> list[tuple[str, int, int, float, str, str]]:
        """Rows (fca, period, offset, time, state, owner) for auditing."""
        names = {FREE: "free", ASSIGNED: "assigned", MARKED: "marked"}
        rows = []
        for r in self.resources:
            for i in range(len(self.times[r])):
                rows.append((r, int(self.periods[r][i]), int(self.offsets[r][i]),
                             float(self.times[r][i]), names[int(self.state[r][i])], self.owner[r][i]))
        return rows


def create_slots(rates: RatePlan, start: float = 0.0) -> SlotTable:
    """Evenly spaced slots for every FCA period; period 1 begins at ``start``."""
    times, periods, offsets, state, owner = {}, {}, {}, {}, {}
    for r in rates.resources:
        tt, pp, oo = [], [], []
        for t, P in enumerate(rates.row(r), start=1):
            for off in slot_offsets(int(P)):
                tt.append(start + (t - 1) * PERIOD_SECONDS + off)
                pp.append(t)
                oo.append(off)
        times[r] = np.asarray(tt, dtype=float)
        periods[r] = np.asarray(pp, dtype=np.int64)
        offsets[r] = np.asarray(oo, dtype=np.int64)
        state[r] = np.zeros(len(tt), dtype=np.int8)
        owner[r] = [""] * len(tt)
    return SlotTable(tuple(rates.resources), float(start), times, periods, offsets, state, owner)


# -- program and inclusion ---------------------------------------------------------

@dataclass(frozen=True)
class Program:
    """A CTOP: controlled FCAs with their active windows ``[begin, end)`` in seconds."""

    windows: dict
    start: float
    T: int

    @property
    def fcas(self) -> tuple[str, ...]:
        return tuple(self.windows)

    @classmethod
    def from_instance(cls, instance: Instance) -> "Program":
        h = instance.horizon
        end = h.start + h.active * PERIOD_SECONDS
        return cls({r: (h.start, end) for r in instance.fcas}, h.start, h.total)

    def active(self, fca: str, time: float) -> bool:
        w = self.windows.get(fca)
        return w is not None and w[0] <= time < w[1]


def determine_inclusion(flight: Flight, program: Program) -> Inclusion:
    crosses = any(program.active(r, x)
                  for opt in flight.tos for r, x in zip(opt.fcas, opt.fca_arrival_times))
    if not crosses:
        return Inclusion.EXCLUDED
    return Inclusion.EXEMPT if flight.exempt else Inclusion.INCLUDED


def initial_arrival_time(flight: Flight, program: Program) -> float:
    """Earliest unimpeded arrival at any program FCA over all options."""
    times = [x for opt in flight.tos for r, x in zip(opt.fcas, opt.fca_arrival_times)
             if r in program.windows]
    return min(times) if times else math.inf


# -- allocation ----------------------------------------------------------------

@dataclass(frozen=True)
class FlightAllocation:
    flight_id: str
    status: Inclusion
    option: int
    path: int
    fca: str | None
    slot_time: float | None
    slot_period: int | None
    slot_offset: int | None
    marked: tuple[tuple[str, float], ...]
    ground_delay_s: float
    relative_cost: float

    @property
    def ground_delay_min(self) -> float:
        return self.ground_delay_s / 60.0


@dataclass
class AllocationResult:
    flights: list[FlightAllocation]
    slots: SlotTable
    order: list[str] = field(default_factory=list)

    def __getitem__(self, flight_id: str) -> FlightAllocation:
        for a in self.flights:
            if a.flight_id == flight_id:
                return a
        raise KeyError(flight_id)

    def controlled(self) -> list[FlightAllocation]:
        return [a for a in self.flights if a.status is Inclusion.INCLUDED]

    @property
    def ground_delay_periods(self) -> float:
        return sum(a.ground_delay_s for a in self.controlled()) / PERIOD_SECONDS

    @property
    def reroute_minutes(self) -> float:
        return sum(a.relative_cost for a in self.controlled())


def _program_crossings(opt: TrajectoryOption, program: Program):
    """(fca, unimpeded time) for each crossing of a program FCA, in route order."""
    return [(r, x) for r, x in zip(opt.fcas, opt.fca_arrival_times) if r in program.windows]


def price_option(opt: TrajectoryOption, slots: SlotTable, program: Program,
                 max_period: int | None = None) -> tuple[float, int | None, str | None]:
    """(ground delay seconds, slot index, fca) against the current slot table.

    Options that never cross a program FCA at or after program start need no
    slot. Returns ``(inf, None, fca)`` when no slot is left.
    """
    crossings = [(r, x) for r, x in _program_crossings(opt, program) if x >= program.start]
    if not crossings:
        return 0.0, None, None
    fca, x = crossings[0]
    idx = slots.first_free(fca, x, max_period)
    if idx is None:
        return math.inf, None, fca
    return float(slots.times[fca][idx] - x), idx, fca


def _max_slot_period(instance: Instance | None, opt: TrajectoryOption) -> int | None:
    # the delayed flight must still reach its first PCA inside the horizon
    if instance is None:
        return None
    return instance.T - instance.entry_lag(instance.path(opt.path))


def allocate_tos(program: Program, flights: Iterable[Flight], slots: SlotTable,
                 instance: Instance | None = None, reroute_weight: float = 1.0) -> AllocationResult:
    """Assign each flight a trajectory option and slot.

    Exempt flights go first in IAT order on their preferred option and occupy
    the earliest free slot at or after their arrival without being delayed;
    when none is left they fly unslotted. Non-exempt flights then follow in
    IAT order (ties by id) and take the option minimising
    ``delay minutes + reroute_weight * relative cost`` (ties by option order).
    Downstream program FCAs on the chosen route get the first free slot at or
    after the delayed crossing marked.
    """
    slots = slots.copy()
    flights = list(flights)
    status = {f.id: determine_inclusion(f, program) for f in flights}
    key = lambda f: (initial_arrival_time(f, program), f.id)  # noqa: E731
    exempt = sorted((f for f in flights if status[f.id] is Inclusion.EXEMPT), key=key)
    controlled = sorted((f for f in flights if status[f.id] is Inclusion.INCLUDED), key=key)
    out: list[FlightAllocation] = []
    order: list[str] = []

    for f in exempt:
        opt = f.tos[0]
        delay, idx, fca = price_option(opt, slots, program)
        slot = None
        if idx is not None:
            slots.take(fca, idx, f.id)
            slot = (float(slots.times[fca][idx]), int(slots.periods[fca][idx]), int(slots.offsets[fca][idx]))
        out.append(FlightAllocation(f.id, Inclusion.EXEMPT, 0, opt.path, fca if slot else None,
                                    *(slot or (None, None, None)), (), 0.0, 0.0))
        order.append(f.id)

    for f in controlled:
        best = None
        for k, opt in enumerate(f.tos):
            delay, idx, fca = price_option(opt, slots, program, _max_slot_period(instance, opt))
            if not math.isfinite(delay):
                continue
            cost = delay / 60.0 + reroute_weight * opt.relative_cost
            if best is None or cost < best[0] - 1e-9:
                best = (cost, k, delay, idx, fca)
        if best is None:
            raise AllocationOverflow(f.id)
        _, k, delay, idx, fca = best
        opt = f.tos[k]
        slot = (None, None, None)
        if idx is not None:
            slots.take(fca, idx, f.id)
            slot = (float(slots.times[fca][idx]), int(slots.periods[fca][idx]), int(slots.offsets[fca][idx]))
        marked = []
        crossings = _program_crossings(opt, program)
        after = False
        for r, x in crossings:
            if r == fca and not after:
                after = True
                continue
            if not after or x < program.start:
                continue
            j = slots.first_free(r, x + delay)
            if j is None:
                raise AllocationOverflow(f.id, f"no slot left to mark at {r} for flight {f.id}")
            slots.take(r, j, f.id, MARKED)
            marked.append((r, float(slots.times[r][j])))
        out.append(FlightAllocation(f.id, Inclusion.INCLUDED, k, opt.path, fca, *slot, tuple(marked),
                                    delay, opt.relative_cost))
        order.append(f.id)

    for f in flights:
        if status[f.id] is Inclusion.EXCLUDED:
            opt = f.tos[0]
            out.append(FlightAllocation(f.id, Inclusion.EXCLUDED, 0, opt.path, None, None, None, None,
                                        (), 0.0, 0.0))
    return AllocationResult(out, slots, order)


def scheduled_path_demand(allocation: AllocationResult, instance: Instance,
                          flights: Sequence[Flight] | None = None) -> dict[int, np.ndarray]:
    """Post-allocation arrivals of non-exempt flights at each path's first PCA.

    Excluded flights keep their preferred, undelayed option and are counted
    when they reach a PCA inside the horizon.
    """
    flights = instance.flights if flights is None else flights
    by_id = {f.id: f for f in flights}
    T = instance.T
    S = {p.id: np.zeros(T, dtype=np.int64) for p in instance.paths}
    for a in allocation.flights:
        if a.status is Inclusion.EXEMPT:
            continue
        opt = by_id[a.flight_id].tos[a.option]
        path = instance.path(opt.path)
        t = instance.horizon.period_of(opt.fca_arrival_times[0] + a.ground_delay_s) + instance.entry_lag(path)
        if a.status is Inclusion.EXCLUDED and not 1 <= t <= T:
            continue  # never enters the program horizon
        if not 1 <= t <= T:
            raise AllocationOverflow(a.flight_id, f"flight {a.flight_id} reaches its PCA outside the horizon")
        S[path.id][t - 1] += 1
    return S


# -- flow simulation --------------------------------------------------------------

@dataclass
class FlowSimResult:
    expected_cost: float
    air_periods: np.ndarray                 # per scenario
    load: np.ndarray                        # (PCA, T, Q) crossings summed over paths
    holds: dict                             # (path, node index, t, q) -> A
    crossings: dict                         # (path, node index, t, q) -> L
    arrivals: dict[int, np.ndarray]
    runtime: float = 0.0

    def landed(self, instance: Instance) -> dict[tuple[int, int], tuple[float, float]]:
        """``{(path, scenario): (landed at the final PCA, scheduled)}``."""
        out = {}
        for path in instance.paths:
            last = len(path.nodes) - 1
            for q in range(self.air_periods.size):
                got = sum(self.crossings.get((path.id, last, t, q), 0.0) for t in range(1, instance.T + 1))
                out[path.id, q] = (float(got), float(self.arrivals.get(path.id, np.zeros(1)).sum()))
        return out


def simulate_arrivals(arrivals: dict[int, np.ndarray], instance: Instance,
                      backend: str = "highs") -> FlowSimResult:
    """Minimum air holding for fixed first-PCA arrivals, solved scenario by scenario."""
    from .stoch import _recourse  # shared recourse block

    T = instance.T
    tree = instance.scenario_tree
    Q = tree.n_scenarios
    pcas = instance.capacities.resources
    air = np.zeros(Q)
    load = np.zeros((len(pcas), T, Q))
    holds, crossings = {}, {}
    runtime = 0.0
    N = float(max(1, sum(int(np.sum(v)) for v in arrivals.values())))
    paths = [p for p in instance.paths if np.sum(arrivals.get(p.id, 0)) > 0]
    for q in range(Q):
        m = MathModel(f"flowsim-{q + 1}")
        inflow = lambda path, t, q: ({}, float(arrivals[path.id][t - 1]))  # noqa: E731
        L, A = _recourse(m, instance, inflow, [q], N, paths)
        for j in A.values():
            m.objective[j] = 1.0
        if m.n_vars == 0:
            continue
        sol = solve(m, backend)
        if not sol.optimal:
            raise FlowSimError(f"flow simulation {sol.status} in scenario {q + 1}")
        runtime += sol.runtime
        x = np.round(sol.values)
        air[q] = float(sum(x[j] for j in A.values()))
        for key, j in L.items():
            crossings[key] = float(x[j])
            k = instance.path(key[0]).nodes[key[1]]
            load[pcas.index(k), key[2] - 1, q] += x[j]
        for key, j in A.items():
            holds[key] = float(x[j])
    cost = instance.costs.air * float(np.asarray(tree.probabilities) @ air)
    return FlowSimResult(cost, air, load, holds, crossings, dict(arrivals), runtime)


def flow_simulate(allocation: AllocationResult, instance: Instance, backend: str = "highs") -> FlowSimResult:
    """Price air holding of the allocated (non-exempt) flights under every scenario."""
    return simulate_arrivals(scheduled_path_demand(allocation, instance), instance, backend)


def fcfs_holding(arrivals: Sequence[int], capacity: Sequence[int]) -> int:
    """Total queue-periods of a first-come-first-served single server queue."""
    queue = total = 0
    for a, c in zip(arrivals, capacity):
        queue = max(0, queue + int(a) - int(c))
        total += queue
    if queue:
        raise FlowSimError("queue not empty at end of horizon")
    return total


# -- the simulation objective ------------------------------------------------------

@dataclass
class RateEvaluation:
    ground: float
    reroute: float
    air: float
    allocation: AllocationResult
    flow: FlowSimResult

    @property
    def total(self) -> float:
        return self.ground + self.reroute + self.air


def evaluate_rates(rates: RatePlan, instance: Instance, backend: str = "highs",
                   reroute_weight: float = 1.0) -> RateEvaluation:
    """Slots -> TOS allocation -> flow simulation; the cost seen by the optimizer.

    ground = c_g * ground-delay periods, reroute = c_g * relative cost / 15 min,
    air = expected c_a * air-holding periods.
    """
    program = Program.from_instance(instance)
    slots = create_slots(rates, instance.horizon.start)
    alloc = allocate_tos(program, instance.flights, slots, instance, reroute_weight)
    flow = flow_simulate(alloc, instance, backend)
    cg = instance.costs.ground
    return RateEvaluation(cg * alloc.ground_delay_periods, cg * alloc.reroute_minutes / 15.0,
                          flow.expected_cost, alloc, flow)
