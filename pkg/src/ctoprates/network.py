"""Domain model: resources, the FCA-PCA network, paths, scenario trees, flights.

All containers are frozen dataclasses; numeric tables are numpy arrays that
are marked read-only on construction so an :class:`Instance` can be shared
freely between threads.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

PERIOD_SECONDS = 900
TOL = 1e-9


class ResourceKind(str, Enum):
    FCA = "FCA"
    PCA = "PCA"


class DemandError(ValueError):
    """A flight cannot be placed on the padded planning horizon."""

    def __init__(self, flight_id: str, message: str):
        super().__init__(f"flight {flight_id}: {message}")
        self.flight_id = flight_id


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Resource:
    id: str
    kind: ResourceKind

    @property
    def is_fca(self) -> bool:
        return self.kind is ResourceKind.FCA


@dataclass(frozen=True)
class NetworkArc:
    """Directed link ``source -> target`` with a travel time in periods.

    ``split_ratio`` is optional; when omitted it is derived from flight data
    (see :func:`derive_split_ratios`).
    """

    source: str
    target: str
    travel_time: int = 0
    split_ratio: np.ndarray | None = None

    def __post_init__(self):
        if self.travel_time < 0:
            raise ValueError(f"arc {self.source}->{self.target}: negative travel time")
        if self.split_ratio is not None:
            object.__setattr__(self, "split_ratio", _frozen(self.split_ratio))

    @property
    def key(self) -> tuple[str, str]:
        return (self.source, self.target)


@dataclass(frozen=True)
class Branch:
    """Scenarios that cannot yet be told apart during ``stage`` (1-based)."""

    stage: int
    scenarios: tuple[int, ...]


@dataclass(frozen=True)
class ScenarioTree:
    probabilities: tuple[float, ...]
    stage_starts: tuple[int, ...] = (1,)
    branches: tuple[Branch, ...] = ()
    names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "probabilities", tuple(float(p) for p in self.probabilities))
        object.__setattr__(self, "stage_starts", tuple(int(t) for t in self.stage_starts))
        if not self.branches:
            # single-stage default: everything shares one branch per stage
            everyone = tuple(range(len(self.probabilities)))
            object.__setattr__(
                self, "branches",
                tuple(Branch(s + 1, everyone) for s in range(len(self.stage_starts))))
        if not self.names:
            object.__setattr__(
                self, "names", tuple(f"Scen{q + 1}" for q in range(len(self.probabilities))))

    @property
    def n_scenarios(self) -> int:
        return len(self.probabilities)

    @property
    def n_stages(self) -> int:
        return len(self.stage_starts)

    def stage_of_period(self, t: int) -> int:
        """1-based stage containing period ``t`` (periods before t_1 map to stage 1)."""
        s = 1
        for k, start in enumerate(self.stage_starts, start=1):
            if t >= start:
                s = k
        return s

    def branches_at(self, stage: int) -> list[tuple[int, ...]]:
        return [b.scenarios for b in self.branches if b.stage == stage]

    @classmethod
    def single(cls) -> "ScenarioTree":
        return cls(probabilities=(1.0,))


@dataclass(frozen=True)
class CapacityProfile:
    """``values[pca_index, t - 1, q]`` for every PCA, padded period and scenario."""

    resources: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "resources", tuple(self.resources))
        object.__setattr__(self, "values", _frozen(self.values, dtype=np.int64))
        if self.values.ndim != 3 or self.values.shape[0] != len(self.resources):
            raise ValueError("capacity array must be (resource, period, scenario)")

    def index(self, resource: str) -> int:
        return self.resources.index(resource)

    def get(self, resource: str, period: int, scenario: int) -> int:
        return int(self.values[self.index(resource), period - 1, scenario])

    def of(self, resource: str) -> np.ndarray:
        """(period, scenario) slice for one PCA."""
        return self.values[self.index(resource)]

    def nominal(self, resource: str) -> np.ndarray:
        return self.of(resource).max(axis=1)


@dataclass(frozen=True)
class Path:
    id: int
    nodes: tuple[str, ...]
    entry_fca: str

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))


@dataclass(frozen=True)
class TrajectoryOption:
    """One route in a flight's TOS.

    ``fca_arrival_times`` are unimpeded crossing times (seconds) at ``fcas``,
    in crossing order. ``relative_cost`` is in minutes.
    """

    path: int
    fcas: tuple[str, ...]
    fca_arrival_times: tuple[float, ...]
    relative_cost: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "fcas", tuple(self.fcas))
        object.__setattr__(self, "fca_arrival_times", tuple(float(x) for x in self.fca_arrival_times))


@dataclass(frozen=True)
class Flight:
    id: str
    etd: float
    tos: tuple[TrajectoryOption, ...]
    exempt: bool = False

    def __post_init__(self):
        object.__setattr__(self, "tos", tuple(self.tos))


@dataclass(frozen=True)
class Horizon:
    active: int
    padding: int
    start: float = 0.0

    @property
    def total(self) -> int:
        return self.active + self.padding

    def period_of(self, seconds: float) -> int:
        """1-based period containing ``seconds``; may fall outside 1..total."""
        return int(math.floor((seconds - self.start) / PERIOD_SECONDS)) + 1

    def period_start(self, t: int) -> float:
        return self.start + PERIOD_SECONDS * (t - 1)

    def labels(self) -> list[str]:
        out = []
        for t in range(1, self.total + 1):
            sec = int(self.period_start(t)) % 86400
            out.append(f"{sec // 3600:02d}:{(sec % 3600) // 60:02d}")
        return out


@dataclass(frozen=True)
class CostParams:
    ground: float = 1.0
    air: float = 2.0


@dataclass(frozen=True)
class Instance:
    resources: tuple[Resource, ...]
    arcs: tuple[NetworkArc, ...]
    paths: tuple[Path, ...]
    scenario_tree: ScenarioTree
    capacities: CapacityProfile
    flights: tuple[Flight, ...]
    horizon: Horizon
    costs: CostParams = field(default_factory=CostParams)
    name: str = "instance"

    def __post_init__(self):
        for name in ("resources", "arcs", "paths", "flights"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    # -- lookups ------------------------------------------------------------
    @property
    def fcas(self) -> list[str]:
        return [r.id for r in self.resources if r.kind is ResourceKind.FCA]

    @property
    def pcas(self) -> list[str]:
        return [r.id for r in self.resources if r.kind is ResourceKind.PCA]

    @property
    def T(self) -> int:
        return self.horizon.total

    def kind_of(self, rid: str) -> ResourceKind:
        for r in self.resources:
            if r.id == rid:
                return r.kind
        raise KeyError(rid)

    def arc(self, source: str, target: str) -> NetworkArc:
        for a in self.arcs:
            if a.source == source and a.target == target:
                return a
        raise KeyError((source, target))

    def out_arcs(self, rid: str) -> list[NetworkArc]:
        return [a for a in self.arcs if a.source == rid]

    def in_arcs(self, rid: str) -> list[NetworkArc]:
        return [a for a in self.arcs if a.target == rid]

    def path(self, pid: int) -> Path:
        for p in self.paths:
            if p.id == pid:
                return p
        raise KeyError(pid)

    def entry_lag(self, path: Path) -> int:
        """Travel periods from the path's entry FCA to its first PCA."""
        return travel_time_between(self.arcs, path.entry_fca, path.nodes[0])

    def fca_pca(self, fca: str) -> str:
        """The PCA an FCA meters, i.e. the first node of the FCA's paths."""
        for p in self.paths:
            if p.entry_fca == fca:
                return p.nodes[0]
        for a in self.out_arcs(fca):
            if self.kind_of(a.target) is ResourceKind.PCA:
                return a.target
        raise KeyError(f"FCA {fca} controls no PCA")

    def with_flights(self, flights: Iterable[Flight]) -> "Instance":
        return _replace(self, flights=tuple(flights))

    def with_costs(self, ground: float | None = None, air: float | None = None) -> "Instance":
        return _replace(self, costs=CostParams(
            self.costs.ground if ground is None else ground,
            self.costs.air if air is None else air))

    def with_probabilities(self, probs: Sequence[float]) -> "Instance":
        tree = self.scenario_tree
        return _replace(self, scenario_tree=ScenarioTree(
            tuple(probs), tree.stage_starts, tree.branches, tree.names))


def _replace(obj, **changes):
    from dataclasses import replace
    return replace(obj, **changes)


def travel_time_between(arcs: Iterable[NetworkArc], source: str, target: str) -> int:
    """Shortest chain of travel times from ``source`` to ``target`` (0 if equal)."""
    if source == target:
        return 0
    adj = defaultdict(list)
    for a in arcs:
        adj[a.source].append(a)
    best = {source: 0}
    frontier = [source]
    while frontier:
        nxt = []
        for u in frontier:
            for a in adj[u]:
                d = best[u] + a.travel_time
                if a.target not in best or d < best[a.target]:
                    best[a.target] = d
                    nxt.append(a.target)
        frontier = nxt
    if target not in best:
        raise KeyError(f"no arc chain {source} -> {target}")
    return best[target]


def longest_chain(arcs: Sequence[NetworkArc]) -> int:
    """Longest travel-time sum over any directed walk (graph assumed acyclic)."""
    order = _topological_order(arcs)
    if order is None:
        return math.inf
    dist = {n: 0 for n in order}
    for n in order:
        for a in arcs:
            if a.source == n:
                dist[a.target] = max(dist[a.target], dist[n] + a.travel_time)
    return max(dist.values(), default=0)


def _topological_order(arcs: Sequence[NetworkArc]) -> list[str] | None:
    nodes = sorted({a.source for a in arcs} | {a.target for a in arcs})
    indeg = {n: 0 for n in nodes}
    for a in arcs:
        indeg[a.target] += 1
    ready = [n for n in nodes if indeg[n] == 0]
    order = []
    while ready:
        n = ready.pop(0)
        order.append(n)
        for a in arcs:
            if a.source == n:
                indeg[a.target] -= 1
                if indeg[a.target] == 0:
                    ready.append(a.target)
    return order if len(order) == len(nodes) else None


# -- validation -------------------------------------------------------------

@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, msg: str):
        self.violations.append(msg)

    def __iter__(self):
        return iter(self.violations)

    def __len__(self):
        return len(self.violations)

    def __bool__(self):
        return bool(self.violations)


def validate_instance(instance: Instance) -> ValidationReport:
    """Collect every structural problem of ``instance``; never raises."""
    rep = ValidationReport()
    ids = [r.id for r in instance.resources]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    for d in dupes:
        rep.add(f"duplicate resource id {d}")
    kinds = {r.id: r.kind for r in instance.resources}
    T = instance.T

    _check_tree(instance, rep)

    # arcs
    for a in instance.arcs:
        for end in (a.source, a.target):
            if end not in kinds:
                rep.add(f"arc {a.source}->{a.target} references unknown resource {end}")
        if kinds.get(a.source) is ResourceKind.PCA and kinds.get(a.target) is ResourceKind.FCA:
            rep.add(f"arc {a.source}->{a.target} leads from a PCA back to an FCA")
        if a.split_ratio is not None:
            if a.split_ratio.shape != (T,):
                rep.add(f"arc {a.source}->{a.target} split ratio has {a.split_ratio.shape[0]} periods, expected {T}")
            elif np.any(a.split_ratio < -TOL) or np.any(a.split_ratio > 1 + TOL):
                rep.add(f"arc {a.source}->{a.target} split ratio outside [0, 1]")
    if _topological_order(list(instance.arcs)) is None:
        rep.add("network contains a directed cycle")
    for rid in ids:
        outs = [a for a in instance.out_arcs(rid) if a.split_ratio is not None]
        if not outs or any(a.split_ratio.shape != (T,) for a in outs):
            continue
        if len(outs) != len(instance.out_arcs(rid)):
            rep.add(f"resource {rid}: split ratios given on some but not all outgoing arcs")
            continue
        total = np.sum([a.split_ratio for a in outs], axis=0)
        for t in np.nonzero(np.abs(total - 1.0) > TOL)[0]:
            rep.add(f"resource {rid} period {t + 1}: split ratios sum to {total[t]:.6g}")

    # capacities
    cap = instance.capacities
    for pca in instance.pcas:
        if pca not in cap.resources:
            rep.add(f"PCA {pca} has no capacity profile")
    if cap.values.shape[1:] != (T, instance.scenario_tree.n_scenarios):
        rep.add(f"capacity table shape {cap.values.shape[1:]} does not cover "
                f"{T} periods x {instance.scenario_tree.n_scenarios} scenarios")
    elif np.any(cap.values < 0):
        rep.add("negative capacity")

    # padding
    chain = longest_chain(list(instance.arcs))
    if chain != math.inf and instance.horizon.padding < chain:
        rep.add(f"padding {instance.horizon.padding} shorter than longest travel chain {chain}")

    # paths
    arcset = {a.key for a in instance.arcs}
    pids = [p.id for p in instance.paths]
    for d in sorted({i for i in pids if pids.count(i) > 1}):
        rep.add(f"duplicate path id {d}")
    for p in instance.paths:
        if not p.nodes:
            rep.add(f"path {p.id} is empty")
            continue
        for n in p.nodes:
            if kinds.get(n) is not ResourceKind.PCA:
                rep.add(f"path {p.id} node {n} is not a PCA")
        for u, v in zip(p.nodes, p.nodes[1:]):
            if (u, v) not in arcset:
                rep.add(f"path {p.id}: no arc {u}->{v}")
        if kinds.get(p.entry_fca) is not ResourceKind.FCA:
            rep.add(f"path {p.id} entry {p.entry_fca} is not an FCA")
        else:
            try:
                travel_time_between(instance.arcs, p.entry_fca, p.nodes[0])
            except KeyError:
                rep.add(f"path {p.id}: entry FCA {p.entry_fca} is not upstream of {p.nodes[0]}")

    # flights
    known_paths = set(pids)
    for f in instance.flights:
        if not f.tos:
            rep.add(f"flight {f.id} has an empty TOS")
            continue
        if f.tos[0].relative_cost != 0:
            rep.add(f"flight {f.id}: first option must have relative cost 0")
        for k, opt in enumerate(f.tos):
            if opt.path not in known_paths:
                rep.add(f"flight {f.id} option {k} references unknown path {opt.path}")
            if len(opt.fcas) != len(opt.fca_arrival_times) or not opt.fcas:
                rep.add(f"flight {f.id} option {k}: FCA crossings malformed")
            elif any(b <= a for a, b in zip(opt.fca_arrival_times, opt.fca_arrival_times[1:])):
                rep.add(f"flight {f.id} option {k}: arrival times not strictly increasing")
            if opt.relative_cost < 0:
                rep.add(f"flight {f.id} option {k}: negative relative cost")
            for fca in opt.fcas:
                if kinds.get(fca) is not ResourceKind.FCA:
                    rep.add(f"flight {f.id} option {k} crosses unknown FCA {fca}")

    # demand consistency
    if rep.ok:
        try:
            dm = derive_demand(instance.flights, instance)
        except (DemandError, KeyError) as exc:
            rep.add(f"demand: {exc}")
        else:
            for err in dm.consistency_errors():
                rep.add(err)
    return rep


def _check_tree(instance: Instance, rep: ValidationReport):
    tree = instance.scenario_tree
    p = np.asarray(tree.probabilities)
    if len(p) == 0:
        rep.add("scenario tree has no scenarios")
        return
    if abs(p.sum() - 1.0) > TOL:
        rep.add(f"scenario probabilities sum to {round(float(p.sum()), 9):g}")
    if np.any(p <= 0):
        rep.add("scenario probabilities must be positive")
    starts = tree.stage_starts
    if not starts or starts[0] != 1:
        rep.add("first stage must start at period 1")
    if any(b <= a for a, b in zip(starts, starts[1:])):
        rep.add("stage starts must be strictly increasing")
    Q = tree.n_scenarios
    cap = instance.capacities.values
    for s in range(1, tree.n_stages + 1):
        groups = tree.branches_at(s)
        members = sorted(q for g in groups for q in g)
        if members != list(range(Q)):
            rep.add(f"stage {s}: branches do not partition the scenarios")
            continue
        if s > 1:
            parents = tree.branches_at(s - 1)
            for g in groups:
                if not any(set(g) <= set(pg) for pg in parents):
                    rep.add(f"stage {s}: branch {g} is not nested in a stage {s - 1} branch")
        resolve = starts[s] if s < len(starts) else instance.T + 1
        if cap.ndim == 3 and cap.shape[2] == Q:
            for g in groups:
                for q in g[1:]:
                    if not np.array_equal(cap[:, :resolve - 1, g[0]], cap[:, :resolve - 1, q]):
                        rep.add(f"stage {s}: scenarios {g[0] + 1} and {q + 1} share a branch "
                                f"but differ before period {resolve}")


# -- demand -------------------------------------------------------------------

@dataclass(frozen=True)
class DemandMatrix:
    """Aggregated scheduled demand.

    ``direct[fca]`` is D_t (length T), ``by_stage[fca]`` is (n_stages, T) and
    ``by_path[path_id]`` is demand at the path's first PCA (length T).
    """

    T: int
    direct: Mapping[str, np.ndarray]
    by_stage: Mapping[str, np.ndarray]
    by_path: Mapping[int, np.ndarray]
    by_path_stage: Mapping[int, np.ndarray]

    def total(self) -> int:
        return int(sum(v.sum() for v in self.direct.values()))

    def consistency_errors(self) -> list[str]:
        errs = []
        for r, d in self.direct.items():
            if np.any(d < 0):
                errs.append(f"negative demand at {r}")
            if not np.array_equal(self.by_stage[r].sum(axis=0), d):
                errs.append(f"stage demand at {r} does not sum to direct demand")
        return errs


def option_periods(opt: TrajectoryOption, path: Path, instance: Instance,
                   delay_s: float = 0.0) -> tuple[int, int]:
    """(entry-FCA period, first-PCA period) for an option, optionally delayed."""
    t_fca = instance.horizon.period_of(opt.fca_arrival_times[0] + delay_s)
    return t_fca, t_fca + instance.entry_lag(path)


def derive_demand(flights: Iterable[Flight], instance: Instance) -> DemandMatrix:
    """Tally non-exempt flights on their most-preferred option."""
    T = instance.T
    tree = instance.scenario_tree
    S = tree.n_stages
    direct = {r: np.zeros(T, dtype=np.int64) for r in instance.fcas}
    by_stage = {r: np.zeros((S, T), dtype=np.int64) for r in instance.fcas}
    by_path = {p.id: np.zeros(T, dtype=np.int64) for p in instance.paths}
    by_path_stage = {p.id: np.zeros((S, T), dtype=np.int64) for p in instance.paths}
    for f in flights:
        if f.exempt:
            continue
        opt = f.tos[0]
        path = instance.path(opt.path)
        t_fca, t_pca = option_periods(opt, path, instance)
        if not 1 <= t_fca <= T or not 1 <= t_pca <= T:
            raise DemandError(f.id, f"arrival period {t_fca} outside horizon 1..{T}")
        stage = tree.stage_of_period(min(instance.horizon.period_of(f.etd), t_fca))
        fca = path.entry_fca
        direct[fca][t_fca - 1] += 1
        by_stage[fca][stage - 1, t_fca - 1] += 1
        by_path[path.id][t_pca - 1] += 1
        by_path_stage[path.id][stage - 1, t_pca - 1] += 1
    for d in (direct, by_stage, by_path, by_path_stage):
        for v in d.values():
            v.setflags(write=False)
    return DemandMatrix(T, direct, by_stage, by_path, by_path_stage)


def derive_split_ratios(flights: Iterable[Flight], instance: Instance) -> dict[tuple[str, str], np.ndarray]:
    """Per-arc, per-period share of scheduled traffic leaving a resource.

    Periods with no traffic leaving a resource get a uniform split over its
    outgoing arcs.
    """
    T = instance.T
    counts = {a.key: np.zeros(T) for a in instance.arcs}
    for f in flights:
        if f.exempt:
            continue
        opt = f.tos[0]
        path = instance.path(opt.path)
        t = instance.horizon.period_of(opt.fca_arrival_times[0])
        walk = (path.entry_fca,) + path.nodes
        hops = _expand_hops(instance, walk)
        for u, v in hops:
            if 1 <= t <= T and (u, v) in counts:
                counts[(u, v)][t - 1] += 1
            t += instance.arc(u, v).travel_time
    ratios = {}
    for rid in {a.source for a in instance.arcs}:
        outs = instance.out_arcs(rid)
        tot = np.sum([counts[a.key] for a in outs], axis=0)
        for a in outs:
            with np.errstate(invalid="ignore", divide="ignore"):
                r = np.where(tot > 0, counts[a.key] / np.where(tot > 0, tot, 1), 1.0 / len(outs))
            ratios[a.key] = r
    return ratios


def _expand_hops(instance: Instance, walk: Sequence[str]) -> list[tuple[str, str]]:
    """Arc sequence for a walk whose consecutive nodes may be several arcs apart."""
    hops = []
    for u, v in zip(walk, walk[1:]):
        if any(a.source == u and a.target == v for a in instance.arcs):
            hops.append((u, v))
            continue
        hops.extend(_shortest_hops(instance.arcs, u, v))
    return hops


def _shortest_hops(arcs, u, v):
    prev = {u: None}
    frontier = [u]
    while frontier and v not in prev:
        nxt = []
        for n in frontier:
            for a in arcs:
                if a.source == n and a.target not in prev:
                    prev[a.target] = n
                    nxt.append(a.target)
        frontier = nxt
    if v not in prev:
        raise KeyError(f"no arc chain {u} -> {v}")
    out = []
    while prev[v] is not None:
        out.append((prev[v], v))
        v = prev[v]
    return out[::-1]


def with_split_ratios(instance: Instance, ratios: Mapping[tuple[str, str], np.ndarray]) -> Instance:
    arcs = tuple(NetworkArc(a.source, a.target, a.travel_time, ratios.get(a.key, a.split_ratio))
                 for a in instance.arcs)
    return _replace(instance, arcs=arcs)
