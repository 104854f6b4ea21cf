"""Versioned text formats: instance JSON and the CSV tables.

Every CSV starts with a ``# ctoprates-<kind> v<version>`` line; floats are
written with ``repr`` so all files re-parse losslessly.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path as FsPath
from typing import Iterable, Sequence

import numpy as np

from .ctop import AllocationResult, FlightAllocation, Inclusion
from .network import (Branch, CapacityProfile, CostParams, Flight, Horizon, Instance, NetworkArc,
                      Path, Resource, ResourceKind, ScenarioTree, TrajectoryOption)
from .rates import RatePlan
from .sbo import SearchTrace, TraceRecord
from .stoch import CostBreakdown

FORMAT_VERSION = 1


class FormatError(ValueError):
    pass


def _header(kind: str) -> str:
    return f"# ctoprates-{kind} v{FORMAT_VERSION}"


def _check_header(line: str, kind: str):
    want = f"# ctoprates-{kind} v"
    if not line.startswith(want):
        raise FormatError(f"expected header {want!r}, got {line[:40]!r}")
    if int(line[len(want):].strip()) > FORMAT_VERSION:
        raise FormatError(f"unsupported {kind} version {line[len(want):].strip()}")


def _num(x: float) -> str:
    x = float(x)
    if x.is_integer() and abs(x) < 2 ** 53:
        return str(int(x))
    return repr(x)


def _write_rows(kind: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    buf.write(_header(kind) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _read_rows(text: str, kind: str) -> tuple[list[str], list[list[str]]]:
    lines = text.splitlines()
    if not lines:
        raise FormatError(f"empty {kind} file")
    _check_header(lines[0], kind)
    rows = list(csv.reader(lines[1:]))
    if not rows:
        raise FormatError(f"{kind} file has no column header")
    return rows[0], [r for r in rows[1:] if r]


# -- instance document -------------------------------------------------------------

def instance_to_dict(inst: Instance) -> dict:
    tree = inst.scenario_tree
    caps = inst.capacities
    return {
        "format": "ctoprates-instance",
        "version": FORMAT_VERSION,
        "name": inst.name,
        "horizon": {"active": inst.horizon.active, "padding": inst.horizon.padding,
                    "start": inst.horizon.start},
        "costs": {"ground": inst.costs.ground, "air": inst.costs.air},
        "resources": [{"id": r.id, "kind": r.kind.value} for r in inst.resources],
        "arcs": [{"source": a.source, "target": a.target, "travel_time": a.travel_time,
                  "split_ratio": None if a.split_ratio is None else [float(v) for v in a.split_ratio]}
                 for a in inst.arcs],
        "paths": [{"id": p.id, "nodes": list(p.nodes), "entry_fca": p.entry_fca} for p in inst.paths],
        "scenario_tree": {
            "probabilities": list(tree.probabilities),
            "names": list(tree.names),
            "stage_starts": list(tree.stage_starts),
            "branches": [{"stage": b.stage, "scenarios": list(b.scenarios)} for b in tree.branches],
        },
        "capacities": {r: {tree.names[q]: [int(v) for v in caps.of(r)[:, q]]
                           for q in range(tree.n_scenarios)} for r in caps.resources},
        "flights": [{"id": f.id, "etd": f.etd, "exempt": f.exempt,
                     "tos": [{"path": o.path, "fcas": list(o.fcas),
                              "fca_arrival_times": list(o.fca_arrival_times),
                              "relative_cost": o.relative_cost} for o in f.tos]}
                    for f in inst.flights],
    }


def instance_from_dict(d: dict) -> Instance:
    if d.get("format") != "ctoprates-instance":
        raise FormatError("not a ctoprates instance document")
    if int(d.get("version", 0)) > FORMAT_VERSION:
        raise FormatError(f"unsupported instance version {d['version']}")
    try:
        t = d["scenario_tree"]
        tree = ScenarioTree(tuple(t["probabilities"]), tuple(t["stage_starts"]),
                            tuple(Branch(b["stage"], tuple(b["scenarios"])) for b in t["branches"]),
                            tuple(t["names"]))
        cap_names = list(d["capacities"])
        vals = np.array([[d["capacities"][r][n] for n in tree.names] for r in cap_names],
                        dtype=np.int64).transpose(0, 2, 1)
        h = d["horizon"]
        return Instance(
            resources=tuple(Resource(r["id"], ResourceKind(r["kind"])) for r in d["resources"]),
            arcs=tuple(NetworkArc(a["source"], a["target"], int(a["travel_time"]), a.get("split_ratio"))
                       for a in d["arcs"]),
            paths=tuple(Path(int(p["id"]), tuple(p["nodes"]), p["entry_fca"]) for p in d["paths"]),
            scenario_tree=tree,
            capacities=CapacityProfile(tuple(cap_names), vals),
            flights=tuple(Flight(f["id"], float(f["etd"]),
                                 tuple(TrajectoryOption(int(o["path"]), tuple(o["fcas"]),
                                                        tuple(o["fca_arrival_times"]),
                                                        float(o.get("relative_cost", 0.0)))
                                       for o in f["tos"]),
                                 bool(f.get("exempt", False)))
                          for f in d["flights"]),
            horizon=Horizon(int(h["active"]), int(h["padding"]), float(h.get("start", 0.0))),
            costs=CostParams(float(d["costs"]["ground"]), float(d["costs"]["air"])),
            name=d.get("name", "instance"),
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, FormatError):
            raise
        raise FormatError(f"malformed instance document: {e!r}") from e


def dumps_instance(inst: Instance) -> str:
    return json.dumps(instance_to_dict(inst), indent=1) + "\n"


def loads_instance(text: str) -> Instance:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"invalid JSON: {e}") from e
    return instance_from_dict(d)


def save_instance(inst: Instance, path) -> None:
    FsPath(path).write_text(dumps_instance(inst))


def load_instance(path) -> Instance:
    return loads_instance(FsPath(path).read_text())


# -- capacity table ------------------------------------------------------------------

def capacities_to_csv(inst: Instance) -> str:
    """Rows scenario x resource, columns the period start labels."""
    tree = inst.scenario_tree
    caps = inst.capacities
    header = ["Scenario", "Resource"] + inst.horizon.labels()
    rows = [[tree.names[q], r] + [int(v) for v in caps.of(r)[:, q]]
            for q in range(tree.n_scenarios) for r in caps.resources]
    return _write_rows("capacity", header, rows)


def capacities_from_csv(text: str) -> tuple[CapacityProfile, tuple[str, ...], list[str]]:
    """Returns ``(profile, scenario names, period labels)``."""
    header, rows = _read_rows(text, "capacity")
    labels = header[2:]
    scen = list(dict.fromkeys(r[0] for r in rows))
    res = list(dict.fromkeys(r[1] for r in rows))
    vals = np.zeros((len(res), len(labels), len(scen)), dtype=np.int64)
    seen = set()
    for r in rows:
        if len(r) != len(header):
            raise FormatError(f"row {r[:2]} has {len(r)} fields, expected {len(header)}")
        vals[res.index(r[1]), :, scen.index(r[0])] = [int(v) for v in r[2:]]
        seen.add((r[0], r[1]))
    if len(seen) != len(scen) * len(res):
        raise FormatError("capacity table is missing scenario/resource rows")
    return CapacityProfile(tuple(res), vals), tuple(scen), labels


# -- rate plan -------------------------------------------------------------------------

def rates_to_csv(rates: RatePlan, labels: Sequence[str] | None = None) -> str:
    labels = list(labels) if labels is not None else [str(t) for t in range(1, rates.T + 1)]
    rows = [[r] + [int(v) for v in rates.row(r)] for r in rates.resources]
    return _write_rows("rates", ["Resource"] + labels, rows)


def rates_from_csv(text: str) -> RatePlan:
    header, rows = _read_rows(text, "rates")
    T = len(header) - 1
    for r in rows:
        if len(r) != T + 1:
            raise FormatError(f"rate row {r[0]} has {len(r) - 1} periods, expected {T}")
    try:
        return RatePlan(tuple(r[0] for r in rows), np.array([[int(v) for v in r[1:]] for r in rows],
                                                            dtype=np.int64).reshape(len(rows), T))
    except ValueError as e:
        raise FormatError(str(e)) from e


# -- cost breakdown -------------------------------------------------------------------

COST_COLUMNS = ["Model", "Scenario", "Probability", "GroundDelayPeriods", "AirHoldingPeriods",
                "TotalCost", "ExpectedCost", "RunningTime", "CostGround", "CostAir"]


def costs_to_csv(breakdowns: Sequence[CostBreakdown], names: Sequence[str] | None = None) -> str:
    rows = []
    for b in breakdowns:
        Q = b.ground.size
        scen = list(names) if names is not None else [f"Scen{q + 1}" for q in range(Q)]
        for q in range(Q):
            rows.append([b.label, scen[q], _num(b.probabilities[q]), _num(b.ground[q]), _num(b.air[q]),
                         _num(b.total[q]), _num(b.expected), _num(b.runtime), _num(b.c_ground),
                         _num(b.c_air)])
    return _write_rows("costs", COST_COLUMNS, rows)


def costs_from_csv(text: str) -> list[CostBreakdown]:
    header, rows = _read_rows(text, "costs")
    if header != COST_COLUMNS:
        raise FormatError(f"unexpected cost columns {header}")
    groups: dict[str, list[list[str]]] = {}
    for r in rows:
        groups.setdefault(r[0], []).append(r)
    out = []
    for label, rs in groups.items():
        col = lambda i: [float(r[i]) for r in rs]  # noqa: E731
        out.append(CostBreakdown(np.array(col(3)), np.array(col(4)), np.array(col(2)),
                                 float(rs[0][8]), float(rs[0][9]), label, float(rs[0][7])))
    return out


# -- allocation ---------------------------------------------------------------------

ALLOCATION_COLUMNS = ["FlightId", "Status", "Option", "Path", "FCA", "SlotTime", "SlotPeriod",
                      "SlotOffset", "GroundDelayMin", "RerouteCost", "Marked", "GroundDelaySec"]


def _opt(x) -> str:
    return "" if x is None else _num(x)


def allocation_to_csv(alloc: AllocationResult) -> str:
    rows = []
    for a in alloc.flights:
        marked = ";".join(f"{r}@{_num(t)}" for r, t in a.marked)
        rows.append([a.flight_id, a.status.value, a.option, a.path, a.fca or "", _opt(a.slot_time),
                     _opt(a.slot_period), _opt(a.slot_offset), _num(a.ground_delay_min),
                     _num(a.relative_cost), marked, _num(a.ground_delay_s)])
    return _write_rows("allocation", ALLOCATION_COLUMNS, rows)


def allocation_from_csv(text: str) -> list[FlightAllocation]:
    header, rows = _read_rows(text, "allocation")
    if header != ALLOCATION_COLUMNS:
        raise FormatError(f"unexpected allocation columns {header}")
    out = []
    for r in rows:
        marked = tuple((m.split("@")[0], float(m.split("@")[1])) for m in r[10].split(";") if m)
        out.append(FlightAllocation(
            r[0], Inclusion(r[1]), int(r[2]), int(r[3]), r[4] or None,
            float(r[5]) if r[5] else None, int(r[6]) if r[6] else None, int(r[7]) if r[7] else None,
            marked, float(r[11]), float(r[9])))
    return out


# -- search trace ---------------------------------------------------------------------

TRACE_COLUMNS = ["Iteration", "Move", "Objective", "BestSoFar", "Step", "Point"]


def trace_to_csv(trace: SearchTrace, label: str | None = None) -> str:
    cols = (["Seed"] if label is not None else []) + TRACE_COLUMNS
    rows = [([label] if label is not None else []) +
            [r.iteration, r.move, _num(r.objective) if math.isfinite(r.objective) else "inf",
             _num(r.best) if math.isfinite(r.best) else "inf", r.step, " ".join(map(str, r.x))]
            for r in trace.records]
    return _write_rows("trace", cols, rows)


def traces_to_csv(traces: Sequence[tuple[str, SearchTrace]]) -> str:
    parts = [trace_to_csv(t, name).split("\n", 2) for name, t in traces]
    if not parts:
        return _write_rows("trace", ["Seed"] + TRACE_COLUMNS, [])
    return parts[0][0] + "\n" + parts[0][1] + "\n" + "".join(p[2] for p in parts)


def traces_from_csv(text: str) -> list[tuple[str | None, SearchTrace]]:
    header, rows = _read_rows(text, "trace")
    labelled = header[0] == "Seed"
    if header[int(labelled):] != TRACE_COLUMNS:
        raise FormatError(f"unexpected trace columns {header}")
    out: dict = {}
    for r in rows:
        name = r[0] if labelled else None
        r = r[int(labelled):]
        x = tuple(int(v) for v in r[5].split()) if r[5] else ()
        out.setdefault(name, SearchTrace()).records.append(
            TraceRecord(int(r[0]), x, float(r[2]), r[1], float(r[3]), int(r[4])))
    return list(out.items())
