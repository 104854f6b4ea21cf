"""Built-in ZDC/EWR test case.

Capacities, branch points and horizon are those of the ZDC/EWR weather case;
the flight set is synthetic (seeded).
The path list is a modelling choice: every ZDC PCA feeds both EWR and an
uncapacitated exit, and EWR arrivals that avoid ZDC are metered by FCA_EWR.
"""

from __future__ import annotations

import numpy as np

from .network import (PERIOD_SECONDS, Branch, CapacityProfile, CostParams, Flight, Horizon,
                      Instance, NetworkArc, Path, Resource, ResourceKind, ScenarioTree,
                      TrajectoryOption)

PROGRAM_START = 20 * 3600  # 20:00Z
ACTIVE_PERIODS = 16
PADDING_PERIODS = 8
EXIT_CAPACITY = 999

# scenario -> resource -> (value before change, value after, first period of new value)
_STEPS = {
    0: {"PCA0": (13, 25, 5), "PCA1": (44, 50, 5), "PCA2": (5, 5, 1), "EWR": (8, 10, 5)},
    1: {"PCA0": (13, 25, 11), "PCA1": (44, 50, 11), "PCA2": (5, 5, 1), "EWR": (8, 10, 11)},
    2: {"PCA0": (13, 25, 17), "PCA1": (44, 50, 17), "PCA2": (5, 5, 1), "EWR": (8, 10, 17)},
}

FCAS = ("FCA0", "FCA1", "FCA2", "FCA_EWR")
PCAS = ("PCA0", "PCA1", "PCA2", "EWR", "EXIT")

# id, nodes, entry FCA, sampling weight
_PATHS = (
    (1, ("PCA0", "EWR"), "FCA0", 0.12),
    (2, ("PCA0", "EXIT"), "FCA0", 0.12),
    (3, ("PCA1", "EWR"), "FCA1", 0.10),
    (4, ("PCA1", "EXIT"), "FCA1", 0.06),
    (5, ("PCA2", "EWR"), "FCA2", 0.08),
    (6, ("PCA2", "EXIT"), "FCA2", 0.20),
    (7, ("EWR",), "FCA_EWR", 0.32),
)
# reroute alternative offered for each primary path
_ALTERNATIVE = {1: 3, 2: 4, 3: 1, 4: 2, 5: 3, 6: 4}


def fixture_capacities() -> CapacityProfile:
    T = ACTIVE_PERIODS + PADDING_PERIODS
    vals = np.zeros((len(PCAS), T, 3), dtype=np.int64)
    for q, steps in _STEPS.items():
        for i, r in enumerate(PCAS):
            if r == "EXIT":
                vals[i, :, q] = EXIT_CAPACITY
                continue
            before, after, start = steps[r]
            vals[i, :start - 1, q] = before
            vals[i, start - 1:, q] = after
    return CapacityProfile(PCAS, vals)


def scenario_tree(probabilities=(0.3, 0.4, 0.3)) -> ScenarioTree:
    # stage 2 starts at 21:00 (scenario 1 resolves), stage 3 at 22:30
    return ScenarioTree(
        probabilities=tuple(probabilities),
        stage_starts=(1, 5, 11),
        branches=(Branch(1, (0, 1, 2)),
                  Branch(2, (0,)), Branch(2, (1, 2)),
                  Branch(3, (0,)), Branch(3, (1,)), Branch(3, (2,))),
    )


def network() -> tuple[tuple[Resource, ...], tuple[NetworkArc, ...], tuple[Path, ...]]:
    resources = tuple(Resource(r, ResourceKind.FCA) for r in FCAS) + \
        tuple(Resource(r, ResourceKind.PCA) for r in PCAS)
    arcs = (
        NetworkArc("FCA0", "PCA0", 0), NetworkArc("FCA1", "PCA1", 0),
        NetworkArc("FCA2", "PCA2", 0), NetworkArc("FCA_EWR", "EWR", 0),
        NetworkArc("PCA0", "EWR", 2), NetworkArc("PCA0", "EXIT", 1),
        NetworkArc("PCA1", "EWR", 2), NetworkArc("PCA1", "EXIT", 1),
        NetworkArc("PCA2", "EWR", 3), NetworkArc("PCA2", "EXIT", 1),
    )
    paths = tuple(Path(pid, nodes, fca) for pid, nodes, fca, _ in _PATHS)
    return resources, arcs, paths


def synthetic_flights(n: int = 50, seed: int = 7) -> tuple[Flight, ...]:
    """Seeded flight set with an arrival bank at 21:00."""
    rng = np.random.default_rng(seed)
    pids = np.array([p[0] for p in _PATHS])
    w = np.array([p[3] for p in _PATHS])
    entry = {p[0]: p[2] for p in _PATHS}
    # arrival period weights over the 16 active periods
    pw = np.array([0.1, 0.1, 0.2, 0.5, 30, 8, 2, 0.5, 0.3, 0.3, 0.2, 0.2, 0.1, 0.1, 0.1, 0.1])
    flights = []
    for i in range(n):
        pid = int(rng.choice(pids, p=w / w.sum()))
        period = int(rng.choice(np.arange(1, ACTIVE_PERIODS + 1), p=pw / pw.sum()))
        arrive = PROGRAM_START + (period - 1) * PERIOD_SECONDS + int(rng.integers(0, PERIOD_SECONDS))
        etd = arrive - int(rng.integers(15 * 60, 60 * 60))
        opts = [TrajectoryOption(pid, (entry[pid],), (float(arrive),), 0.0)]
        alt = _ALTERNATIVE.get(pid)
        if alt is not None and rng.random() < 0.55:
            t_alt = arrive + int(rng.integers(0, 10 * 60))
            cost = float(rng.integers(5, 31))
            opts.append(TrajectoryOption(alt, (entry[alt],), (float(t_alt),), cost))
        flights.append(Flight(f"F{i + 1:04d}", float(etd), tuple(opts), exempt=etd < PROGRAM_START))
    return tuple(flights)


def paper_fixture(n_flights: int = 50, seed: int = 7, probabilities=(0.3, 0.4, 0.3),
                  c_ground: float = 1.0, c_air: float = 2.0) -> Instance:
    """The ZDC/EWR instance: 16 active + 8 padding periods, three scenarios."""
    resources, arcs, paths = network()
    return Instance(
        resources=resources,
        arcs=arcs,
        paths=paths,
        scenario_tree=scenario_tree(probabilities),
        capacities=fixture_capacities(),
        flights=synthetic_flights(n_flights, seed),
        horizon=Horizon(ACTIVE_PERIODS, PADDING_PERIODS, float(PROGRAM_START)),
        costs=CostParams(c_ground, c_air),
        name="zdc-ewr",
    )
