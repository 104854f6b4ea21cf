"""Stochastic rate models on the built-in ZDC/EWR instance.

Solves the four aggregate models, prints per-scenario costs in the
ground/air/total layout, and shows why split ratios mislead the
aggregate model on a two-PCA toy network.
"""

# %% setup
import time

import numpy as np

from ctoprates.fixture import paper_fixture
from ctoprates.lp import solve
from ctoprates.network import (CapacityProfile, Flight, Horizon, Instance, NetworkArc, Path, Resource, ResourceKind,
                               ScenarioTree, TrajectoryOption, derive_demand, derive_split_ratios)
from ctoprates.stoch import MODEL_KINDS, build_esom, build_model, build_two_stage_pca, pca_load, per_scenario_costs

inst = paper_fixture()
demand = derive_demand(inst.flights, inst)
ratios = derive_split_ratios(inst.flights, inst)
print(f"{len(inst.flights)} flights, {len(inst.fcas)} FCAs, {len(inst.pcas)} PCAs, T={inst.T}")

# %% the four models
print(f"{'Model':<8}{'Scen':>6}{'Ground':>9}{'Air':>8}{'Total':>9}{'Expected':>10}{'Time s':>8}")
for kind in MODEL_KINDS:
    t0 = time.perf_counter()
    sol = solve(build_model(kind, inst, demand, ratios))
    wall = time.perf_counter() - t0
    b = per_scenario_costs(sol, inst)
    for q in range(b.ground.size):
        tail = f"{b.expected:>10.2f}{wall:>8.3f}" if q == 0 else ""
        print(f"{kind if q == 0 else '':<8}{q + 1:>6}{b.ground[q]:>9.2f}{b.air[q]:>8.2f}{b.total[q]:>9.2f}{tail}")

# %% split-ratio pathology: ratio 1/0 in period 1, 0/1 afterwards, all flights via PCA1
T = 6
r1 = np.zeros(T)
r1[0] = 1.0
toy = Instance(
    resources=(Resource("FCA1", ResourceKind.FCA), Resource("PCA1", ResourceKind.PCA), Resource("PCA2", ResourceKind.PCA)),
    arcs=(NetworkArc("FCA1", "PCA1", 0, r1), NetworkArc("FCA1", "PCA2", 0, 1.0 - r1)),
    paths=(Path(1, ("PCA1",), "FCA1"), Path(2, ("PCA2",), "FCA1")),
    scenario_tree=ScenarioTree.single(),
    capacities=CapacityProfile(("PCA1", "PCA2"), np.array([np.full((T, 1), 2), np.full((T, 1), 10)])),
    flights=tuple(Flight(f"F{i}", -1800.0, (TrajectoryOption(1, ("FCA1",), (0.0,)),)) for i in range(4)),
    horizon=Horizon(3, 3),
)
d = derive_demand(toy.flights, toy)
esom = solve(build_esom(toy, d, {a.key: a.split_ratio for a in toy.arcs}))
pca = solve(build_two_stage_pca(toy, d))
print("aggregate model, PCA2 load:", pca_load(esom, toy)[1, :, 0].tolist())
print("path model,      PCA2 load:", pca_load(pca, toy)[1, :, 0].tolist())
