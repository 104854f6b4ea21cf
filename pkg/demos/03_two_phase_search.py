"""Two-phase rate planning: heuristic seeds refined by pattern search."""

# %% setup
from ctoprates.fixture import paper_fixture
from ctoprates.sbo import SearchConfig, congestion_ranking, two_phase_optimize

inst = paper_fixture()
print("FCA congestion ranking:", [(r, round(v, 2)) for r, v in congestion_ranking(inst)])

# %% search (short budget for a demo; the CLI default is 300 s)
res = two_phase_optimize(inst, ("uniform", "iterative", "interpolate"), SearchConfig(time_budget=60))
print(f"{'Seed':<12}{'Seed cost':>10}{'Refined':>10}{'Gain %':>8}{'Evals':>7}  Stop")
for r in res.reports:
    print(f"{r.name:<12}{r.seed_cost:>10.2f}{r.refined_cost:>10.2f}{100 * r.improvement:>8.2f}"
          f"{r.trace.evaluations:>7}  {r.trace.stop_reason}")

# %% final rates for the searched FCAs, active periods only
labels = inst.horizon.labels()[: inst.horizon.active]
print("FCA      " + " ".join(f"{l:>5}" for l in labels))
for fca in res.subset:
    print(f"{fca:<8} " + " ".join(f"{v:>5}" for v in res.rates.row(fca)[: inst.horizon.active]))
