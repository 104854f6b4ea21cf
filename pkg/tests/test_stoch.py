import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ctoprates.lp import OPTIMAL, MathSolution, export_model, parse_model, solve
from ctoprates.network import NetworkArc, Path, ScenarioTree, derive_demand, derive_split_ratios
from ctoprates.stoch import (ESOM, MODEL_KINDS, PCA2, SD_ESOM, SD_PCA, CorruptSolutionError, CostBreakdown,
                             build_esom, build_model,
                             build_two_stage_pca, extract_fca_rates, pca_load, per_scenario_costs)

from helpers import (check_pca_solution, flight, make_instance, pathology_instance, random_instance,
                     single_path_instance, three_scenario_tree)


def solved(kind, inst, backend="highs"):
    d = derive_demand(inst.flights, inst)
    r = derive_split_ratios(inst.flights, inst)
    sol = solve(build_model(kind, inst, d, r), backend)
    assert sol.status == OPTIMAL
    return sol


# -- reference cost arithmetic -------------------------------------------------------

P = (0.3, 0.4, 0.3)


def test_esom_cost_row():
    b = CostBreakdown.from_components([296.05] * 3, [0, 0, 211.55], P)
    assert np.allclose(b.total, [296.05, 296.05, 719.15])
    assert b.expected == pytest.approx(422.98, abs=0.01)


def test_two_stage_cost_row():
    b = CostBreakdown.from_components([284] * 3, [0, 0, 200], P)
    assert b.total.tolist() == [284, 284, 684]
    assert b.expected == pytest.approx(404.0, abs=1e-9)


def test_semidynamic_esom_cost_row():
    b = CostBreakdown.from_components([93.80, 292.13, 507.60], [0, 0, 0], P)
    assert b.expected == pytest.approx(297.27, abs=0.01)


def test_zero_solution_costs():
    inst = single_path_instance(1)
    sol = solved(PCA2, inst)
    b = per_scenario_costs(sol, inst)
    assert b.expected == 0 and not b.ground.any() and not b.air.any()


# -- ESOM -------------------------------------------------------------------------------

def test_esom_zero_demand():
    inst = single_path_instance(1)
    sol = solved(ESOM, inst)
    assert sol.objective == 0
    assert not extract_fca_rates(sol, inst).rates.any()


def test_esom_one_period_ground_delay():
    inst = single_path_instance(1, flights=[flight("A", 1, "FCA1", 1), flight("B", 1, "FCA1", 1)])
    assert solved(ESOM, inst).objective == pytest.approx(1.0)


def test_esom_pathology_routes_to_pca2():
    inst = pathology_instance()
    d = derive_demand(inst.flights, inst)
    ratios = {a.key: a.split_ratio for a in inst.arcs}
    sol = solve(build_esom(inst, d, ratios))
    load = pca_load(sol, inst)
    assert load[1].sum() > 0        # flow appears in PCA2 ...
    assert d.by_path[2].sum() == 0  # ... though nobody is scheduled there


def test_pca_conserves_on_pathology():
    inst = pathology_instance()
    sol = solve(build_two_stage_pca(inst, derive_demand(inst.flights, inst)))
    assert check_pca_solution(sol, inst) == []
    assert pca_load(sol, inst)[1].sum() == 0


def test_semidynamic_single_scenario_equals_static():
    inst = random_instance(np.random.default_rng(3), scenarios=1)
    assert solved(SD_ESOM, inst).objective == pytest.approx(solved(ESOM, inst).objective, abs=1e-6)
    assert solved(SD_PCA, inst).objective == pytest.approx(solved(PCA2, inst).objective, abs=1e-6)


def test_identical_until_final_stage_shares_stage1_decisions():
    rng = np.random.default_rng(8)
    base = random_instance(rng)
    T = base.T
    caps = base.capacities.values.copy()
    caps[:, :, 1] = caps[:, :, 0]
    caps[:, :, 2] = caps[:, :, 0]
    caps[:, 5:, 2] += 1  # only the last stage tells scenario 3 apart
    tree = ScenarioTree((0.3, 0.4, 0.3), (1, 6), ())
    from ctoprates.network import Branch, CapacityProfile
    tree = ScenarioTree((0.3, 0.4, 0.3), (1, 6), (Branch(1, (0, 1, 2)), Branch(2, (0, 1)), Branch(2, (2,))))
    from dataclasses import replace
    inst = replace(base, scenario_tree=tree, capacities=CapacityProfile(base.capacities.resources, caps))
    sol = solved(SD_ESOM, inst)
    X = sol.model.meta["reschedules"]
    for (r, q, s, t, tp), j in X.items():
        if s == 0:
            assert sol.values[j] == pytest.approx(sol.values[X[r, 0, s, t, tp]], abs=1e-9)
    assert T == inst.T


# -- PCA models ------------------------------------------------------------------------

def test_pca_zero_demand():
    assert solved(PCA2, single_path_instance(2)).objective == 0


def test_pca_single_path_overflow_costs_one_ground_period():
    fl = [flight(f"F{i}", 1, "FCA1", 1) for i in range(3)]
    inst = single_path_instance(2, flights=fl)
    assert solved(PCA2, inst).objective == pytest.approx(min(1.0, 2.0))


def test_pca_two_paths_share_capacity():
    arcs = [NetworkArc("FCA1", "PCA1", 0), NetworkArc("FCA2", "PCA1", 0)]
    paths = [Path(1, ("PCA1",), "FCA1"), Path(2, ("PCA1",), "FCA2")]
    fl = [flight("A", 1, "FCA1", 1), flight("B", 2, "FCA2", 1)]
    inst = make_instance(["FCA1", "FCA2"], ["PCA1"], arcs, paths, {"PCA1": 1}, flights=fl)
    sol = solved(PCA2, inst)
    assert sol.objective == pytest.approx(1.0)
    G = [sol[f"G({pid},1)"] for pid in (1, 2)]
    assert sorted(G) == [0, 1]


def test_identical_capacity_scenarios_equal_costs():
    base = random_instance(np.random.default_rng(4), scenarios=1)
    caps = np.repeat(base.capacities.values, 3, axis=2)
    from dataclasses import replace
    from ctoprates.network import CapacityProfile
    inst = replace(base, scenario_tree=three_scenario_tree(3, 5),
                   capacities=CapacityProfile(base.capacities.resources, caps))
    b = per_scenario_costs(solved(SD_PCA, inst), inst)
    assert np.allclose(b.total, b.total[0])


@settings(max_examples=12, deadline=None)
@given(st.integers(0, 10_000))
def test_relaxation_ordering(seed):
    inst = random_instance(np.random.default_rng(seed))
    assert solved(SD_ESOM, inst).objective <= solved(ESOM, inst).objective + 1e-6
    sd, two = solved(SD_PCA, inst), solved(PCA2, inst)
    assert sd.objective <= two.objective + 1e-6
    assert check_pca_solution(sd, inst) == [] and check_pca_solution(two, inst) == []


@settings(max_examples=12, deadline=None)
@given(st.integers(0, 10_000))
def test_reported_costs_match_objective(seed):
    inst = random_instance(np.random.default_rng(seed))
    for kind in MODEL_KINDS:
        sol = solved(kind, inst)
        assert per_scenario_costs(sol, inst).expected == pytest.approx(sol.objective, abs=1e-6)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_esom_capacity_and_boundary(seed):
    inst = random_instance(np.random.default_rng(seed))
    sol = solved(ESOM, inst)
    assert np.all(pca_load(sol, inst) <= inst.capacities.values + 1e-7)
    T = inst.T
    for (r, t, q), j in sol.model.meta["holds"].items():
        if t == T:
            assert sol.values[j] == 0


def test_reference_solver_agrees_on_small_pca():
    fl = [flight(f"F{i}", 1, "FCA1", 1) for i in range(3)]
    inst = single_path_instance(2, active=2, padding=2, flights=fl)
    assert solved(PCA2, inst, "simplex").objective == pytest.approx(solved(PCA2, inst).objective)


def test_esom_export_keeps_counts():
    from ctoprates.fixture import paper_fixture
    inst = paper_fixture()
    m = build_esom(inst, derive_demand(inst.flights, inst), derive_split_ratios(inst.flights, inst))
    back = parse_model(export_model(m))
    assert (back.n_vars, back.n_cons) == (m.n_vars, m.n_cons)


# -- rate extraction ----------------------------------------------------------------

def _with_values(sol, updates):
    x = np.zeros(sol.model.n_vars)
    for name, v in updates.items():
        x[sol.model.index(name)] = v
    return MathSolution(OPTIMAL, 0.0, x, sol.model)


def test_esom_rate_rounds_half_up():
    inst = single_path_instance(50, flights=[flight("A", 1, "FCA1", 1)])
    sol = _with_values(solved(ESOM, inst), {"P(FCA1,2)": 29.5, "P(FCA1,3)": 29.49})
    rates = extract_fca_rates(sol, inst)
    assert rates.get("FCA1", 2) == 30 and rates.get("FCA1", 3) == 29


def test_path_rate_shifted_upstream_by_lag():
    inst = make_instance(["FCA11"], ["PCA1"], [NetworkArc("FCA11", "PCA1", 2)],
                         [Path(1, ("PCA1",), "FCA11")], {"PCA1": 5},
                         flights=[flight("A", 1, "FCA11", 3)])
    sol = solved(PCA2, inst)
    assert sol["P(1,5)"] == 1
    assert extract_fca_rates(sol, inst).get("FCA11", 3) == 1


def test_colocated_paths_sum():
    arcs = [NetworkArc("FCA1", "PCA1", 0), NetworkArc("FCA1", "PCA2", 0)]
    paths = [Path(1, ("PCA1",), "FCA1"), Path(2, ("PCA2",), "FCA1")]
    inst = make_instance(["FCA1"], ["PCA1", "PCA2"], arcs, paths, {"PCA1": 5, "PCA2": 5})
    sol = _with_values(solved(PCA2, inst), {"P(1,2)": 3, "P(2,2)": 4})
    assert extract_fca_rates(sol, inst).get("FCA1", 2) == 7


def test_corrupt_solution_rejected():
    inst = single_path_instance(1)
    sol = solved(ESOM, inst)
    bad = MathSolution(OPTIMAL, 0.0, -np.ones(sol.model.n_vars), sol.model)
    with pytest.raises(CorruptSolutionError):
        extract_fca_rates(bad, inst)
    nan = MathSolution(OPTIMAL, 0.0, np.full(sol.model.n_vars, np.nan), sol.model)
    with pytest.raises(CorruptSolutionError):
        extract_fca_rates(nan, inst)


def test_fixture_models_fast_and_ordered():
    from ctoprates.fixture import paper_fixture
    inst = paper_fixture()
    obj = {}
    for kind in MODEL_KINDS:
        sol = solved(kind, inst)
        assert sol.runtime < 5.0
        obj[kind] = sol.objective
    assert obj[SD_ESOM] <= obj[ESOM] + 1e-6
    assert obj[SD_PCA] <= obj[PCA2] + 1e-6


def test_unknown_kind():
    inst = single_path_instance(1)
    with pytest.raises(ValueError):
        build_model("dynamic", inst, derive_demand((), inst))
