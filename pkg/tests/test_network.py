import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ctoprates.fixture import PCAS, paper_fixture, fixture_capacities
from ctoprates.network import (PERIOD_SECONDS, DemandError, Horizon, NetworkArc, Path, ScenarioTree,
                               derive_demand, derive_split_ratios, validate_instance, with_split_ratios)

from helpers import flight, make_instance, random_instance, single_path_instance


def two_way(flights=(), ratios=None, T_active=4):
    """FCA1 splitting into PCA1 / PCA2."""
    arcs = [NetworkArc("FCA1", "PCA1", 0, None if ratios is None else ratios[0]),
            NetworkArc("FCA1", "PCA2", 0, None if ratios is None else ratios[1])]
    paths = [Path(1, ("PCA1",), "FCA1"), Path(2, ("PCA2",), "FCA1")]
    return make_instance(["FCA1"], ["PCA1", "PCA2"], arcs, paths, {"PCA1": 3, "PCA2": 3},
                         flights=flights, active=T_active)


# -- validation ------------------------------------------------------------------

def test_fixture_is_valid():
    assert validate_instance(paper_fixture()).violations == []


def test_bad_split_ratio_names_resource_and_period():
    r1 = np.full(8, 0.5)
    r2 = np.full(8, 0.5)
    r2[2] = 0.4
    rep = validate_instance(two_way(ratios=(r1, r2)))
    assert not rep.ok
    assert any("FCA1" in v and "period 3" in v and "0.9" in v for v in rep)


def test_probability_sum_reported():
    inst = single_path_instance(np.ones((8, 2), int), tree=ScenarioTree((0.5, 0.6)))
    assert any("probabilities sum to 1.1" in v for v in validate_instance(inst))


def test_cycle_and_reverse_arc_reported():
    inst = make_instance(["FCA1"], ["PCA1", "PCA2"],
                         [NetworkArc("FCA1", "PCA1", 0), NetworkArc("PCA1", "PCA2", 1),
                          NetworkArc("PCA2", "PCA1", 1), NetworkArc("PCA2", "FCA1", 0)],
                         [Path(1, ("PCA1",), "FCA1")], {"PCA1": 1, "PCA2": 1})
    rep = validate_instance(inst)
    assert any("cycle" in v for v in rep)
    assert any("PCA back to an FCA" in v for v in rep)


def test_short_padding_reported():
    inst = make_instance(["FCA1"], ["PCA1", "APT"],
                         [NetworkArc("FCA1", "PCA1", 0), NetworkArc("PCA1", "APT", 3)],
                         [Path(1, ("PCA1", "APT"), "FCA1")], {"PCA1": 1, "APT": 1}, padding=2)
    assert any("padding" in v for v in validate_instance(inst))


def test_branch_capacity_mismatch_reported():
    caps = np.ones((8, 2), int)
    caps[1, 1] = 2  # scenario 2 differs before the tree resolves at period 4
    from ctoprates.network import Branch
    tree = ScenarioTree((0.5, 0.5), (1, 4), (Branch(1, (0, 1)), Branch(2, (0,)), Branch(2, (1,))))
    rep = validate_instance(single_path_instance(caps, tree=tree))
    assert any("share a branch" in v for v in rep)


def test_demand_outside_horizon_reported_not_raised():
    inst = single_path_instance(1, flights=[flight("LATE", 1, "FCA1", 20)])
    rep = validate_instance(inst)
    assert any("LATE" in v for v in rep)


def test_unknown_path_reported():
    inst = single_path_instance(1, flights=[flight("X", 9, "FCA1", 1)])
    assert any("unknown path 9" in v for v in validate_instance(inst))


# -- fixture ------------------------------------------------------------------------

def test_fixture_capacity_values():
    inst = paper_fixture()
    cap = inst.capacities
    assert cap.get("PCA0", 1, 0) == 13          # 20:00, Scen1
    assert cap.get("EWR", 5, 1) == 8            # 21:00, Scen2
    assert cap.get("EWR", 5, 0) == 10           # 21:00, Scen1
    for t in range(17, 25):
        for q in range(3):
            assert cap.get("PCA1", t, q) == 50
    assert np.all(cap.of("PCA2") == 5)
    assert inst.horizon.labels()[0] == "20:00" and inst.horizon.labels()[10] == "22:30"


def test_fixture_tree_and_costs():
    inst = paper_fixture()
    tree = inst.scenario_tree
    assert tree.probabilities == (0.3, 0.4, 0.3)
    assert inst.horizon.labels()[tree.stage_starts[1] - 1] == "21:00"
    assert inst.horizon.labels()[tree.stage_starts[2] - 1] == "22:30"
    assert (inst.costs.ground, inst.costs.air) == (1.0, 2.0)
    assert inst.horizon.active == 16 and inst.horizon.padding == 8


@pytest.mark.parametrize("n", [0, 1, 17, 50])
def test_fixture_flight_count(n):
    inst = paper_fixture(n_flights=n)
    assert len(inst.flights) == n
    assert validate_instance(inst).ok


def test_fixture_deterministic():
    from ctoprates.io import dumps_instance
    assert dumps_instance(paper_fixture(seed=3)) == dumps_instance(paper_fixture(seed=3))
    assert paper_fixture(seed=3).flights != paper_fixture(seed=4).flights


def test_fixture_capacities_shape():
    cap = fixture_capacities()
    assert cap.resources == PCAS and cap.values.shape == (len(PCAS), 24, 3)


# -- demand ---------------------------------------------------------------------------

def test_single_flight_demand():
    inst = single_path_instance(1, flights=[flight("A", 1, "FCA1", 3)])
    d = derive_demand(inst.flights, inst)
    expect = np.zeros(8, int)
    expect[2] = 1
    assert np.array_equal(d.direct["FCA1"], expect)
    assert np.array_equal(d.by_path[1], expect)


def test_empty_demand():
    inst = paper_fixture(n_flights=0)
    d = derive_demand((), inst)
    assert d.total() == 0
    assert all(not v.any() for v in d.by_path.values())


def test_demand_out_of_horizon_raises():
    inst = single_path_instance(1)
    with pytest.raises(DemandError) as e:
        derive_demand([flight("EARLY", 1, "FCA1", 0)], inst)
    assert e.value.flight_id == "EARLY"


def test_exempt_flights_not_counted():
    inst = single_path_instance(1)
    d = derive_demand([flight("A", 1, "FCA1", 2, exempt=True), flight("B", 1, "FCA1", 2)], inst)
    assert d.total() == 1


def test_demand_matches_hand_tally():
    rng = np.random.default_rng(11)
    flights = [flight(f"F{i}", int(rng.integers(1, 3)), "FCA1", int(rng.integers(1, 5)),
                      int(rng.integers(0, 900))) for i in range(10)]
    inst = two_way(flights)
    d = derive_demand(flights, inst)
    tally = {1: np.zeros(8, int), 2: np.zeros(8, int)}
    for f in flights:
        tally[f.tos[0].path][int(f.tos[0].fca_arrival_times[0] // PERIOD_SECONDS)] += 1
    for pid in (1, 2):
        assert np.array_equal(d.by_path[pid], tally[pid])
    assert np.array_equal(d.direct["FCA1"], tally[1] + tally[2])


def test_stage_assignment_uses_departure():
    tree = ScenarioTree((1.0,), (1, 3), ())
    inst = single_path_instance(1, tree=tree)
    f_early = flight("E", 1, "FCA1", 4, etd=0.0)                 # departs in period 1
    f_late = flight("L", 1, "FCA1", 4, etd=3 * PERIOD_SECONDS)   # departs in period 4
    d = derive_demand([f_early, f_late], inst)
    assert d.by_stage["FCA1"][:, 3].tolist() == [1, 1]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_demand_conserves_flights(seed):
    inst = random_instance(np.random.default_rng(seed))
    d = derive_demand(inst.flights, inst)
    n = sum(not f.exempt for f in inst.flights)
    assert d.total() == n
    assert sum(int(v.sum()) for v in d.by_path.values()) == n
    assert d.consistency_errors() == []


# -- split ratios --------------------------------------------------------------------

def test_all_traffic_one_way():
    inst = two_way([flight("A", 1, "FCA1", 2), flight("B", 1, "FCA1", 2)])
    r = derive_split_ratios(inst.flights, inst)
    assert r["FCA1", "PCA1"][1] == 1.0 and r["FCA1", "PCA2"][1] == 0.0


def test_empty_period_defaults_uniform():
    inst = two_way([flight("A", 1, "FCA1", 2)])
    r = derive_split_ratios(inst.flights, inst)
    assert r["FCA1", "PCA1"][0] == 0.5 and r["FCA1", "PCA2"][0] == 0.5


def test_three_of_four():
    fl = [flight(f"A{i}", 1, "FCA1", 1) for i in range(3)] + [flight("B", 2, "FCA1", 1)]
    inst = two_way(fl)
    r = derive_split_ratios(fl, inst)
    assert r["FCA1", "PCA1"][0] == 0.75 and r["FCA1", "PCA2"][0] == 0.25


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_derived_ratios_validate(seed):
    inst = random_instance(np.random.default_rng(seed))
    inst = with_split_ratios(inst, derive_split_ratios(inst.flights, inst))
    rep = validate_instance(inst)
    assert rep.ok, rep.violations


def test_horizon_period_conversion():
    h = Horizon(4, 2, 100.0)
    assert h.period_of(100.0) == 1
    assert h.period_of(100.0 + 899.9) == 1
    assert h.period_of(100.0 + 900) == 2
    assert h.period_start(3) == 100.0 + 1800
