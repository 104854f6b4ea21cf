"""Pricing one rate plan: slot creation, trajectory-option allocation, flow simulation."""

# %% setup
from ctoprates.ctop import Inclusion, evaluate_rates, slot_offsets
from ctoprates.fixture import paper_fixture
from ctoprates.sbo import interpolate_capacity

inst = paper_fixture()
rates = interpolate_capacity(inst)

# %% slots inside one period
for P in (1, 4, 13):
    print(f"rate {P:>2}: offsets {slot_offsets(P)}")

# %% allocation and air holding
ev = evaluate_rates(rates, inst)
alloc = ev.allocation
exempt = sum(a.status is Inclusion.EXEMPT for a in alloc.flights)
rerouted = sum(a.option > 0 for a in alloc.controlled())
print(f"{len(alloc.controlled())} controlled flights, {exempt} exempt, {rerouted} rerouted")
print(f"ground {ev.ground:.2f} + reroute {ev.reroute:.2f} + air {ev.air:.2f} = {ev.total:.2f}")
print("air holding periods per scenario:", ev.flow.air_periods.tolist())

# %% the most delayed flights
worst = sorted(alloc.controlled(), key=lambda a: -a.ground_delay_s)[:5]
for a in worst:
    print(f"{a.flight_id:<6} option {a.option} via {a.fca} slot {a.slot_time:>7.0f} s delay {a.ground_delay_s / 60:6.1f} min")
