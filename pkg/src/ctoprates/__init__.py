"""Planned acceptance rates for multi-resource collaborative trajectory options programs."""

from .ctop import (AllocationOverflow, AllocationResult, Inclusion, Program, SlotTable, allocate_tos,
                   create_slots, determine_inclusion, evaluate_rates, flow_simulate)
from .fixture import paper_fixture
from .network import (Branch, CapacityProfile, CostParams, DemandMatrix, Flight, Horizon, Instance,
                      NetworkArc, Path, Resource, ResourceKind, ScenarioTree, TrajectoryOption,
                      ValidationReport, derive_demand, derive_split_ratios, validate_instance)
from .rates import RatePlan
from .sbo import (SearchConfig, SearchTrace, interpolate_capacity, pattern_search, saturate_iterative,
                  saturate_uniform, two_phase_optimize)
from .stoch import (CostBreakdown, build_esom, build_semidynamic_esom, build_semidynamic_pca,
                    build_two_stage_pca, extract_fca_rates, per_scenario_costs)

__version__ = "0.1.0"
