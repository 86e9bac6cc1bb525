"""tilecast: optimal wireless-multicast allocation for tiled zoomable video."""

from .model import (
    DOT11A_RATES_MBPS,
    NEG_INF,
    ContractError,
    InfeasibleError,
    PlanEntry,
    SlotBudget,
    TileLadder,
    TransmissionPlan,
    UserRequest,
    VirtualUser,
    cluster_users,
    slot_cost,
    utility,
)
from .feasibility import (
    INFEASIBLE,
    InfeasibleAtMinimum,
    LowerBoundVector,
    adapt_lower_bounds,
    is_feasible,
    min_slots_tile,
)
from .scheduler import (
    AllocationResult,
    brute_force_oracle,
    evaluate_plan,
    extract_schedule,
    multi_tile_naive,
    multi_tile_optimal,
    single_tile_optimal,
)
from .baselines import (
    ApproximationConfig,
    adaptive_multicast,
    adaptive_unicast,
    approximation_allocate,
)
from .channel import (
    LossModel,
    RateAdaptConfig,
    RateAdaptState,
    RateController,
    free_probe_observe,
    ha_rraa_step,
    sample_reception,
)
from .simulator import (
    ALLOCATORS,
    EpochReport,
    Scenario,
    TraceEvent,
    allocate_once,
    fairness,
    goodput,
    proportional_split,
    run_simulation,
    similarity,
)
from .scenario_io import (
    ParseError,
    generate_trace,
    parse_scenario,
    parse_trace,
    results_rows,
    serialize_scenario,
    serialize_trace,
    write_results,
)

__version__ = "0.1.0"
