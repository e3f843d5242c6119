"""
ssdo_te: solver-free traffic engineering for maximum link utilization.

This package provides tools to:
- Build topologies, candidate path sets (Yen) and failure scenarios
- Synthesize, perturb and load demand matrices
- Minimize MLU by sequential per-pair optimization with a balanced
  binary search, in dense (one/two-hop) or path form
- Check small instances against a brute-force grid oracle

Example:
    >>> from ssdo_te import complete_dcn_topology, two_hop_path_set, manual_demands, run
    >>> topology = complete_dcn_topology(3, 2.0)
    >>> demands = manual_demands("fig2", topology)
    >>> split, report = run(topology, demands, two_hop_path_set(topology, 2))
    >>> round(report.final_mlu, 4)
    0.75
"""

__version__ = "1.0.0"
__author__ = "ssdo-te contributors"

from .errors import (
    SsdoError,
    InputError,
    InfeasibleError,
    NoPath,
    Disconnects,
    NeverFeasible,
    DegenerateWeights,
    CapacityZeroWithLoad,
    ZeroDemand,
    TooLarge,
)

# Topology, path sets and failures
from .topology import (
    UNBOUNDED,
    Topology,
    PathSet,
    FailureScenario,
    complete_dcn_topology,
    load_topology,
    load_graphml,
    load_path_set,
    yen_k_shortest_paths,
    yen_path_set,
    two_hop_path_set,
    apply_failures,
    random_failure_scenario,
    ring_deadlock_fixture,
)

# Traffic
from .traffic import (
    DemandMatrix,
    DemandSeries,
    gravity_demands,
    demand_series_from_gravity,
    perturb_series,
    manual_demands,
    load_demands,
    load_series,
)

# Dense form
from .dense import (
    SplitTensor,
    UtilizationState,
    SubproblemView,
    compute_utilization,
    background_traffic,
    residual_ratios,
    balanced_ratios,
    feasibility_check,
    search_bounds,
    bbsm,
    apply_sd_update,
)

# Path form
from .paths import (
    PathSplit,
    EdgeLoadState,
    path_utilization,
    pb_bbsm,
    path_ssdo,
)

# Solver
from .ssdo import (
    SolverConfig,
    SolveReport,
    DualStartResult,
    select_sds,
    run,
    run_dual_start,
)

# Oracle
from .oracle import (
    OracleResult,
    grid_subproblem_optimum,
    grid_global_optimum,
)

# Experiments and output
from .experiment import failure_sweep, perturb_sweep
from .reporting import RunManifest, atomic_write_text

__all__ = [
    # Errors
    "SsdoError",
    "InputError",
    "InfeasibleError",
    "NoPath",
    "Disconnects",
    "NeverFeasible",
    "DegenerateWeights",
    "CapacityZeroWithLoad",
    "ZeroDemand",
    "TooLarge",
    # Topology
    "UNBOUNDED",
    "Topology",
    "PathSet",
    "FailureScenario",
    "complete_dcn_topology",
    "load_topology",
    "load_graphml",
    "load_path_set",
    "yen_k_shortest_paths",
    "yen_path_set",
    "two_hop_path_set",
    "apply_failures",
    "random_failure_scenario",
    "ring_deadlock_fixture",
    # Traffic
    "DemandMatrix",
    "DemandSeries",
    "gravity_demands",
    "demand_series_from_gravity",
    "perturb_series",
    "manual_demands",
    "load_demands",
    "load_series",
    # Dense form
    "SplitTensor",
    "UtilizationState",
    "SubproblemView",
    "compute_utilization",
    "background_traffic",
    "residual_ratios",
    "balanced_ratios",
    "feasibility_check",
    "search_bounds",
    "bbsm",
    "apply_sd_update",
    # Path form
    "PathSplit",
    "EdgeLoadState",
    "path_utilization",
    "pb_bbsm",
    "path_ssdo",
    # Solver
    "SolverConfig",
    "SolveReport",
    "DualStartResult",
    "select_sds",
    "run",
    "run_dual_start",
    # Oracle
    "OracleResult",
    "grid_subproblem_optimum",
    "grid_global_optimum",
    # Experiments and output
    "failure_sweep",
    "perturb_sweep",
    "RunManifest",
    "atomic_write_text",
]
