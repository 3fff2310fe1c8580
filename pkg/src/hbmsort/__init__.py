"""Two-phase merge-tree sorting model for multi-channel HBM accelerators."""

from .mergenet import (
    BLOCK_RATES,
    MAX_KEY,
    DrainedUnitError,
    MergeUnitState,
    RateError,
    Record,
    bitonic_merge_blocks,
    bitonic_merge_network,
    compare_swap,
    merger_stats,
    mms_merge_runs,
    mms_stats,
    mms_step,
)
from .mergetree import (
    LeafFeed,
    PassResult,
    TreeShapeError,
    TreeSpec,
    UnsortedFeedError,
    WideTreeSpec,
    build_tree,
    compose_wide_tree,
    run_pass_cycles,
    run_pass_functional,
)
from .hbm import (
    BandwidthProfile,
    CapacityError,
    ChannelLayout,
    Conflict,
    HbmState,
    HbmTopology,
    ProfileKeyError,
    effective_bandwidth,
    route,
    table_layout,
    validate_layout,
)
from .analytics import (
    FloorplanProblem,
    FloorplanSolution,
    PerfModelInput,
    ResourceModelParams,
    bandwidth_utilization,
    ceil_log,
    comparator_recurrence,
    floorplan_solve,
    perf_overall,
    perf_phase1,
    perf_phase1_planned,
    perf_single_tree,
    resource_tree,
    select_burst_sizes,
)
from .engine import (
    BatchedOutput,
    CycleModel,
    SortConfig,
    SortPlan,
    SortResult,
    build_timing,
    plan_sort,
    reconstruct_output,
    run_phase1,
    run_phase2,
    sort_records,
    verify_permutation,
)
from .dataset import DatasetSpec, generate, load, save

__version__ = "0.1.0"
