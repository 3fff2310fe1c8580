"""Closed-form performance, resource and floorplanning models.

Bandwidth figures follow the write-side convention: half of the system
bandwidth feeds reads, half drains writes, and a tree's throughput is the
write-side number.  All functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from .hbm import BandwidthProfile
from .mergenet import mms_stats
from .mergetree import build_tree

RECORD_BYTES = 8


def ceil_log(base: int, n: int) -> int:
    """Smallest j with base**j >= n (exact integer arithmetic)."""
    if base < 2 or n < 1:
        raise ValueError(f"need base >= 2 and n >= 1, got base={base} n={n}")
    j, v = 0, 1
    while v < n:
        v *= base
        j += 1
    return j


@dataclass(frozen=True)
class PerfModelInput:
    records: int
    leaves: int
    memory_bandwidth: float            # bytes/s available to one tree (write side)
    channel_bandwidth: float = 420e9 / 32
    parallel_trees: int = 16
    phase2_rate: int = 32              # records per cycle at the wide root
    clock_hz: float = 214e6
    record_bytes: int = RECORD_BYTES

    def __post_init__(self):
        if self.parallel_trees > 16:
            raise ValueError("at most 16 parallel trees are supported")


def perf_single_tree(inp: PerfModelInput) -> float:
    """Overall bytes/s of one tree sorting its whole input: bandwidth
    divided by the number of passes."""
    passes = ceil_log(inp.leaves, inp.records)
    return inp.memory_bandwidth / passes


def perf_phase1(inp: PerfModelInput) -> float:
    """First-phase aggregate: k trees, each sorting records/k from one
    channel at channel bandwidth."""
    passes = ceil_log(inp.leaves, inp.records // inp.parallel_trees)
    return inp.parallel_trees * inp.channel_bandwidth / passes


def perf_phase1_planned(inp: PerfModelInput, planned_passes: int) -> float:
    """Variant of the phase-1 formula using a scheduler-supplied pass
    count (the tuned final pass can shave one pass off the naive count)."""
    return inp.parallel_trees * inp.channel_bandwidth / planned_passes


def perf_overall(beta1: float, beta2: float) -> float:
    """Two serial phases compose harmonically."""
    if beta1 <= 0 or beta2 <= 0:
        raise ValueError("phase bandwidths must be positive")
    return 1.0 / (1.0 / beta1 + 1.0 / beta2)


def bandwidth_utilization(phase_gbps: float, passes: int) -> float:
    """Memory traffic sustained while a phase runs `passes` passes, each
    reading and writing the full dataset: throughput x passes x 2."""
    return phase_gbps * passes * 2


@dataclass(frozen=True)
class ResourceModelParams:
    base_comparators: int = 0        # recurrence seed; the l=p family has no rate-1 level
    lut_per_comparator: int = 116    # calibrated against a placed 16-leaf tree
    axi_converter_luts: int = 5000
    axi_converter_ffs: int = 6000
    lut_buffer_fraction: float = 0.75  # share of leaf buffers built from LUT shift registers


class TreeResources(NamedTuple):
    comparators: int
    luts: int
    buffer_luts: int
    axi_luts: int
    axi_ffs: int


def unit_cost(rate: int) -> int:
    """Comparators in one merge unit at the given rate."""
    return mms_stats(rate).comparators


def comparator_recurrence(p: int, params: Optional[ResourceModelParams] = None) -> int:
    """L(p) = 2 L(p/2) + unit_cost(p), seeded by the params base."""
    params = params or ResourceModelParams()
    if p < 1 or p & (p - 1):
        raise ValueError(f"rate must be a power of two, got {p}")
    if p == 1:
        return params.base_comparators
    return 2 * comparator_recurrence(p // 2, params) + unit_cost(p)


def buffer_luts(burst_bytes: int) -> int:
    """LUTs for one double-buffered 512-bit-wide leaf buffer.

    One LUT holds a 32-deep 1-bit shift register, so 512 LUTs hold two
    1 KB bursts; cost scales with burst size above that and floors at 512.
    """
    rows = math.ceil(2 * burst_bytes * 8 / 512)  # 512-bit rows for two bursts
    return 512 * max(1, math.ceil(rows / 32))


def resource_tree(
    p: int,
    leaves: Optional[int] = None,
    params: Optional[ResourceModelParams] = None,
    burst_bytes: int = 1024,
) -> TreeResources:
    """Comparator count and LUT estimate for one (p, leaves) tree.

    Comparators are enumerated from the generated structure; they satisfy
    the doubling recurrence exactly for the leaves == p family.  The LUT
    estimate adds the AXI rate converter and the LUT-implemented share of
    the leaf burst buffers.
    """
    params = params or ResourceModelParams()
    leaves = leaves if leaves is not None else p
    comparators = build_tree(p, leaves).comparator_total()
    buf = round(leaves * params.lut_buffer_fraction) * buffer_luts(burst_bytes)
    luts = comparators * params.lut_per_comparator + params.axi_converter_luts + buf
    return TreeResources(
        comparators=comparators,
        luts=luts,
        buffer_luts=buf,
        axi_luts=params.axi_converter_luts,
        axi_ffs=params.axi_converter_ffs,
    )


@dataclass(frozen=True)
class FloorplanProblem:
    """Distribute identical tree kernels over the two dies away from the
    memory die, under per-die resource budgets and a die-crossing signal
    budget.  Defaults encode the production 16-tree instance."""

    tree_resources: int = 28788       # L: LUTs per tree kernel
    die1_available: int = 235000      # a1: top die budget for tree kernels
    die2_available: int = 190000      # a2: middle die budget
    axi_width: int = 1300             # w: signals one kernel drags across a die boundary
    crossing_budget: int = 18200      # W: signals available between dies 0 and 1

    def __post_init__(self):
        for name in ("tree_resources", "die1_available", "die2_available",
                     "axi_width", "crossing_budget"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.tree_resources == 0:
            raise ValueError("tree_resources must be positive")


class FloorplanSolution(NamedTuple):
    die1_trees: int
    die2_trees: int
    objective: int


def floorplan_solve(prob: FloorplanProblem) -> FloorplanSolution:
    """Maximize trees moved off the memory die.

    Exhaustive over integer (u1, u2) subject to (u1+u2)*w <= W,
    u1*L <= a1 and u2*L <= a2; ties broken toward the larger u1 (fill the
    die farther from the memory first).
    """
    u1_cap = prob.die1_available // prob.tree_resources
    u2_cap = prob.die2_available // prob.tree_resources
    best = FloorplanSolution(0, 0, 0)
    for u1 in range(u1_cap + 1):
        for u2 in range(u2_cap + 1):
            if (u1 + u2) * prob.axi_width > prob.crossing_budget:
                break
            if (u1 + u2, u1) > (best.objective, best.die1_trees):
                best = FloorplanSolution(u1, u2, u1 + u2)
    return best


class BurstChoice(NamedTuple):
    burst_bytes: int
    efficiency: float
    buffer_luts: int
    at_peak: bool


class BurstSelection(NamedTuple):
    phase1: BurstChoice
    phase2: BurstChoice
    within_budget: Optional[bool]


def _select_for_pattern(profile: BandwidthProfile, pattern: int) -> BurstChoice:
    entries = sorted(
        (b, eff) for (m, b), eff in profile.table.items() if m == pattern
    )
    if not entries:
        raise ProfileCoverageError(f"profile has no entries for pattern {pattern}x{pattern}")
    peak = max(eff for _, eff in entries)
    at_peak = peak >= 0.95
    candidates = [(b, eff) for b, eff in entries if eff == peak]
    # Cheapest buffers first, then the largest burst among equals: growing
    # the burst is free until it needs another shift-register row.
    burst, eff = min(candidates, key=lambda be: (buffer_luts(be[0]), -be[0]))
    return BurstChoice(burst, eff, buffer_luts(burst), at_peak)


class ProfileCoverageError(ValueError):
    pass


def select_burst_sizes(
    profile: BandwidthProfile, lut_budget: Optional[int] = None,
    leaf_buffers: int = 16 * 16,
) -> BurstSelection:
    """Pick per-phase burst sizes: the cheapest burst that reaches the
    pattern's peak efficiency (1x1 traffic in phase one, 4x4 in phase
    two).  A pattern whose profile never reaches 95% of peak channel
    efficiency is flagged via ``at_peak=False``."""
    phase1 = _select_for_pattern(profile, 1)
    phase2 = _select_for_pattern(profile, 4)
    within = None
    if lut_budget is not None:
        # 12 of 16 trees keep phase-1 bursts; 4 reused trees need phase-2 bursts.
        per_tree = leaf_buffers // 16
        total = (12 * per_tree * phase1.buffer_luts + 4 * per_tree * phase2.buffer_luts)
        within = total <= lut_budget
    return BurstSelection(phase1, phase2, within)
