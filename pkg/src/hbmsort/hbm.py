"""Model of a 32-channel HBM subsystem as seen from user-side AXI ports.

Channels are bundled four per crossbar group; adjacent groups are joined
by lateral links.  A port reaches an out-of-group channel by traversing
every link between its home group and the target group, so two ports
whose paths share a link contend.  Effective bandwidth per channel
depends on the access pattern (reading m channels while writing the m
nearby ones, "m x m") and the AXI burst size; those efficiencies are
measured quantities and ship as configuration, not code constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional

GiB = 1 << 30
MiB = 1 << 20


class LayoutError(ValueError):
    pass


class ProfileKeyError(KeyError):
    """A (pattern, burst) pair is missing; profiles are never interpolated."""


class CapacityError(ValueError):
    pass


@dataclass(frozen=True)
class HbmTopology:
    channels: int = 32
    group_size: int = 4
    channel_bandwidth: float = 420e9 / 32  # bytes/s per pseudo-channel
    channel_capacity: int = 256 * MiB      # bytes per pseudo-channel

    @property
    def groups(self) -> int:
        return self.channels // self.group_size

    @property
    def lateral_links(self) -> int:
        return self.groups - 1

    def group_of(self, channel: int) -> int:
        return channel // self.group_size


def route(axi: int, channel: int, topo: HbmTopology) -> list[int]:
    """Lateral links crossed from an AXI port slot to a channel.

    `axi` is the physical port slot (one per channel position); its home
    group is the slot's own group.  Intra-group access crosses nothing;
    otherwise every link between the two groups is traversed in order.
    """
    if not 0 <= axi < topo.channels:
        raise LayoutError(f"AXI slot {axi} out of range [0, {topo.channels})")
    if not 0 <= channel < topo.channels:
        raise LayoutError(f"channel {channel} out of range [0, {topo.channels})")
    g_axi = topo.group_of(axi)
    g_ch = topo.group_of(channel)
    lo, hi = sorted((g_axi, g_ch))
    return list(range(lo, hi))


@dataclass(frozen=True)
class AxiAssignment:
    """One logical AXI interface: its port slot and the channels it touches."""

    slot: int
    reads: tuple[int, ...]
    writes: tuple[int, ...]

    @property
    def channels(self) -> tuple[int, ...]:
        return self.reads + self.writes


@dataclass(frozen=True)
class ChannelLayout:
    """Per-phase map of logical AXI index to channel assignments."""

    phases: dict[str, dict[int, AxiAssignment]]

    def assignments(self, phase: str) -> dict[int, AxiAssignment]:
        return self.phases[phase]


def table_layout(topo: Optional[HbmTopology] = None) -> ChannelLayout:
    """The production data layout for 16 trees over 32 channels.

    Phase 1: tree i drives one AXI at slot 2i and touches only its local
    channel pair (2i, 2i+1); which of the pair is read vs written swaps
    every pass.  Phase 2: the four reused trees' AXIs (logical 4i, slot
    8i) each cover the eight channels 8i..8i+7, reading four and writing
    the other four; the remaining AXIs keep their local pairs and idle.
    """
    topo = topo or HbmTopology()
    phase1 = {
        i: AxiAssignment(slot=2 * i, reads=(2 * i,), writes=(2 * i + 1,))
        for i in range(16)
    }
    phase2 = {}
    for i in range(4):
        base = 8 * i
        phase2[4 * i] = AxiAssignment(
            slot=base,
            reads=tuple(base + 2 * j for j in range(4)),
            writes=tuple(base + 2 * j + 1 for j in range(4)),
        )
        for j in range(1, 4):
            ch = base + 2 * j
            phase2[4 * i + j] = AxiAssignment(slot=ch, reads=(ch,), writes=(ch + 1,))
    return ChannelLayout(phases={"phase1": phase1, "phase2": phase2})


class Conflict(NamedTuple):
    phase: str
    link: int
    axi_a: int
    axi_b: int


def validate_layout(layout: ChannelLayout, topo: Optional[HbmTopology] = None) -> list[Conflict]:
    """Find pairs of AXI interfaces sharing a lateral link within a phase."""
    topo = topo or HbmTopology()
    conflicts = []
    for phase, assignments in layout.phases.items():
        users: dict[int, list[int]] = {}
        for axi, asn in sorted(assignments.items()):
            links = set()
            for ch in asn.channels:
                links.update(route(asn.slot, ch, topo))
            for link in links:
                users.setdefault(link, []).append(axi)
        for link, axis in sorted(users.items()):
            for i in range(len(axis)):
                for j in range(i + 1, len(axis)):
                    conflicts.append(Conflict(phase, link, axis[i], axis[j]))
    return conflicts


#: Illustrative per-channel efficiency by (pattern m, burst bytes); shaped
#: after measurement: local 1x1 traffic is flat at peak from 512 B up,
#: while wider crossbar patterns need larger bursts, 4x4 reaching peak
#: only at 4 KB.  Real deployments should measure and override via config.
DEFAULT_EFFICIENCY = {
    (1, 64): 0.45, (1, 128): 0.62, (1, 256): 0.82, (1, 512): 1.0,
    (1, 1024): 1.0, (1, 2048): 1.0, (1, 4096): 1.0,
    (2, 64): 0.35, (2, 128): 0.50, (2, 256): 0.68, (2, 512): 0.85,
    (2, 1024): 0.94, (2, 2048): 1.0, (2, 4096): 1.0,
    (4, 64): 0.25, (4, 128): 0.38, (4, 256): 0.52, (4, 512): 0.68,
    (4, 1024): 0.80, (4, 2048): 0.92, (4, 4096): 1.0,
    (8, 64): 0.18, (8, 128): 0.28, (8, 256): 0.40, (8, 512): 0.55,
    (8, 1024): 0.68, (8, 2048): 0.80, (8, 4096): 0.90,
}

PATTERNS = (1, 2, 4, 8)
BURSTS = (64, 128, 256, 512, 1024, 2048, 4096)


@dataclass
class BandwidthProfile:
    """Measured efficiency fractions keyed by (pattern m, burst bytes)."""

    table: dict[tuple[int, int], float] = field(
        default_factory=lambda: dict(DEFAULT_EFFICIENCY)
    )
    outstanding_bursts: int = 32

    def efficiency(self, pattern: int, burst: int) -> float:
        try:
            return self.table[(pattern, burst)]
        except KeyError:
            raise ProfileKeyError(
                f"no efficiency entry for pattern {pattern}x{pattern} at "
                f"{burst} B bursts; extend the profile, values are never interpolated"
            ) from None

    def validate(self):
        for (m, burst), eff in sorted(self.table.items()):
            if not 0.0 < eff <= 1.0:
                raise ValueError(f"efficiency {eff} for {m}x{m},{burst} outside (0, 1]")
        for m in sorted({m for m, _ in self.table}):
            bursts = sorted(b for mm, b in self.table if mm == m)
            effs = [self.table[(m, b)] for b in bursts]
            for lo, hi in zip(effs, effs[1:]):
                if hi < lo:
                    raise ValueError(f"pattern {m}x{m} efficiency not monotone in burst size")
        return self


def effective_bandwidth(
    pattern: int, burst: int, profile: BandwidthProfile, topo: Optional[HbmTopology] = None
) -> float:
    """Aggregate bytes/s for an m x m pattern at the given burst size."""
    topo = topo or HbmTopology()
    if pattern not in PATTERNS:
        raise ValueError(f"pattern must be one of {PATTERNS}, got {pattern}")
    if burst not in BURSTS:
        raise ValueError(f"burst must be a power of two in [64, 4096], got {burst}")
    return pattern * topo.channel_bandwidth * profile.efficiency(pattern, burst)


class BurstCompletion(NamedTuple):
    start: float
    delta: float
    end: float


class HbmState:
    """Discrete-event channel service with data retention.

    Bursts on one channel serialize; bursts on distinct channels proceed
    in parallel; a burst whose route crosses an occupied lateral link
    waits for the link.  Arbitration is first-come-first-served in
    submission order, so callers wanting the deterministic discipline
    submit sorted by (issue time, AXI index).  Reads and writes on one
    channel share its bandwidth (half duplex).  Written bytes are stored
    and can be read back verbatim.
    """

    def __init__(self, topo: Optional[HbmTopology] = None,
                 profile: Optional[BandwidthProfile] = None):
        self.topo = topo or HbmTopology()
        self.profile = profile or BandwidthProfile()
        self.channel_free = [0.0] * self.topo.channels
        self.link_free = [0.0] * self.topo.lateral_links
        self.stored = [bytearray() for _ in range(self.topo.channels)]
        self.read_cursor = [0] * self.topo.channels

    def service_burst(
        self,
        axi: int,
        channel: int,
        direction: str,
        nbytes: int,
        issue: float = 0.0,
        pattern: int = 1,
        data: Optional[bytes] = None,
    ) -> BurstCompletion:
        """Schedule one burst; returns (start, service delta, completion)."""
        if direction not in ("read", "write"):
            raise ValueError(f"direction must be 'read' or 'write', got {direction!r}")
        eff = self.profile.efficiency(pattern, nbytes)
        delta = nbytes / (self.topo.channel_bandwidth * eff)
        links = route(axi, channel, self.topo)
        start = max([issue, self.channel_free[channel]]
                    + [self.link_free[l] for l in links])
        end = start + delta
        self.channel_free[channel] = end
        for l in links:
            self.link_free[l] = end
        if direction == "write":
            if len(self.stored[channel]) + nbytes > self.topo.channel_capacity:
                raise CapacityError(
                    f"write of {nbytes} B overflows channel {channel} "
                    f"({len(self.stored[channel])}/{self.topo.channel_capacity} B used)"
                )
            self.stored[channel].extend(data if data is not None else bytes(nbytes))
        return BurstCompletion(start, delta, end)

    def read_back(self, channel: int, offset: int, nbytes: int) -> bytes:
        blob = self.stored[channel]
        if offset + nbytes > len(blob):
            raise CapacityError(
                f"read of [{offset}, {offset + nbytes}) beyond {len(blob)} B "
                f"stored on channel {channel}"
            )
        return bytes(blob[offset : offset + nbytes])

    def run_batch(self, bursts: Iterable[tuple]) -> list[BurstCompletion]:
        """Service bursts in deterministic (issue, axi) order."""
        ordered = sorted(bursts, key=lambda b: (b[4] if len(b) > 4 else 0.0, b[0]))
        return [self.service_burst(*b) for b in ordered]
