"""Static architecture description: grids, buffer budgets, colors, reduction.

A cluster is a grid of filter group rows (FGRs) and input map group columns
(IFGCs); each intersection is a node holding several PEs that share the
node's buffers. Buffer budgets follow two accounting schemes: the flat
scheme double-buffers full chunks at every node, the hierarchical scheme
fetches chunk-wide into a shared per-column buffer and keeps only sub-chunk
slices plus a small filter window at the nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .errors import ConfigError, SimulationError

VARIANTS = (
    "dense",
    "one_sided",
    "sparten",
    "synchronous",
    "barista_no_opts",
    "barista",
    "unlimited_buffer",
    "ideal",
)

SCALES = ("desk", "full")


@dataclass(frozen=True)
class ArchConfig:
    """One simulated machine: grid shape, buffer depths, latencies, features."""

    variant: str
    clusters: int
    fgrs: int
    ifgcs: int
    pes_per_node: int
    chunk_size: int = 128
    shared_buffer_depth: int = 16
    per_node_buffer_mult: int = 3
    output_buffer_depth: int = 16
    filter_temporal_reuse: int = 16
    cache_banks: int = 8
    cache_latency: int = 20
    mac_latency: int = 1
    match_latency: int = 2
    telescoping: bool = False
    snarfing: bool = False
    coloring: bool = False
    round_robin: bool = False
    hierarchical_buffering: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        for name in ("clusters", "fgrs", "ifgcs", "pes_per_node", "cache_banks",
                     "shared_buffer_depth", "per_node_buffer_mult",
                     "output_buffer_depth", "filter_temporal_reuse"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.chunk_size < 8 or self.chunk_size & (self.chunk_size - 1):
            raise ConfigError("chunk_size must be a power of two >= 8")
        if self.chunk_size % self.pes_per_node:
            raise ConfigError("pes_per_node must divide chunk_size")
        if self.cache_latency < 0 or self.mac_latency < 0 or self.match_latency < 0:
            raise ConfigError("latencies must be non-negative")

    @property
    def total_macs(self) -> int:
        return self.clusters * self.fgrs * self.ifgcs * self.pes_per_node

    @property
    def macs_per_cluster(self) -> int:
        return self.fgrs * self.ifgcs * self.pes_per_node

    @property
    def subchunk_cells(self) -> int:
        return self.chunk_size // self.pes_per_node

    @property
    def is_unbounded(self) -> bool:
        return self.variant in ("unlimited_buffer", "ideal")

    def with_flags(self, **flags) -> "ArchConfig":
        return replace(self, **flags)


_FULL_GRIDS = {
    "dense": dict(fgrs=128, ifgcs=128, pes_per_node=1, clusters=2, cache_banks=8),
    "one_sided": dict(fgrs=32, ifgcs=1, pes_per_node=1, clusters=1024, cache_banks=32),
    "sparten": dict(fgrs=32, ifgcs=1, pes_per_node=1, clusters=1024, cache_banks=32),
    "synchronous": dict(fgrs=64, ifgcs=32, pes_per_node=4, clusters=4, cache_banks=32),
    "barista_no_opts": dict(fgrs=64, ifgcs=32, pes_per_node=4, clusters=4, cache_banks=32),
    "barista": dict(fgrs=64, ifgcs=32, pes_per_node=4, clusters=4, cache_banks=32),
    "unlimited_buffer": dict(fgrs=64, ifgcs=32, pes_per_node=4, clusters=4, cache_banks=32),
    "ideal": dict(fgrs=64, ifgcs=32, pes_per_node=4, clusters=4, cache_banks=32),
}

_DESK_GRIDS = {
    "dense": dict(fgrs=16, ifgcs=8, pes_per_node=1, clusters=2, cache_banks=4),
    "one_sided": dict(fgrs=8, ifgcs=1, pes_per_node=1, clusters=32, cache_banks=8),
    "sparten": dict(fgrs=8, ifgcs=1, pes_per_node=1, clusters=32, cache_banks=8),
    "synchronous": dict(fgrs=8, ifgcs=4, pes_per_node=4, clusters=2, cache_banks=8),
    "barista_no_opts": dict(fgrs=8, ifgcs=4, pes_per_node=4, clusters=2, cache_banks=8),
    "barista": dict(fgrs=8, ifgcs=4, pes_per_node=4, clusters=2, cache_banks=8),
    "unlimited_buffer": dict(fgrs=8, ifgcs=4, pes_per_node=4, clusters=2, cache_banks=8),
    "ideal": dict(fgrs=8, ifgcs=4, pes_per_node=4, clusters=2, cache_banks=8),
}

_BARISTA_FLAGS = dict(telescoping=True, snarfing=True, coloring=True,
                      round_robin=True, hierarchical_buffering=True)


def arch_preset(variant: str, scale: str = "desk", **overrides) -> ArchConfig:
    """Stock configuration for a named architecture variant."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}")
    if scale not in SCALES:
        raise ConfigError(f"unknown scale {scale!r}")
    grid = dict((_FULL_GRIDS if scale == "full" else _DESK_GRIDS)[variant])
    flags = {}
    if variant in ("barista", "ideal"):
        flags = dict(_BARISTA_FLAGS)
    cfg = dict(variant=variant, **grid, **flags)
    cfg.update(overrides)
    return ArchConfig(**cfg)


@dataclass(frozen=True)
class BufferBudget:
    """Exact byte accounting for one configuration."""

    scheme: str
    per_pe_bytes: float
    per_node_bytes: int
    per_fgr_bytes: int
    per_ifgc_bytes: int
    per_cluster_bytes: int
    total_bytes: int

    @property
    def total_mb(self) -> float:
        return self.total_bytes / (1024 * 1024)

    @property
    def per_ifgc_kb(self) -> float:
        return self.per_ifgc_bytes / 1024

    @property
    def per_fgr_kb(self) -> float:
        return self.per_fgr_bytes / 1024


def buffer_accounting(config: ArchConfig) -> BufferBudget:
    """Byte budget under the configuration's buffering scheme.

    Output cells are counted at 1 byte (their post-conversion width); the
    runtime datapath accumulates at 32 bits, which is a datapath concern,
    not a buffer-budget one.
    """
    mask_b = config.chunk_size // 8
    chunk_b = config.chunk_size
    pes = config.pes_per_node
    nodes_per_ifgc = config.fgrs
    nodes_per_fgr = config.ifgcs
    if config.hierarchical_buffering:
        shared = (mask_b + chunk_b) * config.shared_buffer_depth
        sub_b = config.subchunk_cells // 8 + config.subchunk_cells
        per_node_wo_out = ((mask_b + chunk_b) + sub_b * pes) * config.per_node_buffer_mult
        out_per_node = ((pes if config.coloring else 0) + 1) * config.output_buffer_depth
        per_node = per_node_wo_out + out_per_node
        per_ifgc = shared + per_node * nodes_per_ifgc
        per_cluster = per_ifgc * config.ifgcs
        total = per_cluster * config.clusters
        return BufferBudget(
            scheme="hierarchical",
            per_pe_bytes=per_ifgc / (nodes_per_ifgc * pes),
            per_node_bytes=per_node,
            per_fgr_bytes=per_cluster // config.fgrs,
            per_ifgc_bytes=per_ifgc,
            per_cluster_bytes=per_cluster,
            total_bytes=total,
        )
    # flat scheme: full double-buffered chunks at every node
    per_node = ((mask_b + chunk_b) * 2 + 1) * 2
    per_fgr = per_node * nodes_per_fgr
    per_ifgc = per_node * nodes_per_ifgc
    per_cluster = per_node * config.fgrs * config.ifgcs
    total = per_cluster * config.clusters
    return BufferBudget(
        scheme="flat",
        per_pe_bytes=per_node / pes,
        per_node_bytes=per_node,
        per_fgr_bytes=per_fgr,
        per_ifgc_bytes=per_ifgc,
        per_cluster_bytes=per_cluster,
        total_bytes=total,
    )


@dataclass(frozen=True)
class ColorTag:
    """Identity of the in-flight input map an output accumulator belongs to."""

    slot: int
    tag: object

    @staticmethod
    def width_bits(output_buffer_depth: int) -> int:
        return max(1, math.ceil(math.log2(output_buffer_depth)))


class NodeState:
    """Runtime buffers of one node: filter/input slots and colored outputs."""

    def __init__(self, pes: int, coloring: bool, output_buffer_depth: int,
                 input_capacity: int, filter_capacity: int,
                 unbounded: bool = False, audit: bool = False):
        self.pes = pes
        self.coloring = coloring
        self.depth = output_buffer_depth
        self.input_capacity = input_capacity
        self.filter_capacity = filter_capacity
        self.unbounded = unbounded
        self.input_slots: dict = {}
        self.filter_slots: dict = {}
        self.live_colors: dict = {}   # slot -> bound input tag
        self.accumulators: dict = {}  # (slot, pe) -> int
        self.hw_input = 0
        self.hw_filter = 0
        self.hw_colors = 0
        self.audit = audit
        self.audit_events: list = []

    def free_input_slots(self) -> int:
        if self.unbounded:
            return 1 << 30
        return self.input_capacity - len(self.input_slots)

    def free_filter_slots(self) -> int:
        if self.unbounded:
            return 1 << 30
        return self.filter_capacity - len(self.filter_slots)

    def acquire_color(self, input_tag) -> ColorTag | None:
        """Bind a free output accumulator set to one input map, or stall."""
        if not self.coloring and self.live_colors:
            return None  # single accumulator set acts as a barrier
        limit = (1 << 30) if (self.unbounded and self.coloring) else (
            self.depth if self.coloring else 1)
        if len(self.live_colors) >= limit:
            return None
        slot = 0
        while slot in self.live_colors:
            slot += 1
        self.live_colors[slot] = input_tag
        for pe in range(self.pes):
            self.accumulators[(slot, pe)] = 0
        self.hw_colors = max(self.hw_colors, len(self.live_colors))
        if self.audit:
            self.audit_events.append(("acquire", slot, input_tag))
        return ColorTag(slot, input_tag)

    def accumulate(self, color: ColorTag, pe: int, value: int, input_tag) -> None:
        bound = self.live_colors.get(color.slot)
        if bound != input_tag:
            raise SimulationError(
                f"accumulator {color.slot} bound to {bound!r} received tag {input_tag!r}")
        self.accumulators[(color.slot, pe)] += value
        if self.audit:
            self.audit_events.append(("accumulate", color.slot, input_tag))

    def release_color(self, color: ColorTag) -> int:
        """Reduce this color's accumulators and free the slot."""
        total = adder_tree_reduce(
            [self.accumulators.pop((color.slot, pe)) for pe in range(self.pes)])
        del self.live_colors[color.slot]
        if self.audit:
            self.audit_events.append(("release", color.slot, color.tag))
        return total


def adder_tree_reduce(subchunk_accs) -> int:
    """Sum the per-PE accumulators (the node's reduction tree)."""
    return int(sum(int(x) for x in subchunk_accs))


def adder_tree_latency(pes_per_node: int) -> int:
    """Cycles the reduction tree takes: one level per doubling."""
    return max(0, math.ceil(math.log2(pes_per_node))) if pes_per_node > 1 else 0


@dataclass
class ClusterGrid:
    """Runtime node states for every cluster of a configuration."""

    config: ArchConfig
    nodes: list = field(default_factory=list)  # [cluster][fgr][ifgc] -> NodeState

    @property
    def total_macs(self) -> int:
        return self.config.total_macs


def node_buffer_capacities(config: ArchConfig) -> tuple[int, int]:
    """(input, filter) chunk slots per node under the active scheme."""
    if config.hierarchical_buffering:
        return config.per_node_buffer_mult, config.per_node_buffer_mult
    return 2, 2  # plain double buffering


def build_grid(config: ArchConfig, audit: bool = False) -> ClusterGrid:
    """Materialize empty node states for every grid intersection."""
    in_cap, f_cap = node_buffer_capacities(config)
    nodes = [
        [
            [
                NodeState(
                    pes=config.pes_per_node,
                    coloring=config.coloring,
                    output_buffer_depth=config.output_buffer_depth,
                    input_capacity=in_cap,
                    filter_capacity=f_cap,
                    unbounded=config.is_unbounded,
                    audit=audit,
                )
                for _ in range(config.ifgcs)
            ]
            for _ in range(config.fgrs)
        ]
        for _ in range(config.clusters)
    ]
    return ClusterGrid(config=config, nodes=nodes)
