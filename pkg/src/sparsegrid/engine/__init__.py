"""Simulation entry points: variant dispatch, feature isolation, reports."""

from __future__ import annotations

from dataclasses import replace

from ..arch import ArchConfig
from ..errors import ConfigError, SimulationError
from ..tensor import SparseTensor, relu_compress
from .core import AsyncGridEngine
from .lockstep import (
    dense_schedule as _dense_schedule,
    simulate_dense,
    simulate_small_clusters,
    simulate_synchronous,
)
from .report import BUCKETS, SimReport
from .workload import Workload, build_workload, derive_seed

__all__ = [
    "Workload", "SimReport", "BUCKETS", "build_workload", "derive_seed",
    "simulate", "dense_schedule", "breakdown_attribution", "isolate_features",
    "ISOLATION_LADDER",
]

# cumulative feature ladder from bare asynchronous grid to the full design;
# the bandwidth pair (request combining + snarfing) lands as one step
ISOLATION_LADDER = (
    ("barista_no_opts", {}),
    ("+request_combining", {"telescoping": True, "snarfing": True}),
    ("+coloring", {"coloring": True}),
    ("+hierarchical_buffering", {"hierarchical_buffering": True}),
    ("+round_robin", {"round_robin": True}),
)


def dense_schedule(workload: Workload, config: ArchConfig) -> int:
    if config.variant != "dense":
        raise ConfigError("dense_schedule applies to the dense variant only")
    return _dense_schedule(workload, config)


def simulate(workload: Workload, config: ArchConfig, audit_colors: bool = False,
             max_cycles: int = 500_000_000) -> tuple[SimReport, list[SparseTensor]]:
    """Run one workload on one configuration.

    Returns the report and, per input map, the layer's output tensor after
    ReLU and int8 saturation, ready to feed a next layer.
    """
    if config.chunk_size != workload.chunk_size:
        raise ConfigError("config chunk_size differs from the workload's")
    if config.variant == "dense":
        report, raw = simulate_dense(workload, config)
    elif config.variant in ("sparten", "one_sided"):
        report, raw = simulate_small_clusters(workload, config)
    elif config.variant == "synchronous":
        report, raw = simulate_synchronous(workload, config)
    else:
        engine = AsyncGridEngine(workload, config, audit_colors=audit_colors,
                                 max_cycles=max_cycles)
        report, raw = engine.run()
    layer = workload.layer
    out_dims = (layer.out_h, layer.out_w, layer.n)
    outputs = [relu_compress(values, workload.chunk_size, dims=out_dims)
               for values in raw]
    return report, outputs


def breakdown_attribution(report: SimReport) -> dict[str, int]:
    """Validate and return the report's PE-cycle attribution.

    Every PE-cycle from 0 to its cluster's completion must land in exactly
    one bucket; a mismatch means the engine lost track of time somewhere.
    """
    accounted = report.accounted_pe_cycles()
    expected = report.expected_pe_cycles()
    if accounted != expected:
        raise SimulationError(
            f"attribution mismatch: {accounted} PE-cycles in buckets, "
            f"{expected} from cluster completion times")
    return dict(report.breakdown)


def isolate_features(workload: Workload, base_config: ArchConfig,
                     max_cycles: int = 500_000_000) -> list[tuple[str, SimReport]]:
    """Cumulative feature ladder from the bare grid to the full design."""
    if base_config.variant != "barista_no_opts":
        raise ConfigError("the isolation ladder starts from barista_no_opts")
    results = []
    flags: dict = {}
    for idx, (label, step_flags) in enumerate(ISOLATION_LADDER):
        flags.update(step_flags)
        cfg = replace(base_config, **flags)
        if idx == len(ISOLATION_LADDER) - 1:
            cfg = replace(cfg, variant="barista")
        report, _ = simulate(workload, cfg, max_cycles=max_cycles)
        results.append((label, report))
    return results
