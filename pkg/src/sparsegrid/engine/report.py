"""Simulation reports: cycle totals, PE-cycle attribution, transfer stats."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..arch import ArchConfig
from ..interconnect import BandwidthStats

BUCKETS = ("nonzero_compute", "zero_compute", "barrier_loss",
           "bandwidth_delay", "other")


@dataclass
class SimReport:
    """Outcome of one simulation run.

    ``breakdown`` attributes every PE-cycle (from cycle 0 to the PE's
    cluster's completion) to exactly one bucket, so the buckets sum to
    sum(cluster_cycles[c] * PEs per cluster).
    """

    variant: str
    config: ArchConfig
    total_cycles: int
    macs_executed: int
    dense_macs: int
    breakdown: dict[str, int]
    stats: BandwidthStats
    cluster_cycles: tuple[int, ...] = ()
    ifgc_completion: tuple = ()
    buffer_high_water: dict = field(default_factory=dict)

    @property
    def total_pes(self) -> int:
        return self.config.total_macs

    def accounted_pe_cycles(self) -> int:
        return sum(self.breakdown.get(b, 0) for b in BUCKETS)

    def expected_pe_cycles(self) -> int:
        per_cluster_pes = self.config.macs_per_cluster
        return sum(c * per_cluster_pes for c in self.cluster_cycles)

    def breakdown_shares(self) -> dict[str, float]:
        total = self.accounted_pe_cycles()
        if not total:
            return {b: 0.0 for b in BUCKETS}
        return {b: self.breakdown.get(b, 0) / total for b in BUCKETS}

    def scalar_row(self) -> dict:
        """Flat dict for CSV/JSON emission."""
        row = {
            "variant": self.variant,
            "total_cycles": self.total_cycles,
            "macs_executed": self.macs_executed,
            "dense_macs": self.dense_macs,
        }
        for b in BUCKETS:
            row[b] = self.breakdown.get(b, 0)
        s = self.stats
        row.update(
            fetches_ifmap=s.fetches["ifmap_chunk"],
            fetches_filter=s.fetches["filter_chunk"],
            refetches_ifmap=s.refetches("ifmap_chunk"),
            refetches_filter=s.refetches("filter_chunk"),
            unique_ifmap_chunks=s.unique_chunks["ifmap_chunk"],
            unique_filter_chunks=s.unique_chunks["filter_chunk"],
            refetches_per_chunk=round(s.refetches_per_chunk(), 6),
            combined_requests=s.combined_requests,
            snarfed_fills=s.snarfed_fills,
            shared_buffer_hits=s.shared_buffer_hits,
            bank_conflict_stall_cycles=s.bank_conflict_stall_cycles,
            bytes_transferred=s.bytes_transferred,
        )
        return row


def empty_breakdown() -> dict[str, int]:
    return {b: 0 for b in BUCKETS}
