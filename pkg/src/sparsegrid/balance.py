"""Load-balancing policies: offline filter ordering, per-input alternation,
round-robin sub-chunk rotation, and telescoping combine schedules.

Filters are sorted by whole-filter density so that filters processed side by
side have similar work. Nodes then receive them in increasing density order
on even input maps and decreasing order on odd ones; the two orderings are
mutual reverses, so undoing the per-input permutation needs only a two-way
select. Co-location mode pairs the densest with the sparsest filter on one
node and serializes the pair (used to model small-cluster baselines).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError

BALANCE_MODES = ("gbs_variant", "sparten_gbs", "none")

# Published combine schedule for 64-requester columns; other column widths
# fall back to the geometric rule below.
DEFAULT_TELESCOPE_64 = (48, 12, 2, 2)
GEOMETRIC_FRACTION = 0.75
GEOMETRIC_MIN_GROUP = 2


@dataclass(frozen=True)
class BalancePlan:
    """Offline filter ordering plus the two node-assignment permutations."""

    mode: str
    densities: tuple[float, ...]
    sorted_filter_ids: tuple[int, ...]
    orderings: tuple[tuple[int, ...], tuple[int, ...]]
    next_layer_reorder: tuple[int, ...]
    colocated_pairs: tuple[tuple[int, int], ...] | None = None

    @property
    def n(self) -> int:
        return len(self.sorted_filter_ids)


@dataclass(frozen=True)
class TelescopeSchedule:
    """Tapering group sizes that partition a column's requests."""

    group_sizes: tuple[int, ...]

    def __post_init__(self):
        if not self.group_sizes or min(self.group_sizes) < 1:
            raise ConfigError("group sizes must be positive")
        if any(a < b for a, b in zip(self.group_sizes, self.group_sizes[1:])):
            raise ConfigError(f"group sizes must be non-increasing: {self.group_sizes}")

    @property
    def total(self) -> int:
        return sum(self.group_sizes)

    def size_of_group(self, index: int) -> int:
        """Cap for the index-th combine group; the tail repeats the last size."""
        if index < len(self.group_sizes):
            return self.group_sizes[index]
        return self.group_sizes[-1]


def greedy_balance(filter_densities, mode: str = "gbs_variant") -> BalancePlan:
    """Build the offline plan: stable density sort, optional co-location."""
    if mode not in BALANCE_MODES:
        raise ConfigError(f"unknown balance mode {mode!r}")
    densities = tuple(float(x) for x in filter_densities)
    if not densities:
        raise ConfigError("at least one filter required")
    n = len(densities)
    if mode == "none":
        order = tuple(range(n))
    else:
        order = tuple(sorted(range(n), key=lambda i: (densities[i], i)))
    increasing = order
    decreasing = tuple(reversed(order))
    pairs = None
    if mode == "sparten_gbs":
        # densest with sparsest, second densest with second sparsest, ...
        pairs = tuple(
            (order[n - 1 - i], order[i]) for i in range(math.ceil(n / 2))
        )
    return BalancePlan(
        mode=mode,
        densities=densities,
        sorted_filter_ids=order,
        orderings=(increasing, decreasing),
        next_layer_reorder=order,
        colocated_pairs=pairs,
    )


def assignment_for_input(input_index: int, plan: BalancePlan) -> tuple[tuple[int, ...], int]:
    """Node -> filter map for one input map.

    Even input indices use the increasing-density ordering (permutation 0),
    odd ones the decreasing ordering (permutation 1).
    """
    permutation_id = input_index & 1
    return plan.orderings[permutation_id], permutation_id


def descramble(channel_values, permutation_id: int, plan: BalancePlan):
    """Restore node-ordered output channels to original filter order."""
    if permutation_id not in (0, 1):
        raise ConfigError(f"permutation id must be 0 or 1, got {permutation_id}")
    ordering = plan.orderings[permutation_id]
    if len(channel_values) != len(ordering):
        raise ConfigError("channel count does not match the plan")
    out = [None] * len(ordering)
    for node, value in enumerate(channel_values):
        out[ordering[node]] = value
    return out


def round_robin_subchunk(chunk_index: int, pe_count: int, pe_id: int) -> int:
    """Sub-chunk handled by one PE for the chunk_index-th chunk it sees."""
    if not 0 <= pe_id < pe_count:
        raise ConfigError(f"pe id {pe_id} out of range for {pe_count} PEs")
    return (pe_id + chunk_index) % pe_count


def telescoping_schedule(n_requesters: int, spec=None) -> TelescopeSchedule:
    """Combine-group sizes for a column of n requesters.

    ``spec`` may be an explicit size list (validated to partition n with
    non-increasing sizes) or ``("geometric", fraction, min_group)``. The
    default is the published 48/12/2/2 split for 64 requesters and the
    geometric rule with fraction 0.75, min group 2 otherwise.
    """
    if n_requesters < 1:
        raise ConfigError("need at least one requester")
    if spec is None:
        if n_requesters == 64:
            return TelescopeSchedule(DEFAULT_TELESCOPE_64)
        spec = ("geometric", GEOMETRIC_FRACTION, GEOMETRIC_MIN_GROUP)
    if isinstance(spec, tuple) and spec and spec[0] == "geometric":
        _, fraction, min_group = spec
        if not 0.0 < fraction < 1.0:
            raise ConfigError(f"fraction must lie in (0, 1), got {fraction}")
        if min_group < 1:
            raise ConfigError("min group must be >= 1")
        sizes = []
        remaining = n_requesters
        while remaining > min_group:
            g = math.ceil(fraction * remaining)
            sizes.append(g)
            remaining -= g
        if remaining:
            sizes.append(remaining)
        return TelescopeSchedule(tuple(sizes))
    sizes = tuple(int(x) for x in spec)
    if sum(sizes) != n_requesters:
        raise ConfigError(
            f"explicit schedule {sizes} does not sum to {n_requesters} requesters")
    return TelescopeSchedule(sizes)
