"""Cache-bank model plus the two bandwidth reducers.

Input-map requests from a column are merged by a combiner that follows a
telescoping schedule: the first request of a group fires the cache fetch
when no fetch for that chunk is already in flight; followers absorb into the
open group. A group closes when it reaches its scheduled size (firing its
own fetch if it still needs one) or when a response for its chunk arrives,
which serves the members without any new fetch. Responses can also be kept
in a shared per-column buffer so laggards hit locally instead of refetching.

Filter responses are snarfed: a fetch response fills every same-row node
that has a free filter slot and whose next needed chunk is exactly the one
fetched.
"""

from __future__ import annotations

from collections import OrderedDict, deque
from dataclasses import dataclass, field

from .balance import TelescopeSchedule
from .errors import ConfigError

IFMAP = "ifmap_chunk"
FILTER = "filter_chunk"


@dataclass(frozen=True)
class FetchRequest:
    requester: tuple  # (cluster, fgr, ifgc, node)
    kind: str
    chunk_id: int
    issue_cycle: int


@dataclass
class BandwidthStats:
    """Monotone transfer counters for one simulation."""

    fetches: dict = field(default_factory=lambda: {IFMAP: 0, FILTER: 0})
    unique_chunks: dict = field(default_factory=lambda: {IFMAP: 0, FILTER: 0})
    combined_requests: int = 0
    snarfed_fills: int = 0
    shared_buffer_hits: int = 0
    local_reuse_hits: int = 0
    filter_reserves: int = 0
    deliveries: int = 0
    need_events: int = 0
    bank_conflict_stall_cycles: int = 0
    bytes_transferred: int = 0

    def refetches(self, kind: str) -> int:
        return max(0, self.fetches[kind] - self.unique_chunks[kind])

    @property
    def total_fetches(self) -> int:
        return sum(self.fetches.values())

    @property
    def total_refetches(self) -> int:
        return self.refetches(IFMAP) + self.refetches(FILTER)

    def refetches_per_chunk(self) -> float:
        unique = sum(self.unique_chunks.values())
        return self.total_refetches / unique if unique else 0.0


def record_transfer(stats: BandwidthStats, kind: str, nbytes: int) -> BandwidthStats:
    """Count one fetch's bytes (mask plus occupied value bytes)."""
    if nbytes < 0:
        raise ConfigError("transfer size cannot be negative")
    if kind not in (IFMAP, FILTER):
        raise ConfigError(f"unknown transfer kind {kind!r}")
    stats.bytes_transferred += nbytes
    return stats


def chunk_transfer_bytes(chunk_size: int, nnz: int) -> int:
    """Bytes a sparse chunk occupies on the wire: full mask + packed values."""
    return chunk_size // 8 + nnz


def bank_arbitrate(requests, banks: int, cycle: int = 0):
    """One cycle of bank arbitration.

    chunk_id mod banks selects the bank; each bank grants a single request
    per cycle, ties broken round-robin by requester id with the rotation
    advancing every cycle. Returns (grants, deferrals).
    """
    if banks < 1:
        raise ConfigError("need at least one bank")
    by_bank: dict[int, list] = {}
    keys = {}
    for req in requests:
        by_bank.setdefault(req.chunk_id % banks, []).append(req)
        keys[id(req)] = _requester_key(req.requester)
    modulus = max(keys.values(), default=0) + 1
    grants, deferrals = [], []
    for _, queue in sorted(by_bank.items()):
        queue.sort(key=lambda r: ((keys[id(r)] - cycle) % modulus, r.chunk_id))
        grants.append(queue[0])
        deferrals.extend(queue[1:])
    return grants, deferrals


def _requester_key(requester) -> int:
    if isinstance(requester, tuple):
        key = 0
        for part in requester:
            key = key * 1009 + int(part)
        return key
    return int(requester)


class BankPipe:
    """Incremental bank timing: FIFO per bank, one grant per cycle."""

    def __init__(self, banks: int, cache_latency: int):
        self.banks = banks
        self.cache_latency = cache_latency
        self.next_free: dict[int, int] = {}

    def schedule(self, chunk_id: int, cycle: int, stats: BandwidthStats | None = None
                 ) -> int:
        """Enqueue a fetch; returns the cycle its response arrives."""
        bank = chunk_id % self.banks
        grant = max(cycle, self.next_free.get(bank, 0))
        self.next_free[bank] = grant + 1
        if stats is not None and grant > cycle:
            stats.bank_conflict_stall_cycles += grant - cycle
        return grant + self.cache_latency


@dataclass
class CombineGroup:
    chunk_id: int
    cap: int
    size: int = 0
    fired: bool = False


class CombinerState:
    """Per-column request combiner and shared response buffer.

    The leader of a fresh group fires the cache fetch immediately when no
    fetch for the chunk is in flight, so combining adds no leader latency.
    Later groups wait on the in-flight response; if they fill to their cap
    first they fire their own fetch. Any response for a chunk serves every
    member still waiting on it, and closes the open group without a fetch,
    which is what stretches the effective combining count.
    """

    def __init__(self, schedule: TelescopeSchedule, shared_depth: int,
                 use_shared_buffer: bool, unbounded: bool = False):
        self.schedule = schedule
        self.use_shared_buffer = use_shared_buffer
        self.shared_depth = shared_depth
        self.unbounded = unbounded
        self.open_groups: dict[int, CombineGroup] = {}
        self.group_index: dict[int, int] = {}   # chunk -> next schedule position
        self.inflight: dict[int, int] = {}      # chunk -> outstanding fetches
        self.waiting: dict[int, list] = {}      # chunk -> unserved members
        self.shared: OrderedDict[int, bool] = OrderedDict()
        self.hw_shared = 0

    def group_cap(self, chunk_id: int) -> int:
        if self.unbounded:
            return 1 << 30
        return self.schedule.size_of_group(self.group_index.get(chunk_id, 0))

    def prefetch(self, chunk_id: int) -> bool:
        """Register a fetch ahead of any requester (shared-buffer staging).

        Returns True when the caller must issue the cache fetch; later
        requests for the chunk join the in-flight response instead of
        opening their own fetch.
        """
        if self.use_shared_buffer and chunk_id in self.shared:
            return False
        if self.inflight.get(chunk_id, 0) > 0:
            return False
        self.inflight[chunk_id] = 1
        return True

    def on_request(self, chunk_id: int, member) -> str:
        """Route one request. Returns one of:

        "shared_hit" - served from the shared buffer, no fetch
        "joined"     - waiting on an in-flight response, no new fetch
        "fired"      - caller must issue a cache fetch for this chunk
        """
        if self.use_shared_buffer and chunk_id in self.shared:
            return "shared_hit"
        self.waiting.setdefault(chunk_id, []).append(member)
        group = self.open_groups.get(chunk_id)
        if group is None:
            group = CombineGroup(chunk_id, self.group_cap(chunk_id))
            self.open_groups[chunk_id] = group
            self.group_index[chunk_id] = self.group_index.get(chunk_id, 0) + 1
            if self.inflight.get(chunk_id, 0) == 0:
                group.fired = True
                self.inflight[chunk_id] = 1
        group.size += 1
        fired_now = False
        if group.size == 1 and group.fired:
            fired_now = True
        elif group.size >= group.cap and not group.fired:
            # cap reached while waiting: lose patience and fetch anyway
            group.fired = True
            self.inflight[chunk_id] = self.inflight.get(chunk_id, 0) + 1
            fired_now = True
        if group.size >= group.cap:
            del self.open_groups[chunk_id]
        return "fired" if fired_now else "joined"

    def on_response(self, chunk_id: int) -> list:
        """A fetch response arrived: serve all waiters and close the group."""
        members = self.waiting.pop(chunk_id, [])
        self.open_groups.pop(chunk_id, None)
        if self.inflight.get(chunk_id, 0) > 0:
            self.inflight[chunk_id] -= 1
            if not self.inflight[chunk_id]:
                del self.inflight[chunk_id]
        # a served wave ends this chunk's request burst; the next burst
        # (e.g. the next filter-group pass) starts the schedule over
        self.group_index.pop(chunk_id, None)
        if self.use_shared_buffer:
            self._deposit(chunk_id)
        return members

    def _deposit(self, chunk_id: int) -> None:
        if chunk_id in self.shared:
            self.shared.move_to_end(chunk_id)
            return
        self.shared[chunk_id] = True
        if not self.unbounded:
            while len(self.shared) > self.shared_depth:
                self.shared.popitem(last=False)
        self.hw_shared = max(self.hw_shared, len(self.shared))


def combine_ifmap_request(req: FetchRequest, state: CombinerState) -> str:
    """Spec-level wrapper: route one column request through the combiner."""
    if req.kind != IFMAP:
        raise ConfigError("combiner only handles input map requests")
    return state.on_request(req.chunk_id, req.requester)


def snarf_filter_fill(chunk_id: int, requester, row_states: dict) -> list:
    """Peers in the row that catch this filter response.

    ``row_states`` maps node id -> (free_slots, next_needed_chunk_id). A peer
    is filled iff it has a free slot and its next needed filter chunk is
    exactly the fetched one. The requester itself is always served.
    """
    fills = [requester]
    for node_id, (free_slots, next_needed) in sorted(row_states.items()):
        if node_id == requester:
            continue
        if free_slots > 0 and next_needed == chunk_id:
            fills.append(node_id)
    return fills
