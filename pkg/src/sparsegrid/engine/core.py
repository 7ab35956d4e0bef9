"""Event-driven cycle-level engine for the asynchronous grid variants.

Dataflow: images go round-robin to clusters; a cluster's window tasks
(one output position of one image) go round-robin to its columns. A column
walks its tasks in epochs of ``filter_temporal_reuse`` tasks; within an
epoch it makes one pass per filter group (when there are more filters than
rows). A pass is chunk-major: the node holds filter chunk i resident and
sweeps it across all of the epoch's tasks before moving to chunk i+1, so
each filter chunk is fetched once per pass and reused across the in-flight
input maps, whose partial output cells accumulate in separate per-task
chunk-output buffers. The per-task filter follows the balance plan:
increasing density order on even local task indices, decreasing on odd.

Coloring gives every PE its own per-task sub-chunk accumulators, letting a
PE advance to the next task while a sibling lags; without it the node's
single accumulator set forces all PEs to finish one chunk pair (and drain
it through the adder tree) before any starts the next.

Timing rules (the hand-traceable contract):
  - a fetch granted at cycle g delivers its response at g + cache_latency;
    banks grant one fetch per cycle each, in event order;
  - a shared-buffer hit delivers one cycle after the request;
  - a PE that starts a sub-chunk at cycle s is busy for
    match_latency + match_count * mac_latency cycles;
  - when a task's last pair completes, the adder tree takes
    ceil(log2(PEs)) cycles, then the column converter emits the cell in
    one cycle (one cell per cycle per column).

Every PE-cycle lands in one bucket: matched MACs in nonzero_compute,
match ramps / reduction / conversion tails in other, stalls on in-flight
data in bandwidth_delay, stalls on siblings (colors, slot starvation,
accumulator barriers) in barrier_loss.
"""

from __future__ import annotations

import heapq
from collections import OrderedDict

from .. import kernels
from ..arch import ArchConfig, NodeState, adder_tree_latency, node_buffer_capacities
from ..balance import round_robin_subchunk, telescoping_schedule
from ..errors import ConfigError, SimulationError
from ..interconnect import (
    FILTER,
    IFMAP,
    BandwidthStats,
    BankPipe,
    CombinerState,
    chunk_transfer_bytes,
)
from ..tensor import ceil_div
from .report import SimReport, empty_breakdown
from .workload import Workload

UNBOUNDED = 1 << 30

# event priorities within one cycle: deliveries first, then completions,
# then start attempts, so data landing this cycle is usable this cycle
P_RESP = 0
P_DONE = 1
P_POKE = 2

CAUSE_TAIL = "drained"


class _Task:
    __slots__ = ("tag", "image", "out_cell", "filter_id", "color",
                 "pairs_done", "n_pairs", "reduced", "cell")

    def __init__(self, tag, image, out_cell, filter_id, n_pairs):
        self.tag = tag
        self.image = image
        self.out_cell = out_cell
        self.filter_id = filter_id
        self.color = None
        self.pairs_done = 0
        self.n_pairs = n_pairs
        self.reduced = False
        self.cell = 0  # running output cell when coloring is off


class _Entry:
    __slots__ = ("j", "task", "i", "win_key", "fil_key", "win_uid", "fil_uid",
                 "win_ready", "accs", "counts", "subs_done")

    def __init__(self, j, task, i, win_key, fil_key, win_uid, fil_uid):
        self.j = j
        self.task = task
        self.i = i
        self.win_key = win_key
        self.fil_key = fil_key
        self.win_uid = win_uid
        self.fil_uid = fil_uid
        self.win_ready = False
        self.accs = None
        self.counts = None
        self.subs_done = 0


class _Node:
    __slots__ = ("cluster", "fgr", "ifgc", "linear", "column", "entries",
                 "tasks", "colors", "in_used", "in_req_cursor", "fil_table",
                 "fil_req_cursor", "next_filter_need", "pe_cursor", "pe_state",
                 "pe_since", "pe_cause", "buckets", "hw_in", "hw_fil",
                 "barrier_cursor", "barrier_open", "entry_stream_pos")

    def __init__(self, cluster, fgr, ifgc, linear, pes):
        self.cluster = cluster
        self.fgr = fgr
        self.ifgc = ifgc
        self.linear = linear
        self.column = None
        self.entries: list[_Entry] = []
        self.tasks: list[_Task] = []
        self.colors: NodeState | None = None
        self.in_used = 0
        self.in_req_cursor = 0
        self.fil_table: dict = {}
        self.fil_req_cursor = 0
        self.next_filter_need = None
        self.pe_cursor = [0] * pes
        self.pe_state = ["idle"] * pes       # idle | busy | drained
        self.pe_since = [0] * pes
        self.pe_cause = [None] * pes
        self.buckets = empty_breakdown()
        self.hw_in = 0
        self.hw_fil = 0
        self.barrier_cursor = 0   # without coloring: the only startable entry
        self.barrier_open = 0     # cycle its accumulators drain free
        self.entry_stream_pos: list[int] = []


class _Column:
    __slots__ = ("cluster", "ifgc", "nodes", "combiner", "staged", "waiters",
                 "pf_inflight", "converter_free", "last_completion",
                 "hw_shared", "hw_outq", "stream", "pf_cursor", "prefetching")

    def __init__(self, cluster, ifgc):
        self.cluster = cluster
        self.ifgc = ifgc
        self.nodes: list[_Node] = []
        self.combiner: CombinerState | None = None
        self.staged: dict = {}      # shared buffer: uid -> stream position
        self.waiters: dict = {}     # uid -> nodes waiting on the staging fetch
        self.pf_inflight: set = set()
        self.converter_free = 0
        self.last_completion = 0
        self.hw_shared = 0
        self.hw_outq = 0
        self.stream: list = []      # column-order window chunk uids
        self.pf_cursor = 0
        self.prefetching = False

    def watermark(self) -> int:
        """Stream position of the slowest node's request cursor."""
        mark = 1 << 60
        for node in self.nodes:
            if not node.entries:
                continue
            if node.in_req_cursor >= len(node.entries):
                continue
            mark = min(mark, node.entry_stream_pos[node.in_req_cursor])
        return mark

    def deposit(self, uid: int, pos: int, depth: int) -> None:
        """Stage a response; evict the stalest stream position on overflow."""
        old = self.staged.get(uid)
        self.staged[uid] = pos if old is None else max(old, pos)
        while len(self.staged) > depth:
            victim = min(self.staged, key=lambda u: (self.staged[u], u))
            del self.staged[victim]
        self.hw_shared = max(self.hw_shared, len(self.staged))


class AsyncGridEngine:
    """One simulation of an asynchronous (broadcast-free) configuration."""

    def __init__(self, workload: Workload, config: ArchConfig,
                 audit_colors: bool = False, max_cycles: int = 500_000_000):
        if config.chunk_size != workload.chunk_size:
            raise ConfigError("workload chunk size does not match the config")
        self.wl = workload
        self.cfg = config
        self.audit = audit_colors
        self.max_cycles = max_cycles
        self.ideal = config.variant == "ideal"
        # unbounded buffering includes unbounded per-task accumulators
        self.colored = config.coloring or config.is_unbounded
        self.prefetch_on = config.hierarchical_buffering and not config.is_unbounded
        self.stats = BandwidthStats()
        self.heap: list = []
        self._seq = 0
        banks = UNBOUNDED if self.ideal else config.cache_banks
        latency = 0 if self.ideal else config.cache_latency
        self.banks = BankPipe(banks, latency)
        self.win_uid_seen: set[int] = set()
        self.fil_uid_seen: set[int] = set()
        self.fil_inflight: dict = {}  # (cluster, fgr, chunk key) -> outstanding fetches
        self.outputs = [
            [0] * (workload.out_cells * workload.layer.n)
            for _ in range(workload.layer.batch)
        ]
        self.cluster_end = [0] * config.clusters
        self.entries_total = 0
        self.macs = 0
        self.fil_reserves = 0
        self._build()

    # ---------------------------------------------------------------- setup

    def _build(self):
        cfg, wl = self.cfg, self.wl
        layer = wl.layer
        n, R, C = layer.n, cfg.fgrs, cfg.ifgcs
        W = wl.window_chunk_count
        groups = ceil_div(n, R)
        epoch = cfg.filter_temporal_reuse
        plan = wl.plan
        in_cap, fil_cap = node_buffer_capacities(cfg)
        if cfg.is_unbounded:
            in_cap = fil_cap = UNBOUNDED

        cluster_tasks: list[list[tuple[int, int]]] = [[] for _ in range(cfg.clusters)]
        for b in range(layer.batch):
            cl = b % cfg.clusters
            for o in range(wl.out_cells):
                cluster_tasks[cl].append((b, o))

        self.columns: list[_Column] = []
        self.nodes: list[_Node] = []
        self.rows: dict[tuple[int, int], list[_Node]] = {}
        linear = 0
        for cl in range(cfg.clusters):
            for q in range(C):
                col = _Column(cl, q)
                col_tasks = cluster_tasks[cl][q::C]
                hierarchical = cfg.hierarchical_buffering and not cfg.is_unbounded
                if (cfg.telescoping or cfg.is_unbounded) and not hierarchical:
                    col.combiner = CombinerState(
                        telescoping_schedule(R),
                        shared_depth=cfg.shared_buffer_depth,
                        use_shared_buffer=cfg.is_unbounded,
                        unbounded=cfg.is_unbounded,
                    )
                for f in range(R):
                    node = _Node(cl, f, q, linear, cfg.pes_per_node)
                    linear += 1
                    node.column = col
                    node.colors = NodeState(
                        pes=cfg.pes_per_node, coloring=self.colored,
                        output_buffer_depth=cfg.output_buffer_depth,
                        input_capacity=in_cap, filter_capacity=fil_cap,
                        unbounded=cfg.is_unbounded, audit=self.audit)
                    col.nodes.append(node)
                    self.nodes.append(node)
                    self.rows.setdefault((cl, f), []).append(node)
                self._build_column_schedule(col, col_tasks, groups, epoch, W, plan)
                self.columns.append(col)
        self.in_cap = in_cap
        self.fil_cap = fil_cap
        self.stats.unique_chunks[IFMAP] = 0
        self.stats.unique_chunks[FILTER] = 0

    def _build_column_schedule(self, col: _Column, col_tasks, groups, epoch,
                               W, plan):
        wl = self.wl
        R = self.cfg.fgrs
        pass_idx = 0
        for estart in range(0, len(col_tasks), epoch):
            window = col_tasks[estart:estart + epoch]
            for g in range(groups):
                group_slice = plan.sorted_filter_ids[g * R:(g + 1) * R]
                len_g = len(group_slice)
                # the assignment direction flips per residency window, so a
                # node keeps a single filter resident for the whole sweep
                parity = pass_idx & 1
                pass_idx += 1
                pass_tasks = [[] for _ in range(len_g)]
                for row in range(len_g):
                    node = col.nodes[row]
                    fid = (group_slice[row] if parity == 0
                           else group_slice[len_g - 1 - row])
                    for local_offset, (b, o) in enumerate(window):
                        local_idx = estart + local_offset
                        task = _Task(tag=(g, local_idx), image=b, out_cell=o,
                                     filter_id=fid, n_pairs=W)
                        node.tasks.append(task)
                        pass_tasks[row].append(task)
                # chunk-major sweep: filter chunk i stays resident while it
                # visits every in-flight task of the epoch
                for i in range(W):
                    for ti, (b, o) in enumerate(window):
                        pos = len(col.stream)
                        col.stream.append(wl.window_uid(b, o, i))
                        for row in range(len_g):
                            node = col.nodes[row]
                            task = pass_tasks[row][ti]
                            e = _Entry(len(node.entries), task, i,
                                       win_key=(b, o, i),
                                       fil_key=(task.filter_id, i),
                                       win_uid=wl.window_uid(b, o, i),
                                       fil_uid=wl.filter_uid(task.filter_id, i))
                            node.entries.append(e)
                            node.entry_stream_pos.append(pos)
        self.entries_total += sum(len(n.entries) for n in col.nodes)

    # ------------------------------------------------------------- plumbing

    def _push(self, time, prio, kind, payload):
        self._seq += 1
        heapq.heappush(self.heap, (time, prio, self._seq, kind, payload))

    def _fetch(self, kind: str, uid: int, nnz: int, now: int) -> int:
        self.stats.fetches[kind] += 1
        if kind == IFMAP:
            self.win_uid_seen.add(uid)
        else:
            self.fil_uid_seen.add(uid)
        self.stats.bytes_transferred += chunk_transfer_bytes(self.cfg.chunk_size, nnz)
        return self.banks.schedule(uid, now, self.stats)

    # --------------------------------------------------------- input window

    def _column_prefetch(self, col: _Column, now: int):
        """Stage upcoming window chunks of the column stream in the shared
        buffer, staying shared_buffer_depth ahead of the slowest node.

        Under hierarchical buffering this staging engine is the only cache
        client for the column's windows; nodes pull from the shared buffer
        (or wait on it), never from the cache directly.
        """
        if not self.prefetch_on or col.prefetching:
            return
        col.prefetching = True
        limit = col.watermark() + self.cfg.shared_buffer_depth
        while col.pf_cursor < len(col.stream) and col.pf_cursor < limit:
            pos = col.pf_cursor
            uid = col.stream[pos]
            col.pf_cursor += 1
            if uid in col.staged:
                col.staged[uid] = max(col.staged[uid], pos)
                continue
            if uid in col.pf_inflight:
                continue
            col.pf_inflight.add(uid)
            t = self._fetch(IFMAP, uid, self._win_nnz(uid), now)
            self._push(t, P_RESP, "win_fill", (col, uid, pos))
        col.prefetching = False

    def _win_nnz(self, uid: int) -> int:
        wl = self.wl
        rest, i = divmod(uid // 2, wl.window_chunk_count)
        b, o = divmod(rest, wl.out_cells)
        return wl.window_chunk(b, o, i).nnz

    def _issue_input_requests(self, node: _Node, now: int):
        cap = self.in_cap
        entries = node.entries
        moved = False
        while node.in_req_cursor < len(entries) and node.in_used < cap:
            e = entries[node.in_req_cursor]
            node.in_req_cursor += 1
            node.in_used += 1
            moved = True
            node.hw_in = max(node.hw_in, node.in_used)
            col = node.column
            b, o, i = e.win_key
            chunk = self.wl.window_chunk(b, o, i)
            pos = node.entry_stream_pos[e.j]
            if self.prefetch_on:
                if e.win_uid in col.staged:
                    self.stats.shared_buffer_hits += 1
                    self._push(now + 1, P_RESP, "win_hit", (node, e.j))
                else:
                    # pull from the shared buffer once staging delivers
                    col.waiters.setdefault(e.win_uid, []).append((node, e.j))
            elif col.combiner is not None:
                outcome = col.combiner.on_request(e.win_uid, (node, e.j))
                if outcome == "shared_hit":
                    self.stats.shared_buffer_hits += 1
                    self._push(now + 1, P_RESP, "win_hit", (node, e.j))
                elif outcome == "fired":
                    t = self._fetch(IFMAP, e.win_uid, chunk.nnz, now)
                    self._push(t, P_RESP, "win_resp", (col, e.win_uid, pos))
                if col.combiner.use_shared_buffer:
                    col.hw_shared = max(col.hw_shared, len(col.combiner.shared))
            else:
                t = self._fetch(IFMAP, e.win_uid, chunk.nnz, now)
                self._push(t, P_RESP, "win_direct", (node, e.j, e.win_uid, pos))
        if moved:
            self._column_prefetch(node.column, now)

    def _deliver_window(self, node: _Node, j: int):
        e = node.entries[j]
        if not e.win_ready:
            e.win_ready = True
            self.stats.deliveries += 1

    # --------------------------------------------------------------- filter

    def _filter_prefetch(self, node: _Node, now: int):
        entries = node.entries
        node.next_filter_need = None
        while node.fil_req_cursor < len(entries):
            e = entries[node.fil_req_cursor]
            key = e.fil_key
            slot = node.fil_table.get(key)
            if slot is not None:
                slot["ref"] += 1
                self.stats.local_reuse_hits += 1
                node.fil_req_cursor += 1
                continue
            if len(node.fil_table) >= self.fil_cap and not self._evict_filter(node):
                node.next_filter_need = key
                return
            node.fil_table[key] = {"state": "reserved", "ref": 1}
            node.hw_fil = max(node.hw_fil, len(node.fil_table))
            self.fil_reserves += 1
            node.fil_req_cursor += 1
            row_key = (node.cluster, node.fgr, key)
            if self.cfg.snarfing and self.fil_inflight.get(row_key, 0) > 0:
                # a row peer's fetch is on the wire; its response snarfs here
                continue
            self.fil_inflight[row_key] = self.fil_inflight.get(row_key, 0) + 1
            fid, i = key
            chunk = self.wl.filter_chunk(fid, i)
            t = self._fetch(FILTER, e.fil_uid, chunk.nnz, now)
            self._push(t, P_RESP, "fil_resp", (node, key, e.fil_uid))

    def _evict_filter(self, node: _Node) -> bool:
        for key, slot in node.fil_table.items():
            if slot["state"] == "present" and slot["ref"] == 0:
                del node.fil_table[key]
                return True
        return False

    def _fill_filter(self, node: _Node, key, now: int, snarfed: bool):
        slot = node.fil_table.get(key)
        if slot is None:
            # snarf into a node with no reservation: occupies a free slot
            node.fil_table[key] = {"state": "present", "ref": 0}
            node.hw_fil = max(node.hw_fil, len(node.fil_table))
        elif slot["state"] == "reserved":
            slot["state"] = "present"
        else:
            return  # duplicate response; data already here
        self.stats.deliveries += 1
        if snarfed:
            self.stats.snarfed_fills += 1
        self._filter_prefetch(node, now)
        self._push(now, P_POKE, "poke", node)

    def _on_filter_response(self, node: _Node, key, uid: int, now: int):
        row_key = (node.cluster, node.fgr, key)
        if self.fil_inflight.get(row_key, 0) > 0:
            self.fil_inflight[row_key] -= 1
            if not self.fil_inflight[row_key]:
                del self.fil_inflight[row_key]
        self._fill_filter(node, key, now, snarfed=False)
        if self.cfg.snarfing:
            for peer in self.rows[(node.cluster, node.fgr)]:
                if peer is node:
                    continue
                slot = peer.fil_table.get(key)
                if slot is not None and slot["state"] == "reserved":
                    self._fill_filter(peer, key, now, snarfed=True)
                elif slot is None and len(peer.fil_table) < self.fil_cap \
                        and peer.next_filter_need == key:
                    self._fill_filter(peer, key, now, snarfed=True)

    # ------------------------------------------------------------------ PEs

    def _attempt_start(self, node: _Node, p: int, now: int):
        if node.pe_state[p] == "busy":
            return
        j = node.pe_cursor[p]
        if j >= len(node.entries):
            if node.pe_state[p] != "drained":
                self._close_block(node, p, now)
                node.pe_state[p] = "drained"
                node.pe_since[p] = now
                node.pe_cause[p] = CAUSE_TAIL
            return
        e = node.entries[j]
        cause = None
        if not self.colored and (j != node.barrier_cursor
                                 or now < node.barrier_open):
            cause = "barrier_loss"  # shared accumulators: wait for siblings
        elif not e.win_ready:
            cause = ("bandwidth_delay" if j < node.in_req_cursor else "barrier_loss")
        else:
            slot = node.fil_table.get(e.fil_key)
            if slot is None:
                cause = "barrier_loss"   # starved for a filter buffer slot
            elif slot["state"] != "present":
                cause = "bandwidth_delay"
            elif self.colored and e.task.color is None:
                color = node.colors.acquire_color(e.task.tag)
                if color is None:
                    cause = "barrier_loss"  # colors exhausted
                else:
                    e.task.color = color
        if cause is not None:
            if node.pe_state[p] == "idle" and node.pe_cause[p] is None:
                node.pe_since[p] = now
                node.pe_cause[p] = cause
            elif node.pe_cause[p] != cause:
                self._close_block(node, p, now)
                node.pe_since[p] = now
                node.pe_cause[p] = cause
            return
        # all clear: run this PE's sub-chunk
        self._close_block(node, p, now)
        if e.counts is None:
            b, o, i = e.win_key
            win = self.wl.window_chunk(b, o, i)
            fil = self.wl.filter_chunk(e.fil_key[0], i)
            e.accs, e.counts = kernels.chunk_dot(
                win.mask, win.values, fil.mask, fil.values, self.cfg.pes_per_node)
        sub = (round_robin_subchunk(j, self.cfg.pes_per_node, p)
               if self.cfg.round_robin else p)
        count = e.counts[sub]
        self.macs += count
        node.buckets["other"] += self.cfg.match_latency
        node.buckets["nonzero_compute"] += count * self.cfg.mac_latency
        busy = self.cfg.match_latency + count * self.cfg.mac_latency
        node.pe_state[p] = "busy"
        self._push(now + busy, P_DONE, "pe_done", (node, p, j, sub))

    def _close_block(self, node: _Node, p: int, now: int):
        cause = node.pe_cause[p]
        if cause is not None and now > node.pe_since[p]:
            bucket = "other" if cause == CAUSE_TAIL else cause
            node.buckets[bucket] += now - node.pe_since[p]
        node.pe_cause[p] = None

    def _on_pe_done(self, node: _Node, p: int, j: int, sub: int, now: int):
        e = node.entries[j]
        task = e.task
        if self.colored:
            node.colors.accumulate(task.color, p, int(e.accs[sub]), task.tag)
        node.pe_state[p] = "idle"
        node.pe_cursor[p] = j + 1
        e.subs_done += 1
        if e.subs_done == self.cfg.pes_per_node:
            node.in_used -= 1
            slot = node.fil_table[e.fil_key]
            slot["ref"] -= 1
            task.pairs_done += 1
            reduce_lat = adder_tree_latency(self.cfg.pes_per_node)
            if not self.colored:
                # one shared accumulator set: drain it through the adder
                # tree into the task's chunk-output cell before the next pair
                task.cell += sum(int(a) for a in e.accs)
                node.barrier_cursor = j + 1
                node.barrier_open = now + reduce_lat
                if reduce_lat:
                    self._push(node.barrier_open, P_POKE, "poke", node)
            self._issue_input_requests(node, now)
            if node.next_filter_need is not None:
                self._filter_prefetch(node, now)
            if task.pairs_done == task.n_pairs:
                self._push(now + reduce_lat, P_DONE, "task_reduced", (node, task))
        self._attempt_start(node, p, now)

    def _on_task_reduced(self, node: _Node, task: _Task, now: int):
        if self.colored:
            value = node.colors.release_color(task.color)
        else:
            value = task.cell
        task.reduced = True
        col = node.column
        start = max(now, col.converter_free)
        done = start + 1
        col.hw_outq = max(col.hw_outq, start - now + 1)
        col.converter_free = done
        self.outputs[task.image][task.out_cell * self.wl.layer.n + task.filter_id] = value
        col.last_completion = max(col.last_completion, done)
        self.cluster_end[node.cluster] = max(self.cluster_end[node.cluster], done)
        self._push(now, P_POKE, "poke", node)

    # ------------------------------------------------------------------ run

    def run(self) -> tuple[SimReport, list]:
        for node in self.nodes:
            self._issue_input_requests(node, 0)
            self._filter_prefetch(node, 0)
        for node in self.nodes:
            for p in range(self.cfg.pes_per_node):
                self._attempt_start(node, p, 0)
        heap = self.heap
        while heap:
            now, _prio, _seq, kind, payload = heapq.heappop(heap)
            if now > self.max_cycles:
                raise SimulationError(
                    f"simulation passed {self.max_cycles} cycles; likely stuck")
            if kind == "win_resp":
                col, uid, pos = payload
                members = [m for m in col.combiner.on_response(uid)
                           if m is not None]
                if col.combiner.use_shared_buffer:
                    col.hw_shared = max(col.hw_shared, len(col.combiner.shared))
                if len(members) > 1:
                    self.stats.combined_requests += len(members) - 1
                for (node, j) in members:
                    self._deliver_window(node, j)
                for (node, _j) in members:
                    self._push(now, P_POKE, "poke", node)
            elif kind == "win_fill":
                col, uid, pos = payload
                col.pf_inflight.discard(uid)
                col.deposit(uid, pos, self.cfg.shared_buffer_depth)
                members = col.waiters.pop(uid, [])
                if members:
                    self.stats.combined_requests += len(members) - 1
                for (node, j) in members:
                    self._deliver_window(node, j)
                for (node, _j) in members:
                    self._push(now, P_POKE, "poke", node)
                self._column_prefetch(col, now)
            elif kind == "win_direct":
                node, j, uid, pos = payload
                self._deliver_window(node, j)
                self._push(now, P_POKE, "poke", node)
            elif kind == "win_hit":
                node, j = payload
                self._deliver_window(node, j)
                self._push(now, P_POKE, "poke", node)
            elif kind == "fil_resp":
                node, key, uid = payload
                self._on_filter_response(node, key, uid, now)
            elif kind == "pe_done":
                node, p, j, sub = payload
                self._on_pe_done(node, p, j, sub, now)
            elif kind == "task_reduced":
                node, task = payload
                self._on_task_reduced(node, task, now)
            elif kind == "poke":
                node = payload
                for p in range(self.cfg.pes_per_node):
                    self._attempt_start(node, p, now)
        return self._finish()

    def _finish(self) -> tuple[SimReport, list]:
        incomplete = [
            (n.cluster, n.fgr, n.ifgc, t.tag)
            for n in self.nodes for t in n.tasks if not t.reduced
        ]
        if incomplete:
            raise SimulationError(
                f"{len(incomplete)} tasks never completed; first: {incomplete[:5]}")
        breakdown = empty_breakdown()
        for node in self.nodes:
            end = self.cluster_end[node.cluster]
            for p in range(self.cfg.pes_per_node):
                self._close_block(node, p, end)
                node.pe_cause[p] = None
            for k, v in node.buckets.items():
                breakdown[k] += v
        self.stats.unique_chunks[IFMAP] = len(self.win_uid_seen)
        self.stats.unique_chunks[FILTER] = len(self.fil_uid_seen)
        self.stats.need_events = 2 * self.entries_total
        self.stats.filter_reserves = self.fil_reserves
        report = SimReport(
            variant=self.cfg.variant,
            config=self.cfg,
            total_cycles=max(self.cluster_end),
            macs_executed=self.macs,
            dense_macs=self.wl.dense_macs(),
            breakdown=breakdown,
            stats=self.stats,
            cluster_cycles=tuple(self.cluster_end),
            ifgc_completion=tuple(
                ((c.cluster, c.ifgc), c.last_completion) for c in self.columns),
            buffer_high_water={
                "input_slots": max((n.hw_in for n in self.nodes), default=0),
                "filter_slots": max((n.hw_fil for n in self.nodes), default=0),
                "colors": max((n.colors.hw_colors for n in self.nodes), default=0),
                "shared_buffer": max((c.hw_shared for c in self.columns), default=0),
                "converter_queue": max((c.hw_outq for c in self.columns), default=0),
            },
        )
        return report, self.outputs
