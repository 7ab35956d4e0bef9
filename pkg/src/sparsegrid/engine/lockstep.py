"""Wave-stepped models for the broadcast and small-cluster baselines.

These machines share data through broadcasts, so their execution decomposes
into waves: one chunk position processed by every consumer of the broadcast,
with the wave lasting as long as its slowest participant (that slack is the
barrier loss the asynchronous design removes). Fetches for a wave issue when
the previous wave starts (double buffering) and drain through the same
shared cache banks as every other cluster, so bank queueing couples
clusters even though they never synchronize with each other.

The dense machine is perfectly regular, so it gets a closed form rather
than an event loop.
"""

from __future__ import annotations

import heapq

from .. import kernels
from ..arch import ArchConfig, adder_tree_latency
from ..errors import ConfigError
from ..interconnect import FILTER, IFMAP, BandwidthStats, BankPipe, chunk_transfer_bytes
from ..tensor import ceil_div
from .report import SimReport, empty_breakdown
from .workload import Workload


def dense_schedule(workload: Workload, config: ArchConfig) -> int:
    """Cycle count of the perfectly pipelined dense machine.

    Every MAC issues each cycle across the whole grid; the only overhead is
    one cache-latency pipeline fill.
    """
    return ceil_div(workload.dense_macs(), config.total_macs) + config.cache_latency


def simulate_dense(workload: Workload, config: ArchConfig):
    layer = workload.layer
    cycles = dense_schedule(workload, config)
    matched = workload.two_sided_macs()
    dense_macs = workload.dense_macs()
    breakdown = empty_breakdown()
    breakdown["nonzero_compute"] = matched
    breakdown["zero_compute"] = dense_macs - matched
    breakdown["other"] = cycles * config.total_macs - dense_macs
    stats = BandwidthStats()
    in_chunks = layer.batch * ceil_div(layer.h * layer.w * layer.d, config.chunk_size)
    fil_chunks = layer.n * workload.window_chunk_count
    stats.fetches[IFMAP] = stats.unique_chunks[IFMAP] = in_chunks
    stats.fetches[FILTER] = stats.unique_chunks[FILTER] = fil_chunks
    stats.bytes_transferred = (layer.batch * layer.h * layer.w * layer.d
                               + layer.n * layer.window_cells)
    report = SimReport(
        variant=config.variant, config=config, total_cycles=cycles,
        macs_executed=dense_macs, dense_macs=dense_macs,
        breakdown=breakdown, stats=stats,
        cluster_cycles=tuple([cycles] * config.clusters),
    )
    return report, workload.oracle_outputs()


class _WaveState:
    __slots__ = ("idx", "prev_start", "prev_end", "buckets", "accs")

    def __init__(self):
        self.idx = 0
        self.prev_start = 0
        self.prev_end = 0


def _run_waves(n_clusters, wave_counts, step, banks):
    """Drive per-cluster wave sequences through the shared banks.

    ``step(cluster, wave_idx, issue_time)`` returns (ready, duration); waves
    of different clusters interleave in issue-time order deterministically.
    """
    states = [_WaveState() for _ in range(n_clusters)]
    heap = [(0, cl) for cl in range(n_clusters) if wave_counts[cl]]
    heapq.heapify(heap)
    ends = [0] * n_clusters
    while heap:
        issue, cl = heapq.heappop(heap)
        st = states[cl]
        ready, duration = step(cl, st.idx, issue, st.prev_end)
        start = max(st.prev_end, ready)
        end = start + duration
        st.prev_start, st.prev_end = start, end
        ends[cl] = end
        st.idx += 1
        if st.idx < wave_counts[cl]:
            heapq.heappush(heap, (start, cl))
    return ends


def simulate_synchronous(workload: Workload, config: ArchConfig):
    """Large broadcast clusters: whole-cluster lockstep per chunk wave."""
    wl, cfg = workload, config
    layer = wl.layer
    R, C, P = cfg.fgrs, cfg.ifgcs, cfg.pes_per_node
    W = wl.window_chunk_count
    groups = ceil_div(layer.n, R)
    epoch = cfg.filter_temporal_reuse
    plan = wl.plan
    reduce_lat = adder_tree_latency(P)
    filter_resident = W <= 2  # double-buffered slots hold the whole filter

    cluster_cols: list[list[list[tuple[int, int]]]] = []
    for cl in range(cfg.clusters):
        tasks = [(b, o) for b in range(layer.batch) if b % cfg.clusters == cl
                 for o in range(wl.out_cells)]
        cluster_cols.append([tasks[q::C] for q in range(C)])

    waves_by_cluster = []
    for cl in range(cfg.clusters):
        max_len = max((len(t) for t in cluster_cols[cl]), default=0)
        waves = [
            (g, slot, i)
            for estart in range(0, max_len, epoch)
            for g in range(groups)
            for slot in range(estart, min(estart + epoch, max_len))
            for i in range(W)
        ]
        waves_by_cluster.append(waves)

    banks = BankPipe(cfg.cache_banks, cfg.cache_latency)
    stats = BandwidthStats()
    breakdown = empty_breakdown()
    outputs = [[0] * (wl.out_cells * layer.n) for _ in range(layer.batch)]
    acc_store: dict = {}
    macs = 0
    win_seen: set[int] = set()
    fil_seen: set[int] = set()

    def row_filter(g, f):
        group_slice = plan.sorted_filter_ids[g * R:(g + 1) * R]
        return group_slice[f] if f < len(group_slice) else None

    def step(cl, widx, issue, prev_end):
        nonlocal macs
        g, slot, i = waves_by_cluster[cl][widx]
        cols = cluster_cols[cl]
        ready = issue
        # one broadcast fetch per column for its window chunk
        for q in range(C):
            if slot >= len(cols[q]):
                continue
            b, o = cols[q][slot]
            chunk = wl.window_chunk(b, o, i)
            uid = wl.window_uid(b, o, i)
            stats.fetches[IFMAP] += 1
            win_seen.add(uid)
            stats.bytes_transferred += chunk_transfer_bytes(cfg.chunk_size, chunk.nnz)
            ready = max(ready, banks.schedule(uid, issue, stats))
        # one broadcast fetch per row for its filter chunk, unless resident
        first_task_of_pass = slot % epoch == 0
        for f in range(R):
            fid = row_filter(g, f)
            if fid is None:
                continue
            if filter_resident and not first_task_of_pass:
                stats.local_reuse_hits += 1
                continue
            chunk = wl.filter_chunk(fid, i)
            uid = wl.filter_uid(fid, i)
            stats.fetches[FILTER] += 1
            fil_seen.add(uid)
            stats.bytes_transferred += chunk_transfer_bytes(cfg.chunk_size, chunk.nnz)
            ready = max(ready, banks.schedule(uid, issue, stats))

        task_end = i == W - 1
        extras = (reduce_lat + 1) if task_end else 0
        node_counts = []
        for q in range(C):
            if slot >= len(cols[q]):
                node_counts.append(None)
                continue
            b, o = cols[q][slot]
            win = wl.window_chunk(b, o, i)
            col_counts = []
            for f in range(R):
                fid = row_filter(g, f)
                if fid is None:
                    col_counts.append(None)
                    continue
                fil = wl.filter_chunk(fid, i)
                accs, counts = kernels.chunk_dot(win.mask, win.values,
                                                 fil.mask, fil.values, P)
                col_counts.append((fid, accs, counts))
                key = (cl, q, slot, g, f)
                cell = acc_store.get(key, 0) + sum(accs)
                if task_end:
                    outputs[b][o * layer.n + fid] = cell
                    acc_store.pop(key, None)
                else:
                    acc_store[key] = cell
            node_counts.append(col_counts)
        max_count = 0
        for col_counts in node_counts:
            if not col_counts:
                continue
            for item in col_counts:
                if item:
                    max_count = max(max_count, max(item[2]))
        duration = cfg.match_latency + max_count * cfg.mac_latency + extras
        # attribute PE cycles for this wave
        for col_counts in node_counts:
            for f in range(R):
                item = col_counts[f] if col_counts else None
                for p in range(P):
                    if item is None:
                        breakdown["barrier_loss"] += (cfg.match_latency
                                                      + max_count * cfg.mac_latency)
                        breakdown["other"] += extras
                    else:
                        c = item[2][p]
                        macs += c
                        breakdown["nonzero_compute"] += c * cfg.mac_latency
                        breakdown["other"] += cfg.match_latency + extras
                        breakdown["barrier_loss"] += (max_count - c) * cfg.mac_latency
        gap = max(0, ready - prev_end)
        breakdown["bandwidth_delay"] += gap * R * C * P
        return ready, duration

    ends = _run_waves(cfg.clusters, [len(w) for w in waves_by_cluster], step, banks)
    stats.unique_chunks[IFMAP] = len(win_seen)
    stats.unique_chunks[FILTER] = len(fil_seen)
    report = SimReport(
        variant=cfg.variant, config=cfg, total_cycles=max(ends),
        macs_executed=macs, dense_macs=wl.dense_macs(),
        breakdown=breakdown, stats=stats, cluster_cycles=tuple(ends),
        ifgc_completion=tuple(((cl, q), ends[cl])
                              for cl in range(cfg.clusters) for q in range(C)),
    )
    return report, outputs


def simulate_small_clusters(workload: Workload, config: ArchConfig):
    """SparTen-style machines: many small lane clusters, local broadcasts.

    Two-sided mode serializes a co-located filter pair per lane; one-sided
    mode gives each lane one filter, elides only input zeros, and moves
    dense filter chunks.
    """
    wl, cfg = workload, config
    layer = wl.layer
    lanes = cfg.fgrs
    W = wl.window_chunk_count
    two_sided = cfg.variant == "sparten"
    reduce_lat = 0  # one PE per lane: nothing to reduce

    if two_sided:
        pairs = list(wl.colocated_plan.colocated_pairs)
        passes = ceil_div(len(pairs), lanes)
    else:
        passes = ceil_div(layer.n, lanes)

    tasks = [(b, o) for b in range(layer.batch) for o in range(wl.out_cells)]
    cluster_tasks = [tasks[cl::cfg.clusters] for cl in range(cfg.clusters)]
    waves_per_task = passes * W
    wave_counts = [len(t) * waves_per_task for t in cluster_tasks]

    banks = BankPipe(cfg.cache_banks, cfg.cache_latency)
    stats = BandwidthStats()
    breakdown = empty_breakdown()
    outputs = [[0] * (wl.out_cells * layer.n) for _ in range(layer.batch)]
    macs = 0
    win_seen: set[int] = set()
    fil_seen: set[int] = set()

    def lane_filters(pp, lane):
        if two_sided:
            idx = pp * lanes + lane
            if idx >= len(pairs):
                return ()
            a, b = pairs[idx]
            return (a,) if a == b else (a, b)
        idx = pp * lanes + lane
        return (idx,) if idx < layer.n else ()

    def step(cl, widx, issue, prev_end):
        nonlocal macs
        task_idx, rest = divmod(widx, waves_per_task)
        pp, i = divmod(rest, W)
        b, o = cluster_tasks[cl][task_idx]
        win = wl.window_chunk(b, o, i)
        uid = wl.window_uid(b, o, i)
        stats.fetches[IFMAP] += 1
        win_seen.add(uid)
        stats.bytes_transferred += chunk_transfer_bytes(cfg.chunk_size, win.nnz)
        ready = banks.schedule(uid, issue, stats)
        lane_work = []
        for lane in range(lanes):
            fids = lane_filters(pp, lane)
            busy = 0
            matched = 0
            unmatched_zero = 0
            for fid in fids:
                fil = wl.filter_chunk(fid, i)
                fuid = wl.filter_uid(fid, i)
                stats.fetches[FILTER] += 1
                fil_seen.add(fuid)
                nbytes = (cfg.chunk_size if not two_sided
                          else chunk_transfer_bytes(cfg.chunk_size, fil.nnz))
                stats.bytes_transferred += nbytes
                ready = max(ready, banks.schedule(fuid, issue, stats))
                accs, counts = kernels.chunk_dot(win.mask, win.values,
                                                 fil.mask, fil.values, 1)
                if two_sided:
                    work = counts[0]
                else:
                    work = win.nnz
                    unmatched_zero += win.nnz - counts[0]
                matched += counts[0]
                busy += cfg.match_latency + work * cfg.mac_latency
                outputs[b][o * layer.n + fid] += accs[0]
            lane_work.append((busy, matched, unmatched_zero))
        task_end = i == W - 1 and pp == passes - 1
        extras = (reduce_lat + 1) if task_end else 0
        max_busy = max(w[0] for w in lane_work)
        duration = max_busy + extras
        for busy, matched, zeros in lane_work:
            macs += matched if two_sided else (matched + zeros)
            breakdown["nonzero_compute"] += matched * cfg.mac_latency
            breakdown["zero_compute"] += zeros * cfg.mac_latency
            breakdown["other"] += (busy - (matched + zeros) * cfg.mac_latency) + extras
            breakdown["barrier_loss"] += max_busy - busy
        gap = max(0, ready - prev_end)
        breakdown["bandwidth_delay"] += gap * lanes
        return ready, duration

    ends = _run_waves(cfg.clusters, wave_counts, step, banks)
    stats.unique_chunks[IFMAP] = len(win_seen)
    stats.unique_chunks[FILTER] = len(fil_seen)
    report = SimReport(
        variant=cfg.variant, config=cfg, total_cycles=max(ends),
        macs_executed=macs, dense_macs=wl.dense_macs(),
        breakdown=breakdown, stats=stats, cluster_cycles=tuple(ends),
        ifgc_completion=tuple(((cl, 0), ends[cl]) for cl in range(cfg.clusters)),
    )
    return report, outputs
