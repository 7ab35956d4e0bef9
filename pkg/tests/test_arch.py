import math

import pytest

from sparsegrid.arch import (
    ArchConfig,
    ColorTag,
    NodeState,
    VARIANTS,
    adder_tree_latency,
    adder_tree_reduce,
    arch_preset,
    buffer_accounting,
    build_grid,
)
from sparsegrid.errors import ConfigError, SimulationError


class TestGrid:
    def test_full_scale_barista_macs(self):
        cfg = arch_preset("barista", scale="full")
        assert cfg.fgrs == 64 and cfg.ifgcs == 32 and cfg.pes_per_node == 4
        assert cfg.macs_per_cluster == 8192
        assert cfg.total_macs == 32768

    def test_all_full_presets_hit_32k_macs(self):
        for variant in VARIANTS:
            assert arch_preset(variant, scale="full").total_macs == 32768

    def test_sparten_full_preset_shape(self):
        cfg = arch_preset("sparten", scale="full")
        assert cfg.clusters == 1024
        assert cfg.macs_per_cluster == 32

    def test_desk_presets_hit_256_macs(self):
        for variant in VARIANTS:
            assert arch_preset(variant, scale="desk").total_macs == 256

    def test_single_pe_grid(self):
        cfg = ArchConfig(variant="barista", clusters=1, fgrs=1, ifgcs=1, pes_per_node=1)
        grid = build_grid(cfg)
        assert len(grid.nodes) == 1
        assert len(grid.nodes[0]) == 1
        assert len(grid.nodes[0][0]) == 1
        assert grid.total_macs == 1

    def test_grid_dimensions_match_config(self):
        cfg = arch_preset("barista", scale="desk")
        grid = build_grid(cfg)
        assert len(grid.nodes) == cfg.clusters
        assert len(grid.nodes[0]) == cfg.fgrs
        assert len(grid.nodes[0][0]) == cfg.ifgcs

    def test_invalid_dims_rejected(self):
        with pytest.raises(ConfigError):
            ArchConfig(variant="barista", clusters=0, fgrs=1, ifgcs=1, pes_per_node=1)
        with pytest.raises(ConfigError):
            ArchConfig(variant="nope", clusters=1, fgrs=1, ifgcs=1, pes_per_node=1)


class TestBufferAccounting:
    def test_flat_scheme_reproduces_reference_figures(self):
        # 1 PE/node, 128 nodes per row, 64 rows, 4 clusters, no coloring
        cfg = ArchConfig(variant="barista_no_opts", clusters=4, fgrs=64,
                         ifgcs=128, pes_per_node=1, hierarchical_buffering=False)
        budget = buffer_accounting(cfg)
        assert budget.scheme == "flat"
        assert budget.per_pe_bytes == 578
        assert budget.per_fgr_bytes == 72.25 * 1024
        assert budget.total_bytes == 18939904  # 18.0625 MB
        assert round(budget.total_mb, 4) == 18.0625
        assert round(budget.total_mb) == 18

    def test_flat_scheme_four_pes_sharing(self):
        cfg = ArchConfig(variant="barista_no_opts", clusters=4, fgrs=64,
                         ifgcs=32, pes_per_node=4, hierarchical_buffering=False)
        budget = buffer_accounting(cfg)
        assert budget.total_bytes == 4734976  # 4.515625 MB
        assert round(budget.total_mb, 1) == 4.5

    def test_hierarchical_scheme_reproduces_reference_figures(self):
        cfg = arch_preset("barista", scale="full")
        budget = buffer_accounting(cfg)
        assert budget.scheme == "hierarchical"
        assert budget.per_ifgc_bytes == 62720
        assert budget.per_ifgc_kb == 61.25
        assert budget.per_pe_bytes == 245
        assert budget.total_bytes == 8028160  # 7.65625 MB
        assert round(budget.total_mb, 2) == 7.66

    def test_total_consistency_invariant(self):
        for variant in ("barista", "barista_no_opts", "synchronous"):
            cfg = arch_preset(variant, scale="full")
            b = buffer_accounting(cfg)
            assert b.total_bytes == b.per_ifgc_bytes * cfg.ifgcs * cfg.clusters
            assert b.total_bytes == b.per_cluster_bytes * cfg.clusters


class TestColors:
    def make_node(self, coloring=True, depth=16):
        return NodeState(pes=4, coloring=coloring, output_buffer_depth=depth,
                         input_capacity=3, filter_capacity=3)

    def test_first_grant_is_slot_zero(self):
        node = self.make_node()
        color = node.acquire_color("map-a")
        assert color.slot == 0

    def test_exhaustion_stalls(self):
        node = self.make_node(depth=2)
        assert node.acquire_color("a") is not None
        assert node.acquire_color("b") is not None
        assert node.acquire_color("c") is None

    def test_without_coloring_single_accumulator_barrier(self):
        node = self.make_node(coloring=False)
        first = node.acquire_color("t0")
        assert first is not None
        assert node.acquire_color("t1") is None  # sibling still on t0
        node.release_color(first)
        assert node.acquire_color("t1") is not None

    def test_accumulate_audits_tag_binding(self):
        node = self.make_node()
        c = node.acquire_color("t0")
        node.accumulate(c, 0, 5, "t0")
        with pytest.raises(SimulationError):
            node.accumulate(c, 1, 7, "t1")

    def test_release_reduces_accumulators(self):
        node = self.make_node()
        c = node.acquire_color("t0")
        for pe, v in enumerate([1, 2, 3, 4]):
            node.accumulate(c, pe, v, "t0")
        assert node.release_color(c) == 10
        assert node.acquire_color("t1").slot == 0  # slot recycled

    def test_tag_width(self):
        assert ColorTag.width_bits(16) == 4


class TestAdderTree:
    def test_sum(self):
        assert adder_tree_reduce([1, 2, 3, 4]) == 10

    def test_single_nonzero(self):
        assert adder_tree_reduce([42, 0, 0, 0]) == 42

    def test_random_matches_sequential_sum(self):
        import numpy as np
        rng = np.random.default_rng(1)
        v = rng.integers(-1000, 1000, 4)
        assert adder_tree_reduce(v) == int(v.sum())

    def test_latency_levels(self):
        assert adder_tree_latency(1) == 0
        assert adder_tree_latency(2) == 1
        assert adder_tree_latency(4) == 2
        assert adder_tree_latency(8) == 3
