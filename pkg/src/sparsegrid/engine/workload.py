"""Workload construction: tensors, chunk tables, and the balance plan.

The simulator consumes tensors as flat chunk tables. Input maps are viewed
through their im2col window streams: window chunk (image, out_cell, i)
always pairs with filter chunk i, because filters linearize in the same
order the windows are gathered.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..balance import BalancePlan, greedy_balance
from ..errors import ConfigError
from ..tensor import (
    DEFAULT_CHUNK_SIZE,
    DenseTensor,
    LayerSpec,
    SparseTensor,
    ceil_div,
    compress,
    dense_conv_oracle,
    generate_sparse,
    _window_indices_cached,
)


@dataclass(frozen=True)
class ChunkData:
    """One chunk in wire form: little-endian mask bytes + packed values."""

    mask: bytes
    values: np.ndarray
    nnz: int


def _pack_rows(matrix: np.ndarray, chunk_size: int) -> list[list[ChunkData]]:
    """Split each row of (rows, L) int8 matrix into zero-padded chunks."""
    rows, length = matrix.shape
    n_chunks = ceil_div(length, chunk_size)
    padded = np.zeros((rows, n_chunks * chunk_size), dtype=np.int8)
    padded[:, :length] = matrix
    nz = padded != 0
    packed = np.packbits(nz, axis=1, bitorder="little")
    mb = chunk_size // 8
    out = []
    for r in range(rows):
        row_chunks = []
        for i in range(n_chunks):
            sel = nz[r, i * chunk_size:(i + 1) * chunk_size]
            vals = padded[r, i * chunk_size:(i + 1) * chunk_size][sel]
            row_chunks.append(ChunkData(
                packed[r, i * mb:(i + 1) * mb].tobytes(),
                np.ascontiguousarray(vals),
                int(sel.sum()),
            ))
        out.append(row_chunks)
    return out


def derive_seed(base: int, stream: int, index: int) -> int:
    return (base * 1_000_003 + stream * 97_911 + index) & 0x7FFFFFFF


class Workload:
    """One layer's tensors plus everything the engines consume."""

    def __init__(self, layer: LayerSpec, ifmaps_dense: list[DenseTensor],
                 filters_dense: list[DenseTensor], chunk_size: int = DEFAULT_CHUNK_SIZE):
        if len(ifmaps_dense) != layer.batch:
            raise ConfigError("batch size does not match input map count")
        if len(filters_dense) != layer.n:
            raise ConfigError("filter count does not match the layer")
        self.layer = layer
        self.chunk_size = chunk_size
        self.ifmaps_dense = ifmaps_dense
        self.filters_dense = filters_dense
        self.ifmaps: list[SparseTensor] = [compress(m, chunk_size) for m in ifmaps_dense]
        self.filters: list[SparseTensor] = [compress(f, chunk_size) for f in filters_dense]
        densities = [f.density for f in self.filters]
        self.plan: BalancePlan = greedy_balance(densities, "gbs_variant")
        self.colocated_plan: BalancePlan = greedy_balance(densities, "sparten_gbs")

        self.out_cells = layer.out_h * layer.out_w
        self.window_chunk_count = layer.window_chunks(chunk_size)
        idx = _window_indices_cached(layer.h, layer.w, layer.d, layer.k, layer.stride)
        self.window_chunks: list[list[list[ChunkData]]] = [
            _pack_rows(m.values[idx], chunk_size) for m in ifmaps_dense
        ]
        self.filter_chunks: list[list[ChunkData]] = _pack_rows(
            np.stack([f.values for f in filters_dense]), chunk_size)
        self._match_total: int | None = None
        self._input_nnz_total: int | None = None

    @property
    def tasks_total(self) -> int:
        return self.layer.batch * self.out_cells

    def window_chunk(self, image: int, out_cell: int, i: int) -> ChunkData:
        return self.window_chunks[image][out_cell][i]

    def filter_chunk(self, filter_id: int, i: int) -> ChunkData:
        return self.filter_chunks[filter_id][i]

    def window_uid(self, image: int, out_cell: int, i: int) -> int:
        return ((image * self.out_cells + out_cell) * self.window_chunk_count + i) * 2

    def filter_uid(self, filter_id: int, i: int) -> int:
        return (filter_id * self.window_chunk_count + i) * 2 + 1

    def dense_macs(self) -> int:
        return self.layer.dense_macs()

    def two_sided_macs(self) -> int:
        """Sum of popcount(window mask AND filter mask) over all pairings."""
        if self._match_total is None:
            total = 0
            for b in range(self.layer.batch):
                for o in range(self.out_cells):
                    for f in range(self.layer.n):
                        for i in range(self.window_chunk_count):
                            total += kernels.match_count(
                                self.window_chunks[b][o][i].mask,
                                self.filter_chunks[f][i].mask)
            self._match_total = total
        return self._match_total

    def one_sided_macs(self) -> int:
        """Input nonzeros times filter count: the input-elision-only work."""
        if self._input_nnz_total is None:
            nnz = sum(
                chunk.nnz
                for image in self.window_chunks
                for window in image
                for chunk in window
            )
            self._input_nnz_total = nnz
        return self._input_nnz_total * self.layer.n

    def oracle_outputs(self) -> list[np.ndarray]:
        """Raw 32-bit convolution outputs, one (out_cells * n) array per image."""
        outs = dense_conv_oracle(self.layer, self.ifmaps_dense, self.filters_dense)
        return [o.values.copy() for o in outs]


def build_workload(layer: LayerSpec, chunk_size: int = DEFAULT_CHUNK_SIZE) -> Workload:
    """Generate deterministic synthetic tensors for a layer spec."""
    dims = (layer.h, layer.w, layer.d)
    fdims = (layer.k, layer.k, layer.d)
    ifmaps = [
        generate_sparse(dims, layer.ifmap_density, derive_seed(layer.seed, 1, b))
        for b in range(layer.batch)
    ]
    filters = [
        generate_sparse(fdims, layer.filter_density, derive_seed(layer.seed, 2, f))
        for f in range(layer.n)
    ]
    return Workload(layer, ifmaps, filters, chunk_size)
