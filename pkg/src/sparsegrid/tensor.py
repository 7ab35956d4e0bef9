"""Bitmask sparse tensors, synthetic workloads, and the functional oracle.

Tensors are linearized row-major with the channel varying fastest: cell
(row, col, ch) sits at linear index ``(row*w + col)*d + ch``. A sparse tensor
is a sequence of fixed-size chunks, each a bitmask (bit i set iff cell i of
the chunk is nonzero) plus the packed nonzero values in position order. The
last chunk is zero-padded in the mask.

Convolution windows are gathered im2col-style: for output position (r, c)
the k*k*d receptive field is linearized channel-minor within each (row, col)
of the window, which matches the filters' own linearization, so window chunk
i always pairs with filter chunk i.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigError, CorruptionError
from . import kernels

DEFAULT_CHUNK_SIZE = 128


@dataclass(frozen=True)
class DenseTensor:
    """Dense (h, w, d) tensor of integers in linearized order.

    Inputs and filters carry int8 values; oracle outputs carry int32.
    """

    dims: tuple[int, int, int]
    values: np.ndarray

    def __post_init__(self):
        h, w, d = self.dims
        if self.values.shape != (h * w * d,):
            raise ConfigError(
                f"value array length {self.values.shape} does not match dims {self.dims}"
            )

    @property
    def cells(self) -> int:
        h, w, d = self.dims
        return h * w * d

    def at(self, row: int, col: int, ch: int) -> int:
        h, w, d = self.dims
        return int(self.values[(row * w + col) * d + ch])

    def as_grid(self) -> np.ndarray:
        return self.values.reshape(self.dims)


@dataclass(frozen=True)
class SparseChunk:
    """One fixed-size slice of a linearized tensor in bitmask form."""

    size: int
    mask: int
    values: np.ndarray

    def __post_init__(self):
        if self.mask.bit_count() != len(self.values):
            raise CorruptionError(
                f"mask popcount {self.mask.bit_count()} != {len(self.values)} values"
            )
        if self.mask >> self.size:
            raise CorruptionError("mask has bits beyond the chunk size")

    @property
    def nnz(self) -> int:
        return len(self.values)

    def mask_bytes(self) -> bytes:
        return self.mask.to_bytes(self.size // 8, "little")

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.size, dtype=np.int32)
        m = self.mask
        i = 0
        while m:
            low = m & -m
            out[low.bit_length() - 1] = self.values[i]
            i += 1
            m ^= low
        return out


@dataclass(frozen=True)
class SparseTensor:
    """Chunked bitmask representation of a linearized tensor."""

    logical_length: int
    chunk_size: int
    chunks: tuple[SparseChunk, ...]
    dims: tuple[int, int, int] | None = None

    def __post_init__(self):
        expect = ceil_div(self.logical_length, self.chunk_size)
        if len(self.chunks) != expect:
            raise CorruptionError(
                f"{len(self.chunks)} chunks cannot cover {self.logical_length} cells"
            )

    @property
    def nnz(self) -> int:
        return sum(c.nnz for c in self.chunks)

    @property
    def density(self) -> float:
        return self.nnz / self.logical_length if self.logical_length else 0.0


@dataclass(frozen=True)
class LayerSpec:
    """Shape and density description of one convolutional layer."""

    h: int
    w: int
    d: int
    k: int
    n: int
    stride: int = 1
    batch: int = 1
    ifmap_density: float = 0.5
    filter_density: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if min(self.h, self.w, self.d, self.k, self.n, self.stride, self.batch) < 1:
            raise ConfigError("layer dimensions must be positive")
        if self.k > self.h or self.k > self.w:
            raise ConfigError("filter extent exceeds input map")
        for name in ("ifmap_density", "filter_density"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")

    @property
    def out_h(self) -> int:
        return (self.h - self.k) // self.stride + 1

    @property
    def out_w(self) -> int:
        return (self.w - self.k) // self.stride + 1

    @property
    def window_cells(self) -> int:
        return self.k * self.k * self.d

    def window_chunks(self, chunk_size: int = DEFAULT_CHUNK_SIZE) -> int:
        return ceil_div(self.window_cells, chunk_size)

    def dense_macs(self) -> int:
        """Multiply-adds a dense machine performs for the whole batch."""
        return self.out_h * self.out_w * self.k * self.k * self.d * self.n * self.batch


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def generate_sparse(dims: tuple[int, int, int], density: float, seed: int) -> DenseTensor:
    """Synthesize a dense tensor with an exact number of nonzero cells.

    Exactly floor(density * cells) positions are chosen without replacement;
    nonzero values are uniform over [-128, 127] excluding 0. Deterministic
    for a fixed seed.
    """
    if not 0.0 <= density <= 1.0:
        raise ConfigError(f"density must lie in [0, 1], got {density}")
    h, w, d = dims
    if min(h, w, d) < 1:
        raise ConfigError(f"dims must be positive, got {dims}")
    cells = h * w * d
    nnz = int(density * cells)
    rng = np.random.default_rng([seed & 0x7FFFFFFF, 0x5EED])
    values = np.zeros(cells, dtype=np.int8)
    if nnz:
        positions = rng.choice(cells, size=nnz, replace=False)
        raw = rng.integers(-128, 127, size=nnz, dtype=np.int16)
        raw[raw >= 0] += 1  # skip zero, keeping the range [-128, 127]
        values[positions] = raw.astype(np.int8)
    return DenseTensor(dims, values)


def compress(dense: DenseTensor, chunk_size: int = DEFAULT_CHUNK_SIZE) -> SparseTensor:
    """Chunk a dense tensor into bitmask form."""
    _check_chunk_size(chunk_size)
    return compress_values(dense.values, chunk_size, dims=dense.dims)


def compress_values(values: np.ndarray, chunk_size: int,
                    dims: tuple[int, int, int] | None = None) -> SparseTensor:
    _check_chunk_size(chunk_size)
    values = np.asarray(values)
    length = len(values)
    n_chunks = ceil_div(length, chunk_size)
    padded = np.zeros(n_chunks * chunk_size, dtype=values.dtype)
    padded[:length] = values
    chunks = []
    for ci in range(n_chunks):
        piece = padded[ci * chunk_size:(ci + 1) * chunk_size]
        nz = piece != 0
        mask_bytes = np.packbits(nz, bitorder="little").tobytes()
        chunks.append(SparseChunk(chunk_size,
                                  int.from_bytes(mask_bytes, "little"),
                                  piece[nz].astype(np.int8)))
    return SparseTensor(length, chunk_size, tuple(chunks), dims=dims)


def decompress(sparse: SparseTensor) -> DenseTensor:
    """Exact inverse of compress."""
    out = np.zeros(len(sparse.chunks) * sparse.chunk_size, dtype=np.int32)
    for ci, chunk in enumerate(sparse.chunks):
        base = ci * sparse.chunk_size
        m = chunk.mask
        i = 0
        while m:
            low = m & -m
            out[base + low.bit_length() - 1] = chunk.values[i]
            i += 1
            m ^= low
    out = out[: sparse.logical_length].astype(np.int8)
    dims = sparse.dims if sparse.dims is not None else (1, 1, sparse.logical_length)
    return DenseTensor(dims, out)


def _check_chunk_size(chunk_size: int) -> None:
    if chunk_size < 8 or chunk_size & (chunk_size - 1):
        raise ConfigError(f"chunk size must be a power of two >= 8, got {chunk_size}")


def sparse_chunk_dot(a: SparseChunk, b: SparseChunk) -> tuple[int, int]:
    """Accumulate products over positions set in both masks.

    Returns (acc, match_count); match_count is the number of multiply-adds
    the matching hardware performs for this chunk pair.
    """
    if a.size != b.size:
        raise ConfigError(f"chunk size mismatch: {a.size} vs {b.size}")
    accs, counts = kernels.chunk_dot(a.mask_bytes(), a.values, b.mask_bytes(), b.values, 1)
    return accs[0], counts[0]


def window_linear_indices(layer: LayerSpec, out_pos: tuple[int, int]) -> np.ndarray:
    """Linear input-map indices of the im2col window at out_pos."""
    r, c = out_pos
    if not (0 <= r < layer.out_h and 0 <= c < layer.out_w):
        raise ConfigError(f"output position {out_pos} out of range")
    return _window_indices_cached(layer.h, layer.w, layer.d, layer.k, layer.stride)[
        r * layer.out_w + c
    ]


@lru_cache(maxsize=64)
def _window_indices_cached(h, w, d, k, stride):
    out_h = (h - k) // stride + 1
    out_w = (w - k) // stride + 1
    base = np.arange(k)[:, None] * w * d + np.arange(k)[None, :] * d
    window = (base[:, :, None] + np.arange(d)[None, None, :]).reshape(-1)
    rows = np.arange(out_h) * stride * w * d
    cols = np.arange(out_w) * stride * d
    starts = (rows[:, None] + cols[None, :]).reshape(-1)
    return starts[:, None] + window[None, :]


def window_values(layer: LayerSpec, ifmap: DenseTensor, out_pos: tuple[int, int]) -> np.ndarray:
    """The im2col window of one output position as a flat value vector."""
    return ifmap.values[window_linear_indices(layer, out_pos)]


def chunk_pairs_for_output_cell(layer: LayerSpec, out_pos: tuple[int, int], filter_id: int,
                                chunk_size: int = DEFAULT_CHUNK_SIZE) -> list[tuple[int, int]]:
    """Chunk pairing for one output cell.

    Returns ceil(k*k*d / chunk_size) pairs of (ifmap_chunk_id, filter_chunk_id).
    ifmap ids index the per-output-cell window chunk stream
    (out_linear * n_chunks + i); filter ids index the filter's own chunk
    stream (filter_id * n_chunks + i).
    """
    r, c = out_pos
    if not (0 <= r < layer.out_h and 0 <= c < layer.out_w):
        raise ConfigError(f"output position {out_pos} out of range")
    if not 0 <= filter_id < layer.n:
        raise ConfigError(f"filter id {filter_id} out of range")
    n_chunks = layer.window_chunks(chunk_size)
    out_linear = r * layer.out_w + c
    return [
        (out_linear * n_chunks + i, filter_id * n_chunks + i)
        for i in range(n_chunks)
    ]


def dense_conv_oracle(layer: LayerSpec, ifmaps: list[DenseTensor],
                      filters: list[DenseTensor]) -> list[DenseTensor]:
    """Ground-truth convolution: 32-bit accumulation over im2col windows.

    Output per map is (out_h, out_w, n) linearized channel-minor, the same
    layout the simulator emits.
    """
    if len(ifmaps) != layer.batch or len(filters) != layer.n:
        raise ConfigError("workload tensor counts do not match the layer")
    fdims = (layer.k, layer.k, layer.d)
    for f in filters:
        if f.dims != fdims:
            raise ConfigError(f"filter dims {f.dims} do not match layer {fdims}")
    idx = _window_indices_cached(layer.h, layer.w, layer.d, layer.k, layer.stride)
    fmat = np.stack([f.values for f in filters]).astype(np.int32)  # (n, k*k*d)
    outs = []
    for m in ifmaps:
        if m.dims != (layer.h, layer.w, layer.d):
            raise ConfigError(f"input dims {m.dims} do not match the layer")
        windows = m.values[idx].astype(np.int32)  # (out_cells, k*k*d)
        prod = windows @ fmat.T  # (out_cells, n)
        outs.append(DenseTensor((layer.out_h, layer.out_w, layer.n),
                                prod.reshape(-1).astype(np.int32)))
    return outs


def relu_saturate(values: np.ndarray) -> np.ndarray:
    """Scalar reference for the output conversion: ReLU then clamp to int8."""
    return np.clip(values, 0, 127).astype(np.int8)


def relu_compress(values, chunk_size: int = DEFAULT_CHUNK_SIZE,
                  dims: tuple[int, int, int] | None = None) -> SparseTensor:
    """Convert raw 32-bit accumulator outputs to the next layer's sparse form.

    Negative cells are dropped (ReLU), survivors saturate to 127 so the
    result feeds the next layer as int8.
    """
    arr = np.asarray(values, dtype=np.int64)
    return compress_values(relu_saturate(arr), chunk_size, dims=dims)


def total_match_macs(ifmap_sparse: SparseTensor, filter_sparse: SparseTensor) -> int:
    """Sum of popcount(maskA AND maskB) over aligned chunk pairs."""
    if ifmap_sparse.chunk_size != filter_sparse.chunk_size:
        raise ConfigError("chunk size mismatch")
    return sum(
        kernels.match_count(a.mask_bytes(), b.mask_bytes())
        for a, b in zip(ifmap_sparse.chunks, filter_sparse.chunks)
    )
