import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparsegrid.errors import ConfigError, CorruptionError
from sparsegrid.tensor import (
    DenseTensor,
    LayerSpec,
    SparseChunk,
    SparseTensor,
    chunk_pairs_for_output_cell,
    compress,
    decompress,
    dense_conv_oracle,
    generate_sparse,
    relu_compress,
    relu_saturate,
    sparse_chunk_dot,
    total_match_macs,
    window_values,
)


def triple_loop_conv(layer, ifmap, filters):
    """Independent brute-force convolution used as the oracle's oracle."""
    out = np.zeros((layer.out_h, layer.out_w, layer.n), dtype=np.int64)
    for r in range(layer.out_h):
        for c in range(layer.out_w):
            for f, filt in enumerate(filters):
                acc = 0
                for kr in range(layer.k):
                    for kc in range(layer.k):
                        for ch in range(layer.d):
                            acc += ifmap.at(r * layer.stride + kr,
                                            c * layer.stride + kc, ch) * filt.at(kr, kc, ch)
                out[r, c, f] = acc
    return out


def random_dense(dims, density, seed):
    return generate_sparse(dims, density, seed)


class TestGenerateSparse:
    def test_zero_density_all_zero(self):
        t = generate_sparse((4, 4, 1), 0.0, seed=3)
        assert not t.values.any()

    def test_full_density_all_nonzero(self):
        t = generate_sparse((4, 4, 1), 1.0, seed=3)
        assert np.count_nonzero(t.values) == 16

    def test_exact_count_sampling(self):
        # 0.473 over 10000 cells must land exactly on floor(0.473 * 10000)
        t = generate_sparse((100, 100, 1), 0.473, seed=7)
        assert np.count_nonzero(t.values) == 4730

    def test_deterministic_across_calls(self):
        a = generate_sparse((13, 9, 5), 0.37, seed=42)
        b = generate_sparse((13, 9, 5), 0.37, seed=42)
        assert np.array_equal(a.values, b.values)

    def test_value_range_excludes_zero_at_sampled_positions(self):
        t = generate_sparse((50, 50, 2), 0.8, seed=11)
        nz = t.values[t.values != 0]
        assert len(nz) == int(0.8 * 5000)
        assert nz.min() >= -128 and nz.max() <= 127

    def test_invalid_density_rejected(self):
        with pytest.raises(ConfigError):
            generate_sparse((4, 4, 1), 1.5, seed=0)

    def test_zero_dims_rejected(self):
        with pytest.raises(ConfigError):
            generate_sparse((0, 4, 1), 0.5, seed=0)


class TestCompressDecompress:
    def test_mask_layout_position_zero_first(self):
        vals = np.array([0, 5, 0, 0, 7, 0, 0, 0], dtype=np.int8)
        sp = compress(DenseTensor((1, 1, 8), vals), chunk_size=8)
        chunk = sp.chunks[0]
        assert chunk.mask == (1 << 1) | (1 << 4)
        assert list(chunk.values) == [5, 7]

    def test_all_zero_input(self):
        sp = compress(DenseTensor((1, 1, 8), np.zeros(8, dtype=np.int8)), chunk_size=8)
        assert sp.chunks[0].mask == 0
        assert len(sp.chunks[0].values) == 0

    def test_round_trip_random_1000_cells(self):
        t = random_dense((10, 10, 10), 0.43, seed=5)
        back = decompress(compress(t, chunk_size=128))
        assert np.array_equal(back.values, t.values)
        assert back.dims == t.dims

    @given(st.integers(0, 2**32 - 1), st.sampled_from([8, 16, 32, 128]))
    @settings(max_examples=40, deadline=None)
    def test_round_trip_property(self, seed, chunk_size):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 300))
        vals = rng.integers(-128, 128, size=n).astype(np.int8)
        t = DenseTensor((1, 1, n), vals)
        assert np.array_equal(decompress(compress(t, chunk_size)).values, vals)

    def test_last_chunk_padded(self):
        t = DenseTensor((1, 1, 10), np.ones(10, dtype=np.int8))
        sp = compress(t, chunk_size=8)
        assert len(sp.chunks) == 2
        assert sp.chunks[1].mask == 0b11  # only the two real cells
        assert sp.density == 1.0

    def test_corruption_detected(self):
        with pytest.raises(CorruptionError):
            SparseChunk(8, 0b11, np.array([5], dtype=np.int8))

    def test_bad_chunk_size_rejected(self):
        t = DenseTensor((1, 1, 4), np.ones(4, dtype=np.int8))
        with pytest.raises(ConfigError):
            compress(t, chunk_size=12)


class TestSparseChunkDot:
    def test_match_count_is_popcount_of_and(self):
        a = SparseChunk(8, 0b0101, np.array([3, 9], dtype=np.int8))
        b = SparseChunk(8, 0b0110, np.array([4, 6], dtype=np.int8))
        acc, count = sparse_chunk_dot(a, b)
        assert count == 1  # only position 2 matches
        assert acc == 9 * 6  # a holds 9 at position 2, b holds 6

    def test_all_zero_side(self):
        a = SparseChunk(8, 0b1111, np.array([1, 2, 3, 4], dtype=np.int8))
        b = SparseChunk(8, 0, np.array([], dtype=np.int8))
        assert sparse_chunk_dot(a, b) == (0, 0)

    def test_size_mismatch_rejected(self):
        a = SparseChunk(8, 0, np.array([], dtype=np.int8))
        b = SparseChunk(16, 0, np.array([], dtype=np.int8))
        with pytest.raises(ConfigError):
            sparse_chunk_dot(a, b)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_acc_matches_dense_dot(self, seed):
        rng = np.random.default_rng(seed)
        da = (rng.random(128) < 0.4) * rng.integers(-128, 128, 128)
        db = (rng.random(128) < 0.4) * rng.integers(-128, 128, 128)
        ca = compress(DenseTensor((1, 1, 128), da.astype(np.int8))).chunks[0]
        cb = compress(DenseTensor((1, 1, 128), db.astype(np.int8))).chunks[0]
        acc, count = sparse_chunk_dot(ca, cb)
        assert acc == int(np.dot(da.astype(np.int64), db.astype(np.int64)))
        assert count == int(np.count_nonzero((da != 0) & (db != 0)))


class TestChunkPairs:
    def test_single_chunk_window(self):
        layer = LayerSpec(h=8, w=8, d=4, k=3, n=2)
        pairs = chunk_pairs_for_output_cell(layer, (0, 0), 0, chunk_size=128)
        assert len(pairs) == 1  # 36 cells fit one chunk

    def test_multi_chunk_window(self):
        layer = LayerSpec(h=8, w=8, d=64, k=3, n=2)
        pairs = chunk_pairs_for_output_cell(layer, (1, 2), 1, chunk_size=128)
        assert len(pairs) == 5  # ceil(576 / 128)
        # filter chunk ids walk filter 1's own chunk stream
        assert [f for (_, f) in pairs] == [5, 6, 7, 8, 9]

    def test_one_by_one_filter_enumerates_windows(self):
        layer = LayerSpec(h=2, w=2, d=1, k=1, n=1)
        seen = set()
        for r in range(2):
            for c in range(2):
                pairs = chunk_pairs_for_output_cell(layer, (r, c), 0, chunk_size=8)
                assert len(pairs) == 1
                seen.add(pairs[0][0])
        assert len(seen) == 4  # each window has its own chunk id

    def test_out_of_range_rejected(self):
        layer = LayerSpec(h=4, w=4, d=1, k=3, n=1)
        with pytest.raises(ConfigError):
            chunk_pairs_for_output_cell(layer, (2, 0), 0)


class TestDenseOracle:
    def test_one_by_one(self):
        layer = LayerSpec(h=1, w=1, d=1, k=1, n=1)
        ifm = DenseTensor((1, 1, 1), np.array([3], dtype=np.int8))
        filt = DenseTensor((1, 1, 1), np.array([5], dtype=np.int8))
        out = dense_conv_oracle(layer, [ifm], [filt])[0]
        assert out.values.tolist() == [15]

    def test_identity_filter(self):
        layer = LayerSpec(h=5, w=5, d=1, k=1, n=1)
        ifm = random_dense((5, 5, 1), 0.6, seed=2)
        ones = DenseTensor((1, 1, 1), np.array([1], dtype=np.int8))
        out = dense_conv_oracle(layer, [ifm], [ones])[0]
        assert np.array_equal(out.values, ifm.values.astype(np.int32))

    def test_against_triple_loop(self):
        layer = LayerSpec(h=8, w=8, d=4, k=3, n=8, ifmap_density=0.5,
                          filter_density=0.5, seed=1)
        ifm = random_dense((8, 8, 4), 0.5, seed=1)
        filters = [random_dense((3, 3, 4), 0.5, seed=100 + f) for f in range(8)]
        got = dense_conv_oracle(layer, [ifm], filters)[0]
        want = triple_loop_conv(layer, ifm, filters)
        assert np.array_equal(got.values.reshape(want.shape), want)

    def test_strided_against_triple_loop(self):
        layer = LayerSpec(h=9, w=9, d=2, k=3, n=3, stride=2)
        ifm = random_dense((9, 9, 2), 0.7, seed=9)
        filters = [random_dense((3, 3, 2), 0.6, seed=50 + f) for f in range(3)]
        got = dense_conv_oracle(layer, [ifm], filters)[0]
        want = triple_loop_conv(layer, ifm, filters)
        assert got.dims == (4, 4, 3)
        assert np.array_equal(got.values.reshape(want.shape), want)

    def test_dimension_mismatch(self):
        layer = LayerSpec(h=4, w=4, d=2, k=3, n=1)
        ifm = random_dense((4, 4, 2), 0.5, seed=0)
        bad = random_dense((3, 3, 3), 0.5, seed=0)
        with pytest.raises(ConfigError):
            dense_conv_oracle(layer, [ifm], [bad])


class TestReluCompress:
    def test_relu_and_saturation(self):
        sp = relu_compress([-5, 3, 0, 200], chunk_size=8)
        chunk = sp.chunks[0]
        assert chunk.mask == (1 << 1) | (1 << 3)
        assert list(chunk.values) == [3, 127]

    def test_all_negative(self):
        sp = relu_compress([-1, -2, -3], chunk_size=8)
        assert sp.chunks[0].mask == 0
        assert sp.nnz == 0

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_matches_scalar_reference(self, seed):
        rng = np.random.default_rng(seed)
        v = rng.integers(-1000, 1000, size=77)
        sp = relu_compress(v, chunk_size=32)
        back = decompress(sp)
        assert np.array_equal(back.values, relu_saturate(v))


class TestSparsePathAssembly:
    """Per-cell sums of chunk dots over the pairing equal the dense oracle."""

    @pytest.mark.parametrize("trial", range(6))
    def test_assembled_outputs_match_oracle(self, trial):
        rng = np.random.default_rng(900 + trial)
        layer = LayerSpec(
            h=int(rng.integers(3, 10)), w=int(rng.integers(3, 10)),
            d=int(rng.integers(1, 9)), k=int(rng.integers(1, 4)),
            n=int(rng.integers(1, 5)),
        )
        if layer.k > min(layer.h, layer.w):
            layer = LayerSpec(h=layer.h, w=layer.w, d=layer.d, k=1, n=layer.n)
        cs = 32
        ifm = random_dense((layer.h, layer.w, layer.d), 0.5, seed=trial)
        filters = [random_dense((layer.k, layer.k, layer.d), 0.4, seed=70 + f)
                   for f in range(layer.n)]
        sp_filters = [compress(f, cs) for f in filters]
        oracle = dense_conv_oracle(layer, [ifm], filters)[0].values.reshape(
            layer.out_h, layer.out_w, layer.n)
        for r in range(layer.out_h):
            for c in range(layer.out_w):
                wvals = window_values(layer, ifm, (r, c))
                sp_window = compress(DenseTensor((1, 1, len(wvals)), wvals), cs)
                for f in range(layer.n):
                    pairs = chunk_pairs_for_output_cell(layer, (r, c), f, cs)
                    acc = 0
                    for (wid, fid) in pairs:
                        i = wid % layer.window_chunks(cs)
                        acc += sparse_chunk_dot(sp_window.chunks[i],
                                                sp_filters[f].chunks[i % layer.window_chunks(cs)])[0]
                    assert acc == int(oracle[r, c, f])

    def test_full_density_mac_count_matches_formula(self):
        layer = LayerSpec(h=6, w=6, d=8, k=3, n=4)
        cs = 32
        ifm = generate_sparse((6, 6, 8), 1.0, seed=0)
        filters = [generate_sparse((3, 3, 8), 1.0, seed=f) for f in range(4)]
        total = 0
        for r in range(layer.out_h):
            for c in range(layer.out_w):
                wvals = window_values(layer, ifm, (r, c))
                spw = compress(DenseTensor((1, 1, len(wvals)), wvals), cs)
                for f in range(4):
                    total += total_match_macs(spw, compress(filters[f], cs))
        assert total == layer.out_h * layer.out_w * layer.k**2 * layer.d * layer.n


class TestLayerSpecValidation:
    def test_filter_larger_than_map_rejected(self):
        with pytest.raises(ConfigError):
            LayerSpec(h=2, w=2, d=1, k=3, n=1)

    def test_density_out_of_range_rejected(self):
        with pytest.raises(ConfigError):
            LayerSpec(h=4, w=4, d=1, k=1, n=1, ifmap_density=1.2)

    def test_output_dims(self):
        layer = LayerSpec(h=7, w=9, d=2, k=3, n=5, stride=2)
        assert (layer.out_h, layer.out_w) == (3, 4)
