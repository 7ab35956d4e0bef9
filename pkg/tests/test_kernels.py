import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparsegrid.kernels import IMPL, _pyref

try:
    from sparsegrid.kernels import _native
except ImportError:
    _native = None

IMPLS = [_pyref] + ([_native] if _native else [])


def random_chunk(rng, size, density):
    nz = rng.random(size) < density
    vals = rng.integers(-128, 128, size=size).astype(np.int8)
    vals[~nz] = 0
    # ensure stored values are the nonzeros only
    mask_bytes = np.packbits(vals != 0, bitorder="little").tobytes()
    return mask_bytes, vals[vals != 0], vals


@pytest.mark.parametrize("impl", IMPLS, ids=lambda m: m.IMPL_NAME)
class TestKernelSemantics:
    def test_empty_masks(self, impl):
        empty = np.array([], dtype=np.int8)
        accs, counts = impl.chunk_dot(bytes(2), empty, bytes(2), empty, 4)
        assert accs == [0, 0, 0, 0]
        assert counts == [0, 0, 0, 0]

    def test_known_small_case(self, impl):
        # a: positions 0,2 -> 3,9 / b: positions 1,2 -> 4,6 ; match at 2
        a = bytes([0b101])
        b = bytes([0b110])
        accs, counts = impl.chunk_dot(a, np.array([3, 9], dtype=np.int8),
                                      b, np.array([4, 6], dtype=np.int8), 2)
        assert counts == [1, 0]   # position 2 lands in the first 4-bit sub
        assert accs == [54, 0]

    def test_subcounts(self, impl):
        assert impl.mask_subcounts(bytes([0xFF, 0x01]), 2) == [8, 1]
        assert impl.mask_subcounts(bytes([0xF0, 0x00]), 4) == [0, 4, 0, 0]

    def test_match_count(self, impl):
        assert impl.match_count(bytes([0b1010]), bytes([0b0110])) == 1

    def test_size_mismatch(self, impl):
        with pytest.raises(ValueError):
            impl.chunk_dot(bytes(2), np.array([], dtype=np.int8),
                           bytes(4), np.array([], dtype=np.int8), 1)

    def test_bad_subdivision(self, impl):
        with pytest.raises(ValueError):
            impl.mask_subcounts(bytes(2), 3)


@pytest.mark.skipif(_native is None, reason="native kernel not built")
class TestNativeMatchesReference:
    @given(st.integers(0, 2**32 - 1),
           st.sampled_from([8, 16, 32, 128, 256]),
           st.sampled_from([1, 2, 4, 8]))
    @settings(max_examples=120, deadline=None)
    def test_chunk_dot_parity(self, seed, size, n_sub):
        rng = np.random.default_rng(seed)
        ma, va, _ = random_chunk(rng, size, rng.random())
        mb, vb, _ = random_chunk(rng, size, rng.random())
        got = _native.chunk_dot(ma, va, mb, vb, n_sub)
        want = _pyref.chunk_dot(ma, va, mb, vb, n_sub)
        assert got == tuple(want) or list(map(list, got)) == list(map(list, want))

    @given(st.integers(0, 2**32 - 1), st.sampled_from([64, 128]),
           st.sampled_from([1, 4, 16]))
    @settings(max_examples=60, deadline=None)
    def test_subcount_parity(self, seed, size, n_sub):
        rng = np.random.default_rng(seed)
        m, _, _ = random_chunk(rng, size, rng.random())
        assert list(_native.mask_subcounts(m, n_sub)) == list(_pyref.mask_subcounts(m, n_sub))

    def test_dot_equals_dense_dot(self):
        rng = np.random.default_rng(7)
        ma, va, da = random_chunk(rng, 128, 0.5)
        mb, vb, db = random_chunk(rng, 128, 0.5)
        accs, counts = _native.chunk_dot(ma, va, mb, vb, 4)
        dense = da.astype(np.int64) * db.astype(np.int64)
        for s in range(4):
            assert accs[s] == int(dense[s * 32:(s + 1) * 32].sum())
        assert sum(counts) == int(np.count_nonzero(dense[(da != 0) & (db != 0)] != 0) +
                                  np.count_nonzero((da != 0) & (db != 0) & (dense == 0)))


def test_selected_impl_is_exposed():
    assert IMPL in ("native", "python")
