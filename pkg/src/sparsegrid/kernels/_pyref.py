"""Pure-Python reference implementation of the bitmask match kernels.

Masks are little-endian byte strings: bit ``i`` of byte ``b`` covers linear
cell position ``8*b + i``. Values are the packed nonzeros in position order.
The native Cython module implements the same three functions; this module is
the fallback selected at import when the extension is unavailable, and the
ground truth the extension is tested against.
"""

IMPL_NAME = "python"


def _as_int(mask: bytes) -> int:
    return int.from_bytes(mask, "little")


def chunk_dot(mask_a, vals_a, mask_b, vals_b, n_sub=1):
    """Match two chunks and dot their values, split over n_sub sub-chunks.

    Returns (accs, counts): for each sub-chunk (a contiguous slice of
    chunk_size // n_sub cell positions), the sum of products of values at
    positions set in both masks, and the number of such positions.
    """
    size = len(mask_a) * 8
    if len(mask_b) != len(mask_a):
        raise ValueError("chunk size mismatch")
    if size % n_sub:
        raise ValueError("n_sub must divide the chunk size")
    sub_len = size // n_sub
    a = _as_int(mask_a)
    b = _as_int(mask_b)
    both = a & b
    accs = [0] * n_sub
    counts = [0] * n_sub
    m = both
    while m:
        low = m & -m
        p = low.bit_length() - 1
        below = (1 << p) - 1
        ia = (a & below).bit_count()
        ib = (b & below).bit_count()
        s = p // sub_len
        accs[s] += int(vals_a[ia]) * int(vals_b[ib])
        counts[s] += 1
        m ^= low
    return accs, counts


def mask_subcounts(mask, n_sub=1):
    """Popcount of each of the n_sub contiguous bit slices of the mask."""
    size = len(mask) * 8
    if size % n_sub:
        raise ValueError("n_sub must divide the chunk size")
    sub_len = size // n_sub
    m = _as_int(mask)
    seg = (1 << sub_len) - 1
    return [((m >> (s * sub_len)) & seg).bit_count() for s in range(n_sub)]


def match_count(mask_a, mask_b):
    """popcount(mask_a AND mask_b)."""
    if len(mask_b) != len(mask_a):
        raise ValueError("chunk size mismatch")
    return (_as_int(mask_a) & _as_int(mask_b)).bit_count()
