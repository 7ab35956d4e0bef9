# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled bitmask match kernels (see _pyref for the reference semantics)."""

from libc.stdint cimport int64_t, uint64_t

IMPL_NAME = "native"


cdef inline int _popcount64(uint64_t x) nogil:
    x = x - ((x >> 1) & 0x5555555555555555ULL)
    x = (x & 0x3333333333333333ULL) + ((x >> 2) & 0x3333333333333333ULL)
    x = (x + (x >> 4)) & 0x0F0F0F0F0F0F0F0FULL
    return <int>((x * 0x0101010101010101ULL) >> 56)


cdef inline int _ctz64(uint64_t x) nogil:
    cdef int n = 0
    if (x & 0xFFFFFFFFULL) == 0:
        n += 32
        x >>= 32
    if (x & 0xFFFFULL) == 0:
        n += 16
        x >>= 16
    if (x & 0xFFULL) == 0:
        n += 8
        x >>= 8
    if (x & 0xFULL) == 0:
        n += 4
        x >>= 4
    if (x & 0x3ULL) == 0:
        n += 2
        x >>= 2
    if (x & 0x1ULL) == 0:
        n += 1
    return n


cdef int _load_words(const unsigned char[:] mask, uint64_t* words) except -1:
    cdef Py_ssize_t nbytes = mask.shape[0]
    cdef Py_ssize_t i
    cdef Py_ssize_t nwords = (nbytes + 7) // 8
    for i in range(nwords):
        words[i] = 0
    for i in range(nbytes):
        words[i >> 3] |= (<uint64_t>mask[i]) << ((i & 7) << 3)
    return <int>nwords


def chunk_dot(const unsigned char[:] mask_a, const signed char[:] vals_a,
              const unsigned char[:] mask_b, const signed char[:] vals_b,
              int n_sub=1):
    cdef Py_ssize_t nbytes = mask_a.shape[0]
    if mask_b.shape[0] != nbytes:
        raise ValueError("chunk size mismatch")
    cdef int size = <int>nbytes * 8
    if n_sub <= 0 or size % n_sub:
        raise ValueError("n_sub must divide the chunk size")
    cdef int sub_len = size // n_sub

    # chunk sizes are <= 1024 bits in practice; stack words cover 4096
    cdef uint64_t wa[64]
    cdef uint64_t wb[64]
    if nbytes > 512:
        raise ValueError("chunk too large for native kernel")
    cdef int nwords = _load_words(mask_a, wa)
    _load_words(mask_b, wb)

    accs_py = [0] * n_sub
    counts_py = [0] * n_sub
    cdef int64_t accs[64]
    cdef int64_t counts[64]
    cdef int s
    if n_sub > 64:
        raise ValueError("n_sub too large for native kernel")
    for s in range(n_sub):
        accs[s] = 0
        counts[s] = 0

    cdef int w, p, pos, ia, ib
    cdef int rank_a = 0, rank_b = 0
    cdef uint64_t m, below
    with nogil:
        for w in range(nwords):
            m = wa[w] & wb[w]
            while m:
                p = _ctz64(m)
                pos = (w << 6) + p
                below = (<uint64_t>1 << p) - 1
                ia = rank_a + _popcount64(wa[w] & below)
                ib = rank_b + _popcount64(wb[w] & below)
                s = pos // sub_len
                accs[s] += (<int64_t>vals_a[ia]) * (<int64_t>vals_b[ib])
                counts[s] += 1
                m &= m - 1
            rank_a += _popcount64(wa[w])
            rank_b += _popcount64(wb[w])

    for s in range(n_sub):
        accs_py[s] = accs[s]
        counts_py[s] = counts[s]
    return accs_py, counts_py


def mask_subcounts(const unsigned char[:] mask, int n_sub=1):
    cdef Py_ssize_t nbytes = mask.shape[0]
    cdef int size = <int>nbytes * 8
    if n_sub <= 0 or size % n_sub:
        raise ValueError("n_sub must divide the chunk size")
    cdef int sub_len = size // n_sub
    counts_py = [0] * n_sub
    cdef Py_ssize_t i
    cdef int b, j
    cdef int64_t c
    for i in range(nbytes):
        b = mask[i]
        while b:
            j = <int>(i * 8) + _ctz64(<uint64_t>b)
            counts_py[j // sub_len] += 1
            b &= b - 1
    return counts_py


def match_count(const unsigned char[:] mask_a, const unsigned char[:] mask_b):
    cdef Py_ssize_t nbytes = mask_a.shape[0]
    if mask_b.shape[0] != nbytes:
        raise ValueError("chunk size mismatch")
    cdef uint64_t wa[64]
    cdef uint64_t wb[64]
    if nbytes > 512:
        raise ValueError("chunk too large for native kernel")
    cdef int nwords = _load_words(mask_a, wa)
    _load_words(mask_b, wb)
    cdef int total = 0
    cdef int w
    for w in range(nwords):
        total += _popcount64(wa[w] & wb[w])
    return total
