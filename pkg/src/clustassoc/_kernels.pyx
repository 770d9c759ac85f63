# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of the kernels in ``clustassoc._kernels_py``.

Same contracts, same cluster layout (contiguous segments described by a
``starts`` boundary array).  No random number generation happens here;
permutations are driven by caller-supplied uniform keys so results match
the pure-numpy backend.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def _check_starts(starts, Py_ssize_t n):
    starts = np.ascontiguousarray(starts, dtype=np.int64)
    if starts.ndim != 1 or starts.shape[0] < 2 or starts[0] != 0 or starts[-1] != n:
        raise ValueError("starts must be [0, ..., n_units] segment boundaries")
    return starts


def cluster_multiplicities(codes, starts):
    codes = np.ascontiguousarray(codes, dtype=np.int64)
    cdef Py_ssize_t n = codes.shape[0]
    starts = _check_starts(starts, n)
    cdef Py_ssize_t c = starts.shape[0] - 1
    cdef const cnp.int64_t[::1] cv = codes
    cdef const cnp.int64_t[::1] sv = starts
    cdef Py_ssize_t i, j, lo, hi
    cdef cnp.int64_t code, maxcode = 0
    for i in range(n):
        if cv[i] < 0:
            raise ValueError("codes must be non-negative")
        if cv[i] > maxcode:
            maxcode = cv[i]
    mult = np.empty(n, dtype=np.int64)
    distinct = np.zeros(c, dtype=np.int64)
    counts = np.zeros(maxcode + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] mv = mult
    cdef cnp.int64_t[::1] dv = distinct
    cdef cnp.int64_t[::1] cnt = counts
    for j in range(c):
        lo = sv[j]
        hi = sv[j + 1]
        for i in range(lo, hi):
            cnt[cv[i]] += 1
        for i in range(lo, hi):
            mv[i] = cnt[cv[i]]
        for i in range(lo, hi):
            code = cv[i]
            if cnt[code] != 0:
                dv[j] += 1
                cnt[code] = 0
    return mult, distinct


def cluster_weighted_sums(a, b, w, starts):
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0]
    if b.shape[0] != n or w.shape[0] != n:
        raise ValueError("a, b, w must have equal length")
    starts = _check_starts(starts, n)
    cdef Py_ssize_t c = starts.shape[0] - 1
    cdef const cnp.float64_t[::1] av = a
    cdef const cnp.float64_t[::1] bv = b
    cdef const cnp.float64_t[::1] wv = w
    cdef const cnp.int64_t[::1] sv = starts
    wsum = np.zeros(c, dtype=np.float64)
    fsums = np.zeros((c, 5), dtype=np.float64)
    cdef cnp.float64_t[::1] wsv = wsum
    cdef cnp.float64_t[:, ::1] fv = fsums
    cdef Py_ssize_t i, j
    cdef double wi, ai, bi, wa, wb
    for j in range(c):
        for i in range(sv[j], sv[j + 1]):
            wi = wv[i]
            ai = av[i]
            bi = bv[i]
            wa = wi * ai
            wb = wi * bi
            wsv[j] += wi
            fv[j, 0] += wa
            fv[j, 1] += wb
            fv[j, 2] += wa * bi
            fv[j, 3] += wa * ai
            fv[j, 4] += wb * bi
    return wsum, fsums


def weighted_midranks(values, weights):
    values = np.ascontiguousarray(values, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = values.shape[0]
    if weights.shape[0] != n:
        raise ValueError("values and weights must have equal length")
    order = np.argsort(values, kind="stable").astype(np.int64)
    cdef const cnp.int64_t[::1] ov = order
    cdef const cnp.float64_t[::1] vv = values
    cdef const cnp.float64_t[::1] wv = weights
    out = np.empty(n, dtype=np.float64)
    cdef cnp.float64_t[::1] rv = out
    cdef Py_ssize_t i, j
    cdef double cum = 0.0, cum_before, total = 0.0, rank, v
    for i in range(n):
        total += wv[ov[i]]
    i = 0
    while i < n:
        v = vv[ov[i]]
        cum_before = cum
        j = i
        while j < n and vv[ov[j]] == v:
            cum += wv[ov[j]]
            j += 1
        rank = (cum_before + cum) / (2.0 * total)
        while i < j:
            rv[ov[i]] = rank
            i += 1
    return out


cdef inline void _swap(double* key, cnp.int64_t* idx, Py_ssize_t i, Py_ssize_t j) noexcept nogil:
    cdef double tk = key[i]
    cdef cnp.int64_t ti = idx[i]
    key[i] = key[j]
    idx[i] = idx[j]
    key[j] = tk
    idx[j] = ti


cdef void _select_smallest(double* key, cnp.int64_t* idx, Py_ssize_t n, Py_ssize_t m) noexcept nogil:
    # Partition so positions [0, m) hold the m smallest keys (any order).
    cdef Py_ssize_t lo = 0, hi = n - 1, i, j, mid
    cdef double pivot
    if m <= 0 or m >= n:
        return
    while hi > lo:
        mid = lo + (hi - lo) // 2
        # median-of-three pivot
        if key[mid] < key[lo]:
            _swap(key, idx, lo, mid)
        if key[hi] < key[lo]:
            _swap(key, idx, lo, hi)
        if key[hi] < key[mid]:
            _swap(key, idx, mid, hi)
        pivot = key[mid]
        i = lo - 1
        j = hi + 1
        while True:
            i += 1
            while key[i] < pivot:
                i += 1
            j -= 1
            while key[j] > pivot:
                j -= 1
            if i >= j:
                break
            _swap(key, idx, i, j)
        if m - 1 <= j:
            hi = j
        else:
            lo = j + 1


def permuted_group_sums(scores, weights, starts, n_low, keys):
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    keys = np.ascontiguousarray(keys, dtype=np.float64)
    cdef Py_ssize_t n = scores.shape[0]
    starts = _check_starts(starts, n)
    n_low = np.ascontiguousarray(n_low, dtype=np.int64)
    cdef Py_ssize_t c = starts.shape[0] - 1
    cdef Py_ssize_t k = keys.shape[0]
    if keys.ndim != 2 or keys.shape[1] != n:
        raise ValueError("keys must have shape (n_permutations, n_units)")
    if n_low.shape[0] != c:
        raise ValueError("n_low must have one entry per cluster")
    cdef const cnp.int64_t[::1] sv = starts
    cdef const cnp.int64_t[::1] nl = n_low
    cdef const cnp.float64_t[::1] scv = scores
    cdef const cnp.float64_t[::1] wv = weights
    cdef const cnp.float64_t[:, ::1] kv = keys
    cdef Py_ssize_t j, maxseg = 0
    for j in range(c):
        if nl[j] < 0 or nl[j] > sv[j + 1] - sv[j]:
            raise ValueError("n_low must satisfy 0 <= n_low <= cluster size")
        if sv[j + 1] - sv[j] > maxseg:
            maxseg = sv[j + 1] - sv[j]
    s_low = np.zeros(k, dtype=np.float64)
    w_low = np.zeros(k, dtype=np.float64)
    cdef cnp.float64_t[::1] slv = s_low
    cdef cnp.float64_t[::1] wlv = w_low
    buf_key = np.empty(maxseg, dtype=np.float64)
    buf_idx = np.empty(maxseg, dtype=np.int64)
    cdef cnp.float64_t[::1] bk = buf_key
    cdef cnp.int64_t[::1] bi = buf_idx
    cdef Py_ssize_t p, i, lo, hi, m, size
    cdef double ssum, wsum
    for p in range(k):
        ssum = 0.0
        wsum = 0.0
        for j in range(c):
            lo = sv[j]
            hi = sv[j + 1]
            size = hi - lo
            m = nl[j]
            if m == 0:
                continue
            if m == size:
                for i in range(lo, hi):
                    ssum += scv[i]
                    wsum += wv[i]
                continue
            for i in range(size):
                bk[i] = kv[p, lo + i]
                bi[i] = lo + i
            _select_smallest(&bk[0], &bi[0], size, m)
            for i in range(m):
                ssum += scv[bi[i]]
                wsum += wv[bi[i]]
        slv[p] = ssum
        wlv[p] = wsum
    return s_low, w_low
