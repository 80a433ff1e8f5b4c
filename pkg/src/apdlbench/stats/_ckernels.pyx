# cython: language_level=3
"""Compiled statistics kernels: twin of ``_pykernels`` (same contracts)."""

from libc.stdlib cimport free, malloc


def pairwise_counts(x, y):
    """Counts of (x>y, x<y, x==y) pairs across two samples."""
    cdef Py_ssize_t n = len(x), m = len(y)
    cdef double *xs = <double *> malloc(n * sizeof(double))
    cdef double *ys = <double *> malloc(m * sizeof(double))
    if xs == NULL or ys == NULL:
        free(xs)
        free(ys)
        raise MemoryError()
    cdef Py_ssize_t i
    try:
        sorted_x = sorted(float(v) for v in x)
        sorted_y = sorted(float(v) for v in y)
        for i in range(n):
            xs[i] = sorted_x[i]
        for i in range(m):
            ys[i] = sorted_y[i]
        return _merge_counts(xs, n, ys, m)
    finally:
        free(xs)
        free(ys)


cdef tuple _merge_counts(double *xs, Py_ssize_t n, double *ys, Py_ssize_t m):
    # Two-pointer sweep over both sorted arrays: for each x, `lo` counts the
    # y's strictly below it and `hi - lo` the y's equal to it.
    cdef long long gt = 0, lt = 0, tie = 0
    cdef Py_ssize_t lo = 0, hi = 0, i
    for i in range(n):
        while lo < m and ys[lo] < xs[i]:
            lo += 1
        if hi < lo:
            hi = lo
        while hi < m and ys[hi] <= xs[i]:
            hi += 1
        gt += lo
        tie += hi - lo
        lt += m - hi
    return gt, lt, tie


def two_u_distribution(group_counts, n):
    """Exact null distribution of 2*U; see the pure twin for the algorithm."""
    cdef list groups = [int(v) for v in group_counts]
    cdef Py_ssize_t total = 0
    for v in groups:
        total += v
    cdef Py_ssize_t n_x = n
    cdef Py_ssize_t m = total - n_x
    if n_x < 0 or m < 0:
        raise ValueError("sample size exceeds pooled size")
    # Completed paths satisfy 2U <= 2nm, but a partial path's running value
    # is only bounded by 2 * x_so_far * y_so_far <= N^2 / 2; rows must hold
    # those transients even though they never reach the final row.
    cdef Py_ssize_t width = (total * total) // 2 + 1

    # dist[x_used * width + two_u] = number of labelings; long long suffices
    # for the n+m <= 16 regime this kernel serves (max C(16,8) = 12870).
    cdef Py_ssize_t size = (n_x + 1) * width
    cdef long long *dist = <long long *> malloc(size * sizeof(long long))
    cdef long long *nxt = <long long *> malloc(size * sizeof(long long))
    if dist == NULL or nxt == NULL:
        free(dist)
        free(nxt)
        raise MemoryError()
    cdef Py_ssize_t i, x_used, a, a_max, c, prefix, contrib, key
    cdef long long weight, count
    cdef long long *tmp
    try:
        for i in range(size):
            dist[i] = 0
        dist[0] = 1
        prefix = 0
        for c in groups:
            for i in range(size):
                nxt[i] = 0
            for x_used in range(n_x + 1):
                for i in range(width):
                    count = dist[x_used * width + i]
                    if count == 0:
                        continue
                    a_max = c if c < n_x - x_used else n_x - x_used
                    weight = 1
                    for a in range(0, a_max + 1):
                        if a > 0:
                            weight = weight * (c - a + 1) // a  # C(c, a)
                        contrib = 2 * a * (prefix - x_used) + a * (c - a)
                        key = i + contrib
                        nxt[(x_used + a) * width + key] += count * weight
            tmp = dist
            dist = nxt
            nxt = tmp
            prefix += c
        out = {}
        for i in range(width):
            if dist[n_x * width + i] != 0:
                out[i] = dist[n_x * width + i]
        return out
    finally:
        free(dist)
        free(nxt)
