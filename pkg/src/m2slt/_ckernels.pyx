# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def pairwise_sqdist(points):
    cdef const double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t n = pts.shape[0], d = pts.shape[1]
    out_arr = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double acc, diff
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for k in range(d):
                diff = pts[i, k] - pts[j, k]
                acc = acc + diff * diff
            out[i, j] = acc
    return out_arr


def dbscan_labels(points, double eps, Py_ssize_t min_pts):
    sq_arr = pairwise_sqdist(points)
    cdef double[:, ::1] sq = sq_arr
    cdef Py_ssize_t n = sq.shape[0]
    cdef double eps2 = eps * eps
    cdef Py_ssize_t i, j, m, head, tail
    cdef Py_ssize_t UNSEEN = -2, NOISE = -1

    counts_arr = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] counts = counts_arr
    for i in range(n):
        for j in range(n):
            if sq[i, j] <= eps2:
                counts[i] += 1

    labels_arr = np.full(n, UNSEEN, dtype=np.int64)
    cdef cnp.int64_t[::1] labels = labels_arr
    # points are labelled when enqueued, so each enters at most once
    queue_arr = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] queue = queue_arr
    cdef cnp.int64_t cluster = 0

    for i in range(n):
        if labels[i] != UNSEEN:
            continue
        if counts[i] < min_pts:
            labels[i] = NOISE
            continue
        labels[i] = cluster
        queue[0] = i
        head = 0
        tail = 1
        while head < tail:
            j = queue[head]
            head += 1
            for m in range(n):
                if sq[j, m] > eps2:
                    continue
                if labels[m] == NOISE:
                    labels[m] = cluster
                elif labels[m] == UNSEEN:
                    labels[m] = cluster
                    if counts[m] >= min_pts:
                        queue[tail] = m
                        tail += 1
        cluster += 1
    return labels_arr


def kth_neighbor_distance(points, Py_ssize_t k):
    sq_arr = pairwise_sqdist(points)
    cdef Py_ssize_t n = sq_arr.shape[0], i
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    for i in range(n):
        row = np.delete(sq_arr[i], i)
        row.sort()
        out[i] = sqrt(row[k - 1])
    return out_arr


def lcs_length(a, b):
    cdef Py_ssize_t la = len(a), lb = len(b)
    if la == 0 or lb == 0:
        return 0
    # map tokens to ints so the inner loop stays in C
    table = {}
    ia_arr = np.array([table.setdefault(x, len(table)) for x in a], dtype=np.int64)
    ib_arr = np.array([table.setdefault(y, len(table)) for y in b], dtype=np.int64)
    cdef cnp.int64_t[::1] ia = ia_arr
    cdef cnp.int64_t[::1] ib = ib_arr
    prev_arr = np.zeros(lb + 1, dtype=np.int64)
    cur_arr = np.zeros(lb + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] prev = prev_arr
    cdef cnp.int64_t[::1] cur = cur_arr
    cdef cnp.int64_t[::1] tmp
    cdef Py_ssize_t i, j
    for i in range(la):
        cur[0] = 0
        for j in range(1, lb + 1):
            if ia[i] == ib[j - 1]:
                cur[j] = prev[j - 1] + 1
            elif cur[j - 1] > prev[j]:
                cur[j] = cur[j - 1]
            else:
                cur[j] = prev[j]
        tmp = prev
        prev = cur
        cur = tmp
    return int(prev[lb])


def bin_events(x, y, t, p, edges, Py_ssize_t height, Py_ssize_t width):
    cdef const cnp.int64_t[::1] e = np.ascontiguousarray(edges, dtype=np.int64)
    cdef const cnp.int64_t[::1] xs = np.ascontiguousarray(x, dtype=np.int64)
    cdef const cnp.int64_t[::1] ys = np.ascontiguousarray(y, dtype=np.int64)
    cdef const cnp.int64_t[::1] ts = np.ascontiguousarray(t, dtype=np.int64)
    cdef const cnp.int64_t[::1] ps = np.ascontiguousarray(p, dtype=np.int64)
    cdef Py_ssize_t n_bins = e.shape[0] - 1
    counts_arr = np.zeros((n_bins, height, width, 2), dtype=np.int64)
    cdef cnp.int64_t[:, :, :, ::1] counts = counts_arr
    cdef Py_ssize_t i, lo, hi, mid, n = ts.shape[0]
    cdef cnp.int64_t tv
    for i in range(n):
        tv = ts[i]
        if tv < e[0] or tv >= e[n_bins]:
            continue
        # largest bin index b with e[b] <= tv
        lo = 0
        hi = n_bins
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if e[mid] <= tv:
                lo = mid
            else:
                hi = mid
        counts[lo, ys[i], xs[i], 1 if ps[i] > 0 else 0] += 1
    return counts_arr


def topk_rows(scores, Py_ssize_t k):
    cdef const double[:, ::1] s = np.ascontiguousarray(scores, dtype=np.float64)
    cdef Py_ssize_t rows = s.shape[0], cols = s.shape[1]
    out_arr = np.empty((rows, k), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] out = out_arr
    taken_arr = np.zeros(cols, dtype=np.uint8)
    cdef cnp.uint8_t[::1] taken = taken_arr
    cdef Py_ssize_t r, j, c, best
    for r in range(rows):
        taken[:] = 0
        for j in range(k):
            best = -1
            for c in range(cols):
                if taken[c]:
                    continue
                if best < 0 or s[r, c] > s[r, best]:
                    best = c
            taken[best] = 1
            out[r, j] = best
    return out_arr
