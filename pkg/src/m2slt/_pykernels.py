"""Pure-Python/numpy versions of the hot kernels.

Each function here has a twin in ``_ckernels.pyx`` with the same signature
and bit-identical results. Arithmetic order is kept in lockstep with the
compiled loops so that boundary comparisons agree.
"""
from collections import deque

import numpy as np


def pairwise_sqdist(points):
    points = np.ascontiguousarray(points, dtype=np.float64)
    n, d = points.shape
    out = np.zeros((n, n), dtype=np.float64)
    for k in range(d):
        col = points[:, k]
        diff = col[:, None] - col[None, :]
        out += diff * diff
    return out


def dbscan_labels(points, eps, min_pts):
    points = np.ascontiguousarray(points, dtype=np.float64)
    n = points.shape[0]
    sq = pairwise_sqdist(points)
    eps2 = float(eps) * float(eps)
    neighbors = [np.flatnonzero(sq[i] <= eps2) for i in range(n)]
    is_core = np.array([len(nb) >= min_pts for nb in neighbors], dtype=bool)

    UNSEEN, NOISE = -2, -1
    labels = np.full(n, UNSEEN, dtype=np.int64)
    cluster = 0
    for i in range(n):
        if labels[i] != UNSEEN:
            continue
        if not is_core[i]:
            labels[i] = NOISE
            continue
        labels[i] = cluster
        queue = deque([i])
        while queue:
            j = queue.popleft()
            for m in neighbors[j]:
                if labels[m] == NOISE:
                    labels[m] = cluster
                elif labels[m] == UNSEEN:
                    labels[m] = cluster
                    if is_core[m]:
                        queue.append(m)
        cluster += 1
    return labels


def kth_neighbor_distance(points, k):
    """Distance from each point to its k-th nearest other point."""
    sq = pairwise_sqdist(points)
    n = sq.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        row = np.delete(sq[i], i)
        row.sort()
        out[i] = np.sqrt(row[k - 1])
    return out


def lcs_length(a, b):
    a = list(a)
    b = list(b)
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, 1):
            if x == y:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = cur[j - 1] if cur[j - 1] > prev[j] else prev[j]
        prev = cur
    return prev[-1]


def bin_events(x, y, t, p, edges, height, width):
    """Per-bin, per-pixel ON and OFF counts.

    Returns an int64 array of shape (T, H, W, 2): [..., 0] OFF, [..., 1] ON.
    Events outside [edges[0], edges[-1]) are ignored.
    """
    edges = np.asarray(edges, dtype=np.int64)
    n_bins = len(edges) - 1
    counts = np.zeros((n_bins, height, width, 2), dtype=np.int64)
    t = np.asarray(t, dtype=np.int64)
    idx = np.searchsorted(edges, t, side="right") - 1
    keep = (idx >= 0) & (idx < n_bins)
    chan = (np.asarray(p)[keep] > 0).astype(np.int64)
    np.add.at(counts, (idx[keep], np.asarray(y)[keep], np.asarray(x)[keep], chan), 1)
    return counts


def topk_rows(scores, k):
    """Indices of the k largest entries per row; ties go to the lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, axis=1, kind="stable")
    return order[:, :k].astype(np.int64)
