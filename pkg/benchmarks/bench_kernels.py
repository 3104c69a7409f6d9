"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from m2slt import _pykernels

try:
    from m2slt import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def cases(rng):
    pts = rng.normal(size=(800, 16))
    n_ev = 200_000
    ev = (
        rng.integers(0, 64, n_ev),
        rng.integers(0, 64, n_ev),
        np.sort(rng.integers(0, 1_000_000, n_ev)),
        rng.choice(np.array([-1, 1]), n_ev),
    )
    edges = np.linspace(0, 1_000_000, 51).astype(np.int64)
    a = list(rng.integers(0, 20, 400))
    b = list(rng.integers(0, 20, 400))
    scores = rng.normal(size=(256, 512))
    return {
        "pairwise_sqdist 800x16": lambda k: k.pairwise_sqdist(pts),
        "dbscan 800 pts": lambda k: k.dbscan_labels(pts, 3.5, 4),
        "kth_neighbor 800 pts": lambda k: k.kth_neighbor_distance(pts, 4),
        "bin_events 200k": lambda k: k.bin_events(*ev, edges, 64, 64),
        "lcs 400x400": lambda k: k.lcs_length(a, b),
        "topk 256x512 k=3": lambda k: k.topk_rows(scores, 3),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<26}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, fn in cases(rng).items():
        py = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat)) * 1e3
        if _ckernels is None:
            print(f"{name:<26}{py:>12.2f}{'n/a':>12}{'':>10}")
            continue
        cy = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<26}{py:>12.2f}{cy:>12.2f}{py / cy:>9.1f}x")


if __name__ == "__main__":
    main()
