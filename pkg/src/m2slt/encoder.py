"""Toy visual encoders: fixed spatial pooling followed by an MLP."""
from __future__ import annotations

import numpy as np

from .numkit import Mlp

GRID = 4
POOLED_DIM = 3 + GRID * GRID * 3  # global mean plus a 4x4 grid, per channel


def pool_frames(frames) -> np.ndarray:
    """Map (T, H, W, 3) frames to (T, 51) pooled descriptors."""
    f = np.asarray(frames, dtype=np.float64)
    if f.ndim != 4 or f.shape[3] != 3:
        raise ValueError(f"expected (T, H, W, 3) frames, got {f.shape}")
    t, h, w, _ = f.shape
    if h < GRID or w < GRID:
        raise ValueError(f"frames must be at least {GRID}x{GRID}")
    rows = np.linspace(0, h, GRID + 1).astype(int)
    cols = np.linspace(0, w, GRID + 1).astype(int)
    cells = [
        f[:, rows[i] : rows[i + 1], cols[j] : cols[j + 1], :].mean(axis=(1, 2))
        for i in range(GRID)
        for j in range(GRID)
    ]
    return np.concatenate([f.mean(axis=(1, 2))] + cells, axis=1)


class VideoEncoder:
    """Frozen window encoder used to build macro-sign prototypes.

    Frames are pooled spatially, averaged over the window, and passed through
    a seeded two-layer MLP.
    """

    def __init__(self, out_dim: int = 64, hidden: int = 64, seed: int = 0, frame_shape=None):
        rng = np.random.default_rng(seed)
        self.net = Mlp.create([POOLED_DIM, hidden, out_dim], rng)
        self.frame_shape = frame_shape
        self.out_dim = out_dim

    def __call__(self, window) -> np.ndarray:
        w = np.asarray(window)
        if self.frame_shape is not None and tuple(w.shape[1:3]) != tuple(self.frame_shape):
            raise ValueError(f"window frames are {w.shape[1:3]}, encoder expects {self.frame_shape}")
        pooled = pool_frames(w).mean(axis=0, keepdims=True)
        return self.net(pooled)[0]
