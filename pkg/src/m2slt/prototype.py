"""Macro-sign prototypes: window features, DBSCAN, and cluster centroids."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .numkit import as_matrix


class EmptyPrototypeError(ValueError):
    """Clustering produced no clusters at all."""


@dataclass(frozen=True)
class WindowConfig:
    window: int = 8
    stride: int = 2

    def __post_init__(self):
        if self.window < 1 or self.stride < 1:
            raise ValueError("window and stride must be >= 1")


@dataclass(frozen=True)
class DbscanConfig:
    eps: float | str = "adaptive"
    min_pts: int = 4

    def __post_init__(self):
        if self.eps != "adaptive" and not (isinstance(self.eps, (int, float)) and self.eps > 0):
            raise ValueError("eps must be positive or 'adaptive'")
        if self.min_pts < 1:
            raise ValueError("min_pts must be >= 1")


@dataclass
class PrototypeSet:
    prototypes: np.ndarray  # (C, D_enc)
    sizes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return self.prototypes.shape[0]

    @property
    def dim(self) -> int:
        return self.prototypes.shape[1]


def sliding_windows(frames, cfg: WindowConfig = WindowConfig()) -> tuple[list[np.ndarray], bool]:
    """Return the windows and whether the short-input padding fallback fired."""
    f = np.asarray(frames)
    t = f.shape[0]
    if t == 0:
        raise ValueError("cannot window an empty frame sequence")
    if t < cfg.window:
        pad = np.repeat(f[-1:], cfg.window - t, axis=0)
        return [np.concatenate([f, pad], axis=0)], True
    starts = range(0, t - cfg.window + 1, cfg.stride)
    return [f[s : s + cfg.window] for s in starts], False


def encode_window(window, encoder) -> np.ndarray:
    return np.asarray(encoder(window), dtype=np.float64)


def macro_average(f_evt, f_rgb) -> np.ndarray:
    a, b = np.asarray(f_evt, dtype=np.float64), np.asarray(f_rgb, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"macro_average shape mismatch: {a.shape} vs {b.shape}")
    return 0.5 * (a + b)


def adaptive_eps(points, min_pts: int) -> float:
    """Median distance from each point to its ``min_pts``-th nearest neighbour."""
    x = as_matrix(points)
    if x.shape[0] <= min_pts:
        raise ValueError(f"adaptive eps needs more than {min_pts} points, got {x.shape[0]}")
    return float(np.median(kernels.kth_neighbor_distance(x, min_pts)))


def dbscan(points, cfg: DbscanConfig = DbscanConfig()) -> np.ndarray:
    """Cluster labels per point, -1 for noise. Clusters are numbered in scan order."""
    x = as_matrix(points)
    if x.shape[0] == 0:
        raise ValueError("dbscan needs at least one point")
    eps = resolve_eps(x, cfg)
    return kernels.dbscan_labels(x, eps, cfg.min_pts)


def resolve_eps(points, cfg: DbscanConfig) -> float:
    if cfg.eps != "adaptive":
        return float(cfg.eps)
    x = as_matrix(points)
    eps = adaptive_eps(x, cfg.min_pts)
    if eps > 0:
        return eps
    # Exact duplicates (noise-free windows of a repeated sign) drive the median
    # to 0. Measure spacing between distinct points instead.
    distinct = np.unique(x, axis=0)
    if len(distinct) == 1:
        return 1.0  # one location: any positive radius gives the same labels
    return adaptive_eps(distinct, min(cfg.min_pts, len(distinct) - 1))


def build_prototypes(points, labels) -> PrototypeSet:
    x = as_matrix(points)
    labels = np.asarray(labels, dtype=np.int64)
    ids = np.unique(labels[labels >= 0])
    if len(ids) == 0:
        raise EmptyPrototypeError("every point is noise; widen eps or lower min_pts")
    cents = np.stack([x[labels == c].mean(axis=0) for c in ids])
    sizes = np.array([(labels == c).sum() for c in ids], dtype=np.int64)
    return PrototypeSet(cents, sizes)


def dedupe_by_tokens(samples: Sequence) -> list:
    """Keep the first sample for each distinct token sequence."""
    seen, out = set(), []
    for s in samples:
        key = tuple(s.tokens)
        if key not in seen:
            seen.add(key)
            out.append(s)
    return out


def segment_window_features(sample, proposals, encoder, cfg: WindowConfig = WindowConfig()) -> np.ndarray:
    """Averaged RGB/event window features for every proposal of one sample."""
    feats = []
    for prop in proposals:
        s, e = prop.start, prop.end
        rgb_w, _ = sliding_windows(sample.rgb.frames[s : e + 1], cfg)
        evt_w, _ = sliding_windows(sample.evt.frames[s : e + 1], cfg)
        for wr, we in zip(rgb_w, evt_w):
            feats.append(macro_average(encode_window(we, encoder), encode_window(wr, encoder)))
    if not feats:
        return np.zeros((0, encoder.out_dim))
    return np.stack(feats)
