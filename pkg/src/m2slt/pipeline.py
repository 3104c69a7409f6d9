"""Glue between segmentation and prototype construction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import VideoEncoder
from .events import AlignedSample, event_count_per_frame, uniform_edges
from .prototype import (
    DbscanConfig,
    PrototypeSet,
    WindowConfig,
    build_prototypes,
    dbscan,
    dedupe_by_tokens,
    resolve_eps,
    segment_window_features,
)
from .segment import SegmentConfig, propose


def sample_event_counts(sample: AlignedSample) -> np.ndarray:
    """Per-frame event counts, binned on the RGB frame times when known."""
    if sample.events is None:
        raise ValueError(f"sample {sample.meta!r} carries no raw event stream")
    edges = sample.rgb.frame_times
    if edges is None:
        edges = uniform_edges(sample.events, len(sample.rgb))
    return event_count_per_frame(sample.events, edges)


def segment_sample(sample: AlignedSample, cfg: SegmentConfig = SegmentConfig()):
    """(merged, rgb, event) proposals for one sample."""
    return propose(sample, sample_event_counts(sample), cfg)


@dataclass
class ClusterReport:
    prototypes: PrototypeSet
    eps: float
    n_points: int
    n_noise: int

    def to_json(self) -> dict:
        return {
            "C": len(self.prototypes),
            "noise": self.n_noise,
            "eps": self.eps,
            "points": self.n_points,
            "dim": self.prototypes.dim,
        }


def window_features(
    samples,
    seg_cfg: SegmentConfig = SegmentConfig(),
    win_cfg: WindowConfig = WindowConfig(),
    encoder: VideoEncoder | None = None,
) -> np.ndarray:
    encoder = VideoEncoder() if encoder is None else encoder
    feats = []
    for s in dedupe_by_tokens(samples):
        merged, _, _ = segment_sample(s, seg_cfg)
        if not merged:
            continue
        feats.append(segment_window_features(s, merged, encoder, win_cfg))
    if not feats:
        return np.zeros((0, encoder.out_dim))
    return np.concatenate(feats, axis=0)


def cluster_samples(
    samples,
    seg_cfg: SegmentConfig = SegmentConfig(),
    win_cfg: WindowConfig = WindowConfig(),
    db_cfg: DbscanConfig = DbscanConfig(),
    encoder: VideoEncoder | None = None,
) -> ClusterReport:
    points = window_features(samples, seg_cfg, win_cfg, encoder)
    if len(points) == 0:
        raise ValueError("no informative segments found; nothing to cluster")
    eps = resolve_eps(points, db_cfg) if len(points) > db_cfg.min_pts or db_cfg.eps != "adaptive" else None
    if eps is None:
        raise ValueError(f"adaptive eps needs more than {db_cfg.min_pts} windows, got {len(points)}")
    labels = dbscan(points, DbscanConfig(eps, db_cfg.min_pts))
    protos = build_prototypes(points, labels)
    return ClusterReport(protos, eps, len(points), int((labels < 0).sum()))


def build_prototype_set(samples, **kwargs) -> PrototypeSet:
    return cluster_samples(samples, **kwargs).prototypes
