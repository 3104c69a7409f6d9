"""Informative-frame selection from RGB motion and event activity."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .events import AlignedSample, FrameSequence


@dataclass(frozen=True)
class SegmentConfig:
    theta_r: float | None = None  # None: mean motion intensity
    alpha_min: int = 3
    pixel_thresh: float = 0.1
    gap_merge: int = 2

    def __post_init__(self):
        if self.alpha_min < 1:
            raise ValueError("alpha_min must be >= 1")
        if not self.pixel_thresh > 0:
            raise ValueError("pixel_thresh must be positive")
        if self.gap_merge < 0:
            raise ValueError("gap_merge must be >= 0")


@dataclass(frozen=True)
class Proposal:
    start: int
    end: int
    source: str = "merged"

    def __post_init__(self):
        if self.start < 0 or self.end < self.start:
            raise ValueError(f"invalid proposal [{self.start}, {self.end}]")
        if self.source not in ("rgb", "event", "merged"):
            raise ValueError(f"unknown proposal source {self.source!r}")

    def __len__(self) -> int:
        return self.end - self.start + 1

    def as_pair(self) -> list[int]:
        return [self.start, self.end]


def motion_intensity(rgb, pixel_thresh: float = 0.1) -> np.ndarray:
    """Foreground pixel count per frame against a temporal-median background."""
    frames = rgb.frames if isinstance(rgb, FrameSequence) else np.asarray(rgb)
    if frames.shape[0] == 0:
        raise ValueError("motion_intensity needs at least one frame")
    lum = frames.astype(np.float64).mean(axis=3)
    background = np.median(lum, axis=0)
    return (np.abs(lum - background) > pixel_thresh).sum(axis=(1, 2)).astype(np.int64)


def auto_theta_r(r) -> float:
    return float(np.mean(r))


def threshold_runs(signal, threshold: float, alpha_min: int, source: str) -> list[Proposal]:
    """Maximal runs where ``signal > threshold`` lasting at least ``alpha_min`` frames."""
    above = np.asarray(signal, dtype=np.float64) > threshold
    out, start = [], None
    for t, on in enumerate(above.tolist() + [False]):
        if on and start is None:
            start = t
        elif not on and start is not None:
            if t - start >= alpha_min:
                out.append(Proposal(start, t - 1, source))
            start = None
    return out


def rgb_proposals(r, cfg: SegmentConfig = SegmentConfig()) -> list[Proposal]:
    theta = auto_theta_r(r) if cfg.theta_r is None else cfg.theta_r
    return threshold_runs(r, theta, cfg.alpha_min, "rgb")


def adaptive_event_threshold(e, T: int | None = None) -> float:
    e = np.asarray(e, dtype=np.float64)
    T = len(e) if T is None else T
    if T <= 0:
        raise ValueError("adaptive threshold needs T >= 1")
    if len(e) != T:
        raise ValueError(f"expected {T} event counts, got {len(e)}")
    return float(e.sum() / T)


def event_proposals(e, cfg: SegmentConfig = SegmentConfig()) -> list[Proposal]:
    return threshold_runs(e, adaptive_event_threshold(e), cfg.alpha_min, "event")


def _check_disjoint(props: Sequence[Proposal], name: str) -> None:
    for a, b in zip(props, props[1:]):
        if b.start <= a.end:
            raise ValueError(f"{name} proposals overlap or are unsorted: {a.as_pair()} {b.as_pair()}")


def merge_proposals(a_rgb, a_evt, cfg: SegmentConfig = SegmentConfig()) -> list[Proposal]:
    """Event proposals validated by RGB proposals, then gap-merged.

    Event boundaries are authoritative. An event proposal survives if it
    intersects any RGB proposal, or unconditionally when there are no RGB
    proposals. With no event proposals the RGB ones are returned as-is.
    """
    a_rgb, a_evt = list(a_rgb), list(a_evt)
    _check_disjoint(a_rgb, "rgb")
    _check_disjoint(a_evt, "event")
    if not a_evt:
        return a_rgb
    if a_rgb:
        kept = [p for p in a_evt if any(p.start <= q.end and q.start <= p.end for q in a_rgb)]
    else:
        kept = a_evt
    merged: list[list[int]] = []
    for p in kept:
        if merged and p.start - merged[-1][1] - 1 <= cfg.gap_merge:
            merged[-1][1] = p.end
        else:
            merged.append([p.start, p.end])
    return [Proposal(s, e, "merged") for s, e in merged]


def crop_sample(sample: AlignedSample, proposals) -> AlignedSample:
    """Restrict both modalities to the proposal frames, in time order.

    An empty proposal list returns the full sample with ``flags['crop_fallback']`` set.
    """
    proposals = sorted(proposals, key=lambda p: p.start)
    T = len(sample.rgb)
    if not proposals:
        return replace(sample, flags={**sample.flags, "crop_fallback": True})
    idx = []
    for p in proposals:
        if p.end >= T:
            raise ValueError(f"proposal {p.as_pair()} exceeds T={T}")
        idx.extend(range(p.start, p.end + 1))
    idx = sorted(set(idx))
    return replace(sample, rgb=sample.rgb.select(idx), evt=sample.evt.select(idx))


def temporal_iou(a: tuple[int, int], b: tuple[int, int]) -> float:
    inter = min(a[1], b[1]) - max(a[0], b[0]) + 1
    if inter <= 0:
        return 0.0
    union = (a[1] - a[0] + 1) + (b[1] - b[0] + 1) - inter
    return inter / union


def segmentation_iou(pred, truth) -> float:
    """Frame-level IoU between the unions of two interval sets."""
    def frames(props):
        s = set()
        for p in props:
            lo, hi = (p.start, p.end) if isinstance(p, Proposal) else p
            s.update(range(lo, hi + 1))
        return s

    fp, ft = frames(pred), frames(truth)
    if not fp and not ft:
        return 1.0
    return len(fp & ft) / len(fp | ft)


def propose(sample: AlignedSample, event_counts, cfg: SegmentConfig = SegmentConfig()):
    """Run both branches and the merge; returns (merged, rgb, event)."""
    a_rgb = rgb_proposals(motion_intensity(sample.rgb, cfg.pixel_thresh), cfg)
    a_evt = event_proposals(event_counts, cfg)
    return merge_proposals(a_rgb, a_evt, cfg), a_rgb, a_evt
