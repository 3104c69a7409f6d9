"""Synthetic RGB-Event gesture data with known segments and token labels.

Each token is a grey disk moving along a token-specific straight path for
``active`` frames, followed by ``idle`` still frames. The disk dims as it
moves and, once it stops, fades out in steps smaller than the event contrast
threshold. That keeps both the RGB foreground and the event activity confined
to the active frames, so ground-truth segments are exact for both sensors.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .events import (
    AlignedSample,
    EventStream,
    FrameSequence,
    align,
    events_to_frames,
    parse_frames,
    read_event_path,
    write_event_file,
    write_frames,
)

N_RESERVED = 4  # bos, eos, pad, unk
BACKGROUND = 0.2
PEAK = 0.8
FADE_FLOOR = 0.12  # amplitude on the last active frame; > RGB pixel threshold
FADE_STEP = 0.04  # post-motion fade step; < event contrast threshold
N_DIRECTIONS = 8
N_LANES = 3
LANE_STEP = 2.0  # pixels between parallel paths
MAX_DRAWS = 100


@dataclass(frozen=True)
class SynthSpec:
    width: int = 32
    height: int = 32
    frames: int | None = None  # None: exactly lead + tokens * (active + idle)
    vocab_size: int = 30
    tokens_per_sample: int = 3
    blob_radius: float = 3.0
    velocity: tuple[float, float] = (1.0, 2.0)
    noise_rate: float = 0.0
    active: int = 8
    idle: int = 4
    lead: int = 4
    contrast: float = 0.05
    frame_us: int = 40_000
    seed: int = 0

    def __post_init__(self):
        if self.width < 8 or self.height < 8:
            raise ValueError("resolution must be at least 8x8")
        if self.vocab_size <= N_RESERVED:
            raise ValueError(f"vocab_size must exceed the {N_RESERVED} reserved ids")
        if not 0 <= self.tokens_per_sample <= self.vocab_size - N_RESERVED:
            raise ValueError("tokens_per_sample must fit in the content vocabulary")
        if self.active < 3:
            raise ValueError("active must be >= 3 frames so segments survive run-length filtering")
        if self.idle < 3:
            raise ValueError("idle must be >= 3 frames to hold the sub-threshold fade")
        if self.lead < 1:
            raise ValueError("lead must be >= 1 frame")
        lo, hi = self.velocity
        if not 0 < lo <= hi:
            raise ValueError("velocity range must satisfy 0 < lo <= hi")
        if self.noise_rate < 0:
            raise ValueError("noise_rate must be >= 0")
        if self.frames is not None and self.frames < self.required_frames:
            raise ValueError(f"frames={self.frames} < required {self.required_frames}")
        if self.contrast <= FADE_STEP or self.contrast >= PEAK - BACKGROUND:
            raise ValueError("contrast threshold must exceed the fade step and stay below the blob contrast")
        reach = (self.active - 1) * hi / 2 + self.blob_radius + LANE_STEP * (N_LANES // 2)
        if reach >= min(self.width, self.height) / 2:
            raise ValueError("trajectories would leave the frame; lower velocity or active")

    @property
    def required_frames(self) -> int:
        return self.lead + self.tokens_per_sample * (self.active + self.idle)

    @property
    def n_frames(self) -> int:
        return self.frames if self.frames is not None else self.required_frames

    def content_tokens(self) -> range:
        return range(N_RESERVED, self.vocab_size)


def trajectory_params(token: int, spec: SynthSpec) -> tuple[int, int, int]:
    """(direction, lane, speed) indices; a mixed-radix split of the token id.

    Blob size is the same for every token so that per-frame activity is
    comparable across tokens under the mean-based thresholds.
    """
    j = token - N_RESERVED
    return j % N_DIRECTIONS, (j // N_DIRECTIONS) % N_LANES, j // (N_DIRECTIONS * N_LANES)


def _speed_levels(spec: SynthSpec) -> np.ndarray:
    n = max(1, math.ceil((spec.vocab_size - N_RESERVED) / (N_DIRECTIONS * N_LANES)))
    lo, hi = spec.velocity
    return np.array([lo]) if n == 1 else np.linspace(lo, hi, n)


def _render_token(lum, token, start, spec: SynthSpec):
    d, lane, s = trajectory_params(token, spec)
    angle = 2 * math.pi * d / N_DIRECTIONS
    radius = spec.blob_radius
    speed = _speed_levels(spec)[s]
    ux, uy = math.cos(angle), math.sin(angle)
    shift = (lane - N_LANES // 2) * LANE_STEP
    cx = (spec.width - 1) / 2 - uy * shift
    cy = (spec.height - 1) / 2 + ux * shift
    yy, xx = np.mgrid[0 : spec.height, 0 : spec.width]
    amps = np.linspace(PEAK - BACKGROUND, FADE_FLOOR, spec.active)
    half = (spec.active - 1) / 2
    mask = None
    for i in range(spec.active):
        off = (i - half) * speed
        px, py = cx + ux * off, cy + uy * off
        mask = (xx - px) ** 2 + (yy - py) ** 2 <= radius**2
        lum[start + i][mask] = BACKGROUND + amps[i]
    # fade out in place, each step below the event contrast threshold
    amp = FADE_FLOOR - FADE_STEP
    t = start + spec.active
    while amp > 1e-9 and t < len(lum):
        lum[t][mask] = BACKGROUND + amp
        amp -= FADE_STEP
        t += 1


def gen_sample(spec: SynthSpec, seed: int | None = None, sample_id: str = ""):
    """Return ``(sample, segments)``; ``sample.events`` holds the raw stream."""
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    T, H, W = spec.n_frames, spec.height, spec.width
    # redraw until the temporal median of every pixel is the true background,
    # which the median background model relies on
    for _ in range(MAX_DRAWS):
        tokens = [int(v) for v in rng.choice(np.array(spec.content_tokens()), spec.tokens_per_sample, replace=False)]
        lum = np.full((T, H, W), BACKGROUND)
        segments = []
        for i, tok in enumerate(tokens):
            start = spec.lead + i * (spec.active + spec.idle)
            _render_token(lum, tok, start, spec)
            segments.append((start, start + spec.active - 1))
        if np.all(np.median(lum, axis=0) == BACKGROUND):
            break
    else:
        raise ValueError("could not draw tokens whose motion leaves the median background intact; add idle frames")

    xs, ys, ts, ps = [], [], [], []
    half = spec.frame_us // 2
    for t in range(1, T):
        diff = lum[t] - lum[t - 1]
        yy, xx = np.nonzero(np.abs(diff) > spec.contrast)
        if len(xx) == 0:
            continue
        xs.append(xx)
        ys.append(yy)
        ps.append(np.sign(diff[yy, xx]).astype(np.int64))
        jitter = rng.integers(-half, spec.frame_us - half, size=len(xx))
        ts.append(t * spec.frame_us + half + jitter)
    if spec.noise_rate > 0:
        lam = spec.noise_rate * W * H / 1000.0
        counts = rng.poisson(lam, size=T)
        n = int(counts.sum())
        xs.append(rng.integers(0, W, n))
        ys.append(rng.integers(0, H, n))
        ps.append(rng.choice(np.array([-1, 1]), n))
        ts.append(np.repeat(np.arange(T), counts) * spec.frame_us + rng.integers(0, spec.frame_us, n))
    cat = lambda parts: np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)  # noqa: E731
    stream = EventStream.from_arrays(W, H, cat(xs), cat(ys), cat(ts), cat(ps))

    edges = np.arange(T + 1, dtype=np.int64) * spec.frame_us
    rgb = FrameSequence(np.repeat(lum[..., None], 3, axis=3).astype(np.float32), edges)
    evt = events_to_frames(stream, edges)
    return align(rgb, evt, tokens, sample_id, events=stream), segments


def derive_seeds(seed: int, n: int) -> list[int]:
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def gen_dataset(spec: SynthSpec, n_samples: int, seed: int | None = None):
    """Generate ``n_samples`` samples; returns (samples, manifest)."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    seed = spec.seed if seed is None else seed
    samples, entries = [], []
    for i, s in enumerate(derive_seeds(seed, n_samples)):
        sid = f"s{i:04d}"
        sample, segs = gen_sample(spec, s, sid)
        samples.append(sample)
        entries.append({"id": sid, "tokens": list(sample.tokens), "segments": [list(p) for p in segs]})
    manifest = {
        "frame_us": spec.frame_us,
        "vocab_size": spec.vocab_size,
        "spec": _spec_json(spec),
        "samples": entries,
    }
    return samples, manifest


def _spec_json(spec: SynthSpec) -> dict:
    d = asdict(spec)
    d["velocity"] = list(d["velocity"])
    return d


@dataclass
class LoadedDataset:
    samples: list
    manifest: dict
    segments: dict = field(default_factory=dict)


def write_dataset(samples, manifest: dict, out_dir, binary_events: bool = True) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ext = "evb" if binary_events else "evt"
    for s in samples:
        d = out / s.meta
        d.mkdir(exist_ok=True)
        (d / "rgb.frm").write_bytes(write_frames(s.rgb))
        (d / f"events.{ext}").write_bytes(write_event_file(s.events, binary=binary_events))
    manifest = {**manifest, "event_file": f"events.{ext}"}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


class DatasetError(OSError):
    pass


def load_dataset(path) -> LoadedDataset:
    root = Path(path)
    mf = root / "manifest.json"
    if not mf.exists():
        raise DatasetError(f"{root}: no manifest.json")
    manifest = json.loads(mf.read_text())
    frame_us = int(manifest.get("frame_us", 40_000))
    ev_name = manifest.get("event_file", "events.evb")
    samples, segments = [], {}
    for entry in manifest.get("samples", []):
        sid = entry["id"]
        d = root / sid
        try:
            rgb = parse_frames((d / "rgb.frm").read_bytes())
            stream = read_event_path(d / ev_name)
        except FileNotFoundError as exc:
            raise DatasetError(f"sample {sid}: missing file {exc.filename}") from None
        edges = np.arange(len(rgb) + 1, dtype=np.int64) * frame_us
        rgb = FrameSequence(rgb.frames, edges)
        samples.append(align(rgb, events_to_frames(stream, edges), entry["tokens"], sid, events=stream))
        segments[sid] = [tuple(p) for p in entry.get("segments", [])]
    return LoadedDataset(samples, manifest, segments)
