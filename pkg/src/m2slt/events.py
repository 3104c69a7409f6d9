"""Event streams, their file formats, and conversion to frames.

Two on-disk encodings are supported for event streams:

EVT-TXT
    UTF-8 text. First line ``EVT1 <W> <H>``, then one ``<x> <y> <t> <p>`` line
    per event with ``p`` in {1, -1}. Lines starting with ``#`` are comments.
EVT-BIN
    ``EVB1`` magic, u32 W, u32 H, u64 count, then ``count`` packed records of
    (u16 x, u16 y, u64 t, i8 p), all little-endian.

Frame sequences serialize as ``FRM1``, u32 T, u32 H, u32 W followed by
T*H*W*3 little-endian f32 values in row-major order.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels

#: events per pixel per bin that saturate an event-frame channel
C_SAT = 5.0

EVT_TXT_MAGIC = "EVT1"
EVT_BIN_MAGIC = b"EVB1"
FRM_MAGIC = b"FRM1"

_EVT_RECORD = np.dtype([("x", "<u2"), ("y", "<u2"), ("t", "<u8"), ("p", "i1")])


class EventFormatError(ValueError):
    """Malformed event or frame file."""


class EventBoundsError(ValueError):
    """Event coordinate outside the declared resolution."""


class AlignmentError(ValueError):
    """RGB and event frame sequences disagree in shape."""

    def __init__(self, axis: str, rgb: int, evt: int):
        super().__init__(f"alignment mismatch on axis {axis}: rgb={rgb} evt={evt}")
        self.axis = axis


@dataclass(frozen=True)
class EventStream:
    width: int
    height: int
    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    p: np.ndarray

    @classmethod
    def from_arrays(cls, width, height, x, y, t, p, check=True) -> "EventStream":
        x = np.asarray(x, dtype=np.int64).reshape(-1)
        y = np.asarray(y, dtype=np.int64).reshape(-1)
        t = np.asarray(t, dtype=np.int64).reshape(-1)
        p = np.asarray(p, dtype=np.int8).reshape(-1)
        if not (len(x) == len(y) == len(t) == len(p)):
            raise ValueError("event field arrays differ in length")
        if check:
            _check_events(width, height, x, y, t, p)
        order = np.argsort(t, kind="stable")
        if np.any(order != np.arange(len(t))):
            x, y, t, p = x[order], y[order], t[order], p[order]
        for a in (x, y, t, p):
            a.setflags(write=False)
        return cls(int(width), int(height), x, y, t, p)

    @classmethod
    def empty(cls, width: int, height: int) -> "EventStream":
        return cls.from_arrays(width, height, [], [], [], [])

    @property
    def resolution(self) -> tuple[int, int]:
        return self.width, self.height

    def __len__(self) -> int:
        return len(self.t)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.resolution == other.resolution
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.p, other.p)
        )

    __hash__ = None  # type: ignore[assignment]


def _check_events(width, height, x, y, t, p, lines=None):
    def where(i):
        return f"line {lines[i]}" if lines is not None else f"event {i}"

    bad = np.flatnonzero((x < 0) | (x >= width) | (y < 0) | (y >= height))
    if len(bad):
        i = bad[0]
        raise EventBoundsError(
            f"{where(i)}: ({x[i]}, {y[i]}) outside resolution {width}x{height}"
        )
    bad = np.flatnonzero((p != 1) & (p != -1))
    if len(bad):
        raise ValueError(f"{where(bad[0])}: polarity must be 1 or -1, got {p[bad[0]]}")
    bad = np.flatnonzero(t < 0)
    if len(bad):
        raise ValueError(f"{where(bad[0])}: negative timestamp {t[bad[0]]}")


@dataclass(frozen=True)
class FrameSequence:
    frames: np.ndarray  # (T, H, W, 3) float32 in [0, 1]
    frame_times: np.ndarray | None = None  # (T + 1,) bin edges in microseconds

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.float32)
        if f.ndim != 4 or f.shape[3] != 3:
            raise ValueError(f"frames must be (T, H, W, 3), got {f.shape}")
        if f.size and not (f.min() >= 0.0 and f.max() <= 1.0):
            raise ValueError("frame values must lie in [0, 1]")
        object.__setattr__(self, "frames", f)
        if self.frame_times is not None:
            ft = np.asarray(self.frame_times, dtype=np.int64)
            if len(ft) != f.shape[0] + 1 or np.any(np.diff(ft) <= 0):
                raise ValueError("frame_times must be T+1 strictly increasing edges")
            object.__setattr__(self, "frame_times", ft)

    @property
    def shape(self) -> tuple[int, int, int]:
        t, h, w, _ = self.frames.shape
        return t, h, w

    def __len__(self) -> int:
        return self.frames.shape[0]

    def select(self, indices) -> "FrameSequence":
        return FrameSequence(self.frames[np.asarray(indices, dtype=np.int64)])


@dataclass(frozen=True)
class AlignedSample:
    rgb: FrameSequence
    evt: FrameSequence
    tokens: tuple[int, ...]
    meta: str = ""
    flags: dict = field(default_factory=dict, compare=False)
    events: EventStream | None = field(default=None, compare=False, repr=False)


# -- file I/O ---------------------------------------------------------------


def parse_event_file(data: bytes) -> EventStream:
    """Parse EVT-TXT or EVT-BIN bytes, dispatching on the magic."""
    if data[:4] == EVT_BIN_MAGIC:
        return _parse_bin(data)
    return _parse_txt(data)


def _parse_txt(data: bytes) -> EventStream:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise EventFormatError(f"not UTF-8: {exc}") from None
    lines = text.splitlines()
    header = lines[0].split() if lines else []
    if len(header) != 3 or header[0] != EVT_TXT_MAGIC:
        raise EventFormatError(f"bad header {lines[0]!r}" if lines else "empty file")
    try:
        width, height = int(header[1]), int(header[2])
    except ValueError:
        raise EventFormatError(f"bad header {lines[0]!r}") from None
    if width <= 0 or height <= 0:
        raise EventFormatError(f"bad resolution {width}x{height}")

    rows, line_nos = [], []
    for no, line in enumerate(lines[1:], start=2):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.split()
        if len(parts) != 4:
            raise EventFormatError(f"line {no}: expected 4 fields, got {len(parts)}")
        try:
            rows.append([int(v) for v in parts])
        except ValueError:
            raise EventFormatError(f"line {no}: non-integer field in {s!r}") from None
        line_nos.append(no)
    arr = np.array(rows, dtype=np.int64).reshape(-1, 4)
    x, y, t, p = arr.T
    _check_events(width, height, x, y, t, p, lines=line_nos)
    return EventStream.from_arrays(width, height, x, y, t, p, check=False)


def _parse_bin(data: bytes) -> EventStream:
    if len(data) < 20:
        raise EventFormatError("truncated EVT-BIN header")
    width, height, count = struct.unpack_from("<IIQ", data, 4)
    body = data[20:]
    if len(body) != count * _EVT_RECORD.itemsize:
        raise EventFormatError(
            f"EVT-BIN body is {len(body)} bytes, expected {count * _EVT_RECORD.itemsize}"
        )
    rec = np.frombuffer(body, dtype=_EVT_RECORD, count=count)
    x = rec["x"].astype(np.int64)
    y = rec["y"].astype(np.int64)
    t = rec["t"].astype(np.int64)
    p = rec["p"].astype(np.int64)
    _check_events(width, height, x, y, t, p)
    return EventStream.from_arrays(width, height, x, y, t, p, check=False)


def write_event_file(stream: EventStream, binary: bool = False) -> bytes:
    if binary:
        rec = np.empty(len(stream), dtype=_EVT_RECORD)
        rec["x"], rec["y"], rec["t"], rec["p"] = stream.x, stream.y, stream.t, stream.p
        head = EVT_BIN_MAGIC + struct.pack("<IIQ", stream.width, stream.height, len(stream))
        return head + rec.tobytes()
    out = [f"{EVT_TXT_MAGIC} {stream.width} {stream.height}"]
    out.extend(
        f"{x} {y} {t} {p}"
        for x, y, t, p in zip(
            stream.x.tolist(), stream.y.tolist(), stream.t.tolist(), stream.p.tolist()
        )
    )
    return ("\n".join(out) + "\n").encode("utf-8")


def read_event_path(path) -> EventStream:
    return parse_event_file(Path(path).read_bytes())


def write_frames(seq: FrameSequence) -> bytes:
    t, h, w = seq.shape
    body = np.ascontiguousarray(seq.frames, dtype="<f4").tobytes()
    return FRM_MAGIC + struct.pack("<III", t, h, w) + body


def parse_frames(data: bytes) -> FrameSequence:
    if data[:4] != FRM_MAGIC or len(data) < 16:
        raise EventFormatError("missing FRM1 header")
    t, h, w = struct.unpack_from("<III", data, 4)
    n = t * h * w * 3
    if len(data) - 16 != 4 * n:
        raise EventFormatError(f"FRM1 body is {len(data) - 16} bytes, expected {4 * n}")
    frames = np.frombuffer(data, dtype="<f4", count=n, offset=16).reshape(t, h, w, 3)
    return FrameSequence(frames.astype(np.float32))


# -- conversion -------------------------------------------------------------


def _check_edges(bin_edges) -> np.ndarray:
    edges = np.asarray(bin_edges, dtype=np.int64).reshape(-1)
    if len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin_edges must hold at least two strictly increasing timestamps")
    return edges


def polarity_counts(stream: EventStream, bin_edges) -> np.ndarray:
    """Raw (T, H, W, 2) counts, channel 0 OFF and channel 1 ON."""
    edges = _check_edges(bin_edges)
    return kernels.bin_events(
        stream.x, stream.y, stream.t, stream.p, edges, stream.height, stream.width
    )


def events_to_frames(stream: EventStream, bin_edges, c_sat: float = C_SAT) -> FrameSequence:
    """Accumulate events into polarity-split count images.

    OFF counts land in channel 0 and ON counts in channel 2, each divided by
    ``c_sat`` and clamped to [0, 1]. Channel 1 stays zero.
    """
    counts = polarity_counts(stream, bin_edges)
    t, h, w, _ = counts.shape
    frames = np.zeros((t, h, w, 3), dtype=np.float32)
    frames[..., 0] = np.minimum(counts[..., 0] / c_sat, 1.0)
    frames[..., 2] = np.minimum(counts[..., 1] / c_sat, 1.0)
    return FrameSequence(frames, np.asarray(bin_edges, dtype=np.int64))


def event_count_per_frame(stream: EventStream, bin_edges) -> np.ndarray:
    edges = _check_edges(bin_edges)
    idx = np.searchsorted(edges, stream.t, side="right") - 1
    idx = idx[(idx >= 0) & (idx < len(edges) - 1)]
    return np.bincount(idx, minlength=len(edges) - 1).astype(np.int64)


def uniform_edges(stream: EventStream, n_bins: int) -> np.ndarray:
    """Bin edges splitting [t_min, t_max] evenly; the last edge is exclusive-safe."""
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if len(stream) == 0:
        return np.arange(n_bins + 1, dtype=np.int64)
    lo, hi = int(stream.t[0]), int(stream.t[-1]) + 1
    edges = np.linspace(lo, hi, n_bins + 1).round().astype(np.int64)
    if np.any(np.diff(edges) <= 0):
        edges = lo + np.arange(n_bins + 1, dtype=np.int64) * max(1, -(-(hi - lo) // n_bins))
    return edges


def align(
    rgb: FrameSequence,
    evt: FrameSequence,
    tokens: Sequence[int],
    meta: str = "",
    events: EventStream | None = None,
) -> AlignedSample:
    for axis, a, b in zip("THW", rgb.shape, evt.shape):
        if a != b:
            raise AlignmentError(axis, a, b)
    return AlignedSample(rgb, evt, tuple(int(v) for v in tokens), meta, events=events)
