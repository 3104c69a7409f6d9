import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from m2slt.events import (
    C_SAT,
    AlignmentError,
    EventBoundsError,
    EventFormatError,
    EventStream,
    FrameSequence,
    align,
    event_count_per_frame,
    events_to_frames,
    parse_event_file,
    parse_frames,
    polarity_counts,
    uniform_edges,
    write_event_file,
    write_frames,
)

from oracles import bin_counts


def random_stream(rng, n, w=16, h=12, t_max=10_000):
    return EventStream.from_arrays(
        w, h,
        rng.integers(0, w, n), rng.integers(0, h, n),
        rng.integers(0, t_max, n), rng.choice([-1, 1], n),
    )


@st.composite
def streams(draw, max_events=60):
    w = draw(st.integers(1, 20))
    h = draw(st.integers(1, 20))
    n = draw(st.integers(0, max_events))
    ev = draw(st.lists(
        st.tuples(st.integers(0, w - 1), st.integers(0, h - 1), st.integers(0, 2**40), st.sampled_from([-1, 1])),
        min_size=n, max_size=n,
    ))
    cols = list(zip(*ev)) if ev else [[], [], [], []]
    return EventStream.from_arrays(w, h, *[np.array(c, dtype=np.int64) for c in cols])


def test_empty_file():
    s = parse_event_file(b"EVT1 4 4\n")
    assert s.resolution == (4, 4) and len(s) == 0


def test_parse_resorts_by_time():
    s = parse_event_file(b"EVT1 4 4\n1 2 100 1\n1 2 50 -1\n")
    assert s.t.tolist() == [50, 100]
    assert s.p.tolist() == [-1, 1]


def test_equal_timestamps_keep_input_order():
    s = parse_event_file(b"EVT1 8 8\n3 0 7 1\n1 0 7 -1\n2 0 7 1\n")
    assert s.x.tolist() == [3, 1, 2]


def test_comments_and_blank_lines_skipped():
    s = parse_event_file(b"EVT1 4 4\n# note\n\n0 0 1 1\n")
    assert len(s) == 1


@pytest.mark.parametrize("data", [b"", b"EVT2 4 4\n", b"EVT1 4\n", b"EVT1 a b\n", b"EVT1 0 4\n"])
def test_bad_header(data):
    with pytest.raises(EventFormatError):
        parse_event_file(data)


def test_bounds_error_names_line():
    with pytest.raises(EventBoundsError, match="line 3"):
        parse_event_file(b"EVT1 4 4\n0 0 1 1\n4 0 2 1\n")


def test_bad_polarity_is_value_error():
    with pytest.raises(ValueError, match="polarity"):
        parse_event_file(b"EVT1 4 4\n0 0 1 0\n")


def test_truncated_binary():
    data = write_event_file(random_stream(np.random.default_rng(0), 5), binary=True)
    with pytest.raises(EventFormatError):
        parse_event_file(data[:-3])


def test_binary_layout():
    s = EventStream.from_arrays(5, 6, [1], [2], [300], [-1])
    data = write_event_file(s, binary=True)
    assert data[:4] == b"EVB1"
    assert struct.unpack_from("<IIQ", data, 4) == (5, 6, 1)
    assert struct.unpack_from("<HHQb", data, 20) == (1, 2, 300, -1)
    assert len(data) == 20 + 13


@pytest.mark.parametrize("binary", [False, True])
def test_round_trip_1000_events(binary):
    s = random_stream(np.random.default_rng(1), 1000)
    assert parse_event_file(write_event_file(s, binary=binary)) == s


@given(streams())
def test_round_trip_property(s):
    assert parse_event_file(write_event_file(s)) == s
    assert parse_event_file(write_event_file(s, binary=True)) == s


def test_frames_round_trip(rng):
    seq = FrameSequence(rng.uniform(size=(3, 5, 4, 3)).astype(np.float32))
    back = parse_frames(write_frames(seq))
    assert np.array_equal(back.frames, seq.frames)


def test_frames_reject_out_of_range():
    with pytest.raises(ValueError):
        FrameSequence(np.full((1, 2, 2, 3), 1.5, dtype=np.float32))


def test_events_to_frames_empty():
    f = events_to_frames(EventStream.empty(4, 4), [0, 10, 20, 30])
    assert f.frames.shape == (3, 4, 4, 3) and not f.frames.any()


def test_single_on_event_placement():
    s = EventStream.from_arrays(4, 3, [2], [1], [10], [1])
    f = events_to_frames(s, [0, 100]).frames
    assert f[0, 1, 2, 2] == pytest.approx(min(1 / C_SAT, 1))
    f[0, 1, 2, 2] = 0
    assert not f.any()


def test_off_events_use_channel_zero_and_saturate():
    s = EventStream.from_arrays(2, 2, [0] * 7, [0] * 7, list(range(7)), [-1] * 7)
    f = events_to_frames(s, [0, 100]).frames
    assert f[0, 0, 0, 0] == 1.0
    assert not f[..., 1].any() and not f[..., 2].any()


def test_channel_sums_match_brute_force_binning():
    rng = np.random.default_rng(7)
    s = random_stream(rng, 500, w=6, h=5, t_max=1000)
    edges = [0, 130, 400, 401, 999]
    counts = polarity_counts(s, edges)
    oracle = bin_counts(zip(s.x.tolist(), s.y.tolist(), s.t.tolist(), s.p.tolist()), edges, 5, 6)
    for (b, y, x, on), v in oracle.items():
        assert counts[b, y, x, int(on)] == v
    assert counts.sum() == sum(oracle.values())
    frames = events_to_frames(s, edges).frames
    expect = np.minimum(counts / C_SAT, 1.0)
    assert np.allclose(frames[..., 0], expect[..., 0], atol=1e-7)
    assert np.allclose(frames[..., 2], expect[..., 1], atol=1e-7)


def test_event_count_per_frame_single_bin():
    s = EventStream.from_arrays(4, 4, [0, 1, 2], [0, 0, 0], [15, 16, 17], [1, -1, 1])
    assert event_count_per_frame(s, [0, 10, 20, 30, 40]).tolist() == [0, 3, 0, 0]


def test_event_count_empty():
    assert event_count_per_frame(EventStream.empty(2, 2), [0, 1, 2]).tolist() == [0, 0]


@pytest.mark.parametrize("edges", [[0], [0, 0], [5, 3]])
def test_bad_edges(edges):
    with pytest.raises(ValueError):
        events_to_frames(EventStream.empty(2, 2), edges)


@given(streams(), st.lists(st.integers(0, 2**40), min_size=2, max_size=8, unique=True))
def test_count_conservation(s, edges):
    edges = sorted(edges)
    c = event_count_per_frame(s, edges)
    inside = int(((s.t >= edges[0]) & (s.t < edges[-1])).sum())
    assert c.sum() == inside
    pc = polarity_counts(s, edges)
    assert np.array_equal(pc.sum(axis=(1, 2, 3)), c)
    f = events_to_frames(s, edges).frames
    assert f.min() >= 0 and f.max() <= 1


def test_uniform_edges_cover_stream():
    s = random_stream(np.random.default_rng(3), 50)
    e = uniform_edges(s, 7)
    assert len(e) == 8 and np.all(np.diff(e) > 0)
    assert event_count_per_frame(s, e).sum() == 50


def test_align_ok_and_axis_errors():
    a = FrameSequence(np.zeros((8, 16, 16, 3), dtype=np.float32))
    assert align(a, a, [4, 5]).tokens == (4, 5)
    b = FrameSequence(np.zeros((7, 16, 16, 3), dtype=np.float32))
    with pytest.raises(AlignmentError) as exc:
        align(a, b, [])
    assert exc.value.axis == "T"
    c = FrameSequence(np.zeros((8, 16, 15, 3), dtype=np.float32))
    with pytest.raises(AlignmentError) as exc:
        align(a, c, [])
    assert exc.value.axis == "W"
