import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from m2slt.encoder import VideoEncoder, pool_frames
from m2slt.pipeline import build_prototype_set, cluster_samples
from m2slt.prototype import (
    DbscanConfig,
    EmptyPrototypeError,
    PrototypeSet,
    WindowConfig,
    adaptive_eps,
    build_prototypes,
    dbscan,
    dedupe_by_tokens,
    encode_window,
    macro_average,
    resolve_eps,
    sliding_windows,
)
from m2slt.synth import SynthSpec, gen_dataset

from oracles import dbscan_reference, kth_distance_eps, same_partition

def test_window_config():
    with pytest.raises(ValueError):
        WindowConfig(window=0)
    with pytest.raises(ValueError):
        DbscanConfig(eps=0)
    with pytest.raises(ValueError):
        DbscanConfig(min_pts=0)


def test_sliding_window_counts():
    f = np.zeros((8, 4, 4, 3))
    assert len(sliding_windows(f, WindowConfig(8, 2))[0]) == 1
    f = np.arange(12)[:, None, None, None] * np.ones((12, 4, 4, 3))
    wins, padded = sliding_windows(f, WindowConfig(8, 2))
    assert [w[0, 0, 0, 0] for w in wins] == [0, 2, 4] and not padded


@given(st.integers(1, 60), st.integers(1, 10), st.integers(1, 5))
def test_window_count_closed_form(t, window, stride):
    wins, padded = sliding_windows(np.zeros((t, 1, 1, 3)), WindowConfig(window, stride))
    if t >= window:
        assert len(wins) == (t - window) // stride + 1 and not padded
    else:
        assert len(wins) == 1 and padded and wins[0].shape[0] == window


def test_encoder_zero_window_and_determinism(rng):
    enc = VideoEncoder(seed=0)
    z = encode_window(np.zeros((8, 16, 16, 3)), enc)
    hidden_bias = np.maximum(enc.net.layers[0].b, 0)
    assert np.allclose(z, (hidden_bias @ enc.net.layers[1].W + enc.net.layers[1].b)[0])
    assert np.allclose(z, 0.0)  # zero-initialised biases make the bias image zero
    w1, w2 = rng.uniform(size=(2, 8, 16, 16, 3))
    assert np.array_equal(encode_window(w1, enc), encode_window(w1.copy(), enc))
    a = [encode_window(w, enc) for w in (w1, w2)]
    b = [encode_window(w, enc) for w in (w2, w1)]
    assert np.array_equal(a[0], b[1]) and np.array_equal(a[1], b[0])


def test_encoder_spatial_mismatch():
    enc = VideoEncoder(frame_shape=(16, 16))
    with pytest.raises(ValueError):
        enc(np.zeros((8, 8, 8, 3)))


def test_encoder_matches_pool_then_mlp(rng):
    enc = VideoEncoder(seed=3)
    w = rng.uniform(size=(5, 9, 13, 3))
    pooled = pool_frames(w)
    # grid cells by hand for one frame
    assert pooled.shape == (5, 51)
    assert np.allclose(pooled[0, :3], w[0].mean(axis=(0, 1)))
    assert np.allclose(pooled[0, 3:6], w[0, 0:2, 0:3].mean(axis=(0, 1)))
    assert np.allclose(enc(w), enc.net(pooled.mean(axis=0, keepdims=True))[0], atol=1e-12)


def test_macro_average(rng):
    a, b = rng.normal(size=(2, 4, 3))
    assert np.array_equal(macro_average(a, a), a)
    assert not macro_average(a, -a).any()
    assert np.allclose(macro_average(a, b), [[(x + y) / 2 for x, y in zip(r, s)] for r, s in zip(a, b)], atol=1e-12)
    with pytest.raises(ValueError):
        macro_average(a, b[:2])


def test_dbscan_trivial_and_blobs(rng):
    assert dbscan(np.zeros((1, 3)), DbscanConfig(1.0, 1)).tolist() == [0]
    pts = np.concatenate([rng.normal(scale=0.1, size=(5, 2)), 10 + rng.normal(scale=0.1, size=(5, 2))])
    labels = dbscan(pts, DbscanConfig(1.0, 3))
    assert labels.tolist() == [0] * 5 + [1] * 5


@pytest.mark.parametrize("eps,min_pts", [(0.5, 3), (0.9, 5), (1.4, 8)])
def test_dbscan_matches_reference(eps, min_pts):
    for seed in range(10):
        pts = np.random.default_rng(seed).normal(size=(120, 2))
        got = dbscan(pts, DbscanConfig(eps, min_pts))
        ref = dbscan_reference(pts.tolist(), eps, min_pts)
        assert got.tolist() == ref
        assert same_partition(got.tolist(), ref)


@given(st.integers(0, 10_000), st.lists(st.integers(0, 99), min_size=100, max_size=100, unique=True))
def test_dbscan_permutation_invariance(seed, perm):
    rng = np.random.default_rng(seed)
    # well-separated tight blobs: no border point can be ambiguous
    centres = rng.uniform(-50, 50, size=(4, 2)) * np.array([[1, 1]])
    centres[:, 0] += np.arange(4) * 200
    pts = np.concatenate([c + rng.normal(scale=0.3, size=(25, 2)) for c in centres])
    cfg = DbscanConfig(2.0, 4)
    a = dbscan(pts, cfg)
    b = dbscan(pts[perm], cfg)
    assert same_partition(a[perm].tolist(), b.tolist())


def test_adaptive_eps_cases(rng):
    line = np.arange(10.0)[:, None]
    assert adaptive_eps(line, 1) == 1.0
    assert adaptive_eps(np.ones((6, 2)), 3) == 0.0
    assert resolve_eps(np.ones((6, 2)), DbscanConfig("adaptive", 3)) > 0
    assert dbscan(np.ones((6, 2)), DbscanConfig("adaptive", 3)).tolist() == [0] * 6
    dup = np.repeat([[0.0], [1.0], [3.0]], 5, axis=0)
    assert adaptive_eps(dup, 4) == 0.0
    assert resolve_eps(dup, DbscanConfig("adaptive", 4)) == 3.0  # 2nd-nearest distinct: 3, 2, 3
    assert dbscan(dup, DbscanConfig("adaptive", 4)).tolist() == [0] * 15
    with pytest.raises(ValueError):
        adaptive_eps(np.ones((3, 2)), 3)
    pts = rng.normal(size=(40, 3))
    assert abs(adaptive_eps(pts, 4) - kth_distance_eps(pts.tolist(), 4)) < 1e-12


def test_build_prototypes(rng):
    p = np.tile([[1.0, 2.0]], (4, 1))
    assert np.array_equal(build_prototypes(p, [0, 0, 0, 0]).prototypes, [[1.0, 2.0]])
    assert np.array_equal(build_prototypes([[0, 0], [2, 0]], [0, 0]).prototypes, [[1.0, 0.0]])
    with pytest.raises(EmptyPrototypeError, match="widen eps"):
        build_prototypes(p, [-1] * 4)
    pts = rng.normal(size=(80, 3))
    labels = dbscan(pts, DbscanConfig(0.8, 3))
    ps = build_prototypes(pts, labels)
    for c in range(len(ps)):
        assert np.allclose(ps.prototypes[c], pts[labels == c].mean(axis=0), atol=1e-12)
    conserved = (ps.prototypes * ps.sizes[:, None]).sum(axis=0)
    assert np.allclose(conserved, pts[labels >= 0].sum(axis=0), atol=1e-9)


def test_cluster_count_weakly_decreasing_in_eps(rng):
    pts = rng.normal(size=(150, 2))
    counts = []
    for eps in np.linspace(0.05, 3.0, 30):
        labels = dbscan(pts, DbscanConfig(float(eps), 4))
        counts.append(len(set(labels.tolist()) - {-1}))
        assert counts[-1] <= len(pts)
    # the number of clusters can rise when new cores appear, but merging wins at the top end
    assert counts[-1] <= min(counts[len(counts) // 2 :])
    assert counts[-1] == 1


def test_dedupe_keeps_first():
    class S:
        def __init__(self, tokens, name):
            self.tokens, self.name = tokens, name

    out = dedupe_by_tokens([S((4, 5), "a"), S((5, 4), "b"), S((4, 5), "c")])
    assert [s.name for s in out] == ["a", "b"]


def test_pipeline_determinism():
    samples, _ = gen_dataset(SynthSpec(), 6, 0)
    a = cluster_samples(samples)
    b = cluster_samples(samples)
    assert np.array_equal(a.prototypes.prototypes, b.prototypes.prototypes)
    assert a.eps == b.eps and a.n_points == b.n_points


def test_near_identical_samples_give_one_prototype():
    spec = SynthSpec(tokens_per_sample=1, vocab_size=5)  # one content token: every sample alike
    samples, _ = gen_dataset(spec, 4, 1)
    protos = build_prototype_set(samples, db_cfg=DbscanConfig(1.0, 1))
    assert len(protos) == 1


def test_two_families_give_two_prototypes():
    # features of two far-apart families of windows
    rng = np.random.default_rng(2)
    fam = np.concatenate([rng.normal(0, 0.01, (12, 64)), rng.normal(5, 0.01, (12, 64))])
    labels = dbscan(fam, DbscanConfig("adaptive", 4))
    assert len(build_prototypes(fam, labels)) == 2
