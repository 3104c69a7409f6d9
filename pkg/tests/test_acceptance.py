"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the status lines are written
straight to the terminal even when output capture is on.
"""
import time

import numpy as np
import pytest

from m2slt.events import EventStream, FrameSequence, parse_event_file, parse_frames, write_event_file, write_frames
from m2slt.metrics import bleu, rouge_l, score_corpus
from m2slt.numkit import SgdConfig, finite_difference, load_checkpoint, relative_error, save_checkpoint
from m2slt.pipeline import build_prototype_set, sample_event_counts
from m2slt.prototype import DbscanConfig, dbscan
from m2slt.hopfield import hopfield_retrieve
from m2slt.segment import propose, segmentation_iou
from m2slt.synth import SynthSpec, gen_dataset
from m2slt.translate import ModelConfig, Prepared, Translator, evaluate, prepare, train

from metric_fixture import CASES, as_tokens
from oracles import dbscan_reference, same_partition


@pytest.fixture
def report(capsys):
    def emit(n, title, ok, detail=""):
        with capsys.disabled():
            print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}: {title}" + (f" ({detail})" if detail else ""))
        assert ok, f"criterion {n} failed: {detail}"

    return emit


def test_1_gradient_integrity(report):
    t0 = time.perf_counter()
    cfg = ModelConfig(dim=8, vocab_size=7, enc_hidden=6, mir_slots=3, mir_dim=5, mir_hidden=6, top_k=2,
                      mar_hidden=6, dec_hidden=6, emb_dim=4)
    rng = np.random.default_rng(0)
    model = Translator(cfg, rng.normal(size=(2, 4)), seed=1)
    # move off the alpha = beta = 0 start so every branch carries gradient
    model.set_params({"mir.alpha": np.array([[0.7]]), "mar.beta": np.array([[0.6]])})
    prep = Prepared(rng.uniform(size=(4, 51)), rng.uniform(size=(4, 51)), (4, 5, 6))
    _, grads = model.loss_and_grads(prep)
    worst, checked = 0.0, []
    for name, p in model.params().items():
        def f():
            model.set_params({name: p})
            return model.loss(prep)
        num = finite_difference(f, p)
        model.set_params({name: p})
        worst = max(worst, float(relative_error(grads[name], num).max()))
        checked.append(name)
    elapsed = time.perf_counter() - t0
    groups = ("encoder.", "decoder.mlp.", "decoder.embed", "mir.alpha", "mir.memory", "mir.enc.", "mir.dec.",
              "mar.enc.", "mar.dec.", "mar.beta")
    missing = [g for g in groups if not any(n.startswith(g) for n in checked)]
    ok = worst <= 1e-4 and elapsed < 60 and not missing
    report(1, "end-to-end gradients match finite differences", ok,
           f"worst rel err {worst:.2e}, {elapsed:.1f}s, {len(checked)} tensors, missing groups {missing}")


def test_2_dbscan_oracle(report):
    settings = [(0.3, 4), (0.5, 6), (0.8, 10)]
    bad = []
    for eps, min_pts in settings:
        for seed in range(100):
            pts = np.random.default_rng(seed).normal(size=(200, 2))
            got = dbscan(pts, DbscanConfig(eps, min_pts)).tolist()
            if not same_partition(got, dbscan_reference(pts.tolist(), eps, min_pts)):
                bad.append((eps, min_pts, seed))
    report(2, "DBSCAN partitions equal the O(N^2) reference", not bad, f"{300 - len(bad)}/300 clouds agree")


def test_3_hopfield_retrieval(report):
    rng = np.random.default_rng(7)
    while True:
        q, _ = np.linalg.qr(rng.normal(size=(64, 10)))
        x = q.T + rng.normal(scale=0.02, size=(10, 64))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        g = np.abs(x @ x.T)
        np.fill_diagonal(g, 0)
        if g.max() < 0.1:
            break
    hits = 0
    for _ in range(100):
        c = rng.integers(10)
        out = hopfield_retrieve(x[c] + rng.normal(scale=0.05, size=64), x, beta_h=8.0)[0]
        hits += out @ x[c] / np.linalg.norm(out) >= 0.99
    mean_err = np.abs(hopfield_retrieve(rng.normal(size=(5, 64)), x, beta_h=1e-6) - x.mean(axis=0)).max()
    ok = hits >= 99 and mean_err <= 1e-4
    report(3, "Hopfield retrieves noisy prototypes", ok, f"{hits}/100 trials with cos >= 0.99, mean-limit err {mean_err:.1e}")


def _mean_iou(spec, seed):
    samples, manifest = gen_dataset(spec, 50, seed)
    ious = []
    for s, m in zip(samples, manifest["samples"]):
        merged, _, _ = propose(s, sample_event_counts(s))
        ious.append(segmentation_iou(merged, [tuple(p) for p in m["segments"]]))
    return np.array(ious)


def test_4_segmentation_fidelity(report):
    clean = _mean_iou(SynthSpec(), 11)
    noisy = _mean_iou(SynthSpec(noise_rate=2.0), 12)
    ok = bool(np.all(clean == 1.0)) and noisy.mean() >= 0.8
    report(4, "segment proposals recover ground truth", ok,
           f"clean min IoU {clean.min():.3f}, noisy mean IoU {noisy.mean():.3f}")


def test_5_metric_fixture(report):
    worst = 0.0
    for _, cands, refs, want_bleu, want_rouge in CASES:
        c, r = as_tokens(cands), as_tokens(refs)
        worst = max(worst, *(abs(g - w) for g, w in zip(bleu(c, r), want_bleu)), abs(rouge_l(c, r) - want_rouge))
    report(5, f"BLEU/ROUGE-L match {len(CASES)} hand cases", worst <= 1e-9, f"max abs err {worst:.1e}")


def test_6_memorization(report):
    t0 = time.perf_counter()
    samples, _ = gen_dataset(SynthSpec(vocab_size=30), 20, 0)
    protos = build_prototype_set(samples)
    cfg = ModelConfig(vocab_size=30)
    res = train(samples, cfg, SgdConfig(0.01), protos, epochs=200, seed=0)
    scores = score_corpus(*evaluate(res.model, samples))
    elapsed = time.perf_counter() - t0
    ok = scores.bleu[3] >= 0.9 and scores.rouge_l >= 0.9 and elapsed < 600
    report(6, "training set memorized", ok,
           f"BLEU-4 {scores.bleu[3]:.3f}, ROUGE-L {scores.rouge_l:.3f}, {elapsed:.0f}s")


@pytest.mark.slow
def test_7_ablation_ordering(report):
    spec = SynthSpec(vocab_size=30)
    rows = []
    for seed in range(5):
        samples, _ = gen_dataset(spec, 50, 100 + seed)
        tr, te = samples[:40], samples[40:]
        protos = build_prototype_set(tr)
        row = []
        for full in (True, False):
            cfg = ModelConfig(vocab_size=30, mir_micro=full, mir_recurrent=full, mar=full)
            res = train(tr, cfg, SgdConfig(0.01), protos, epochs=200, seed=seed)
            row.append(score_corpus(*evaluate(res.model, te)).bleu[3])
        rows.append(row)
    rows = np.array(rows)
    med_full, med_base = np.median(rows[:, 0]), np.median(rows[:, 1])
    lines = ["seed  full    baseline"] + [f"{s:>4}  {f:.4f}  {b:.4f}" for s, (f, b) in enumerate(rows)]
    lines.append(f"med   {med_full:.4f}  {med_base:.4f}")
    table = "\n".join("    " + line for line in lines)
    report(7, "median held-out BLEU-4: full >= baseline", med_full >= med_base,
           f"full {med_full:.4f} vs baseline {med_base:.4f}\n{table}")


def test_8_identity_warm_start(report):
    sample = gen_dataset(SynthSpec(), 1, 5)[0][0]
    protos = np.random.default_rng(0).normal(size=(6, 64))
    full = Translator(ModelConfig(), protos, seed=2)
    base = Translator(ModelConfig(mir_micro=False, mir_recurrent=False, mar=False), protos, seed=2)
    prep = prepare(sample, full.cfg)
    a, b = full.logits(prep), base.logits(prep)
    report(8, "full and baseline logits identical at init", a.shape == b.shape and np.array_equal(a, b),
           f"max |diff| {np.abs(a - b).max():.1e}")


def _random_stream(rng):
    w, h = int(rng.integers(1, 400)), int(rng.integers(1, 300))
    n = int(rng.integers(0, 300))
    return EventStream.from_arrays(
        w, h, rng.integers(0, w, n), rng.integers(0, h, n), rng.integers(0, 2**40, n), rng.choice([-1, 1], n)
    )


def test_9_serialization_round_trips(report):
    rng = np.random.default_rng(99)
    fails = {"EVT-TXT": 0, "EVT-BIN": 0, "FRM1": 0, "checkpoint": 0}
    for _ in range(100):
        s = _random_stream(rng)
        fails["EVT-TXT"] += parse_event_file(write_event_file(s)) != s
        fails["EVT-BIN"] += parse_event_file(write_event_file(s, binary=True)) != s
        shape = tuple(int(v) for v in rng.integers(1, 7, 3)) + (3,)
        seq = FrameSequence(rng.uniform(size=shape).astype(np.float32))
        fails["FRM1"] += not np.array_equal(parse_frames(write_frames(seq)).frames, seq.frames)
        tensors = {
            f"t{i}.{j}": rng.normal(size=tuple(rng.integers(1, 9, 2))).astype(np.float32).astype(np.float64)
            for i in range(int(rng.integers(1, 5))) for j in range(2)
        }
        blob = save_checkpoint(tensors)
        back = load_checkpoint(blob)
        same = list(back) == list(tensors) and all(np.array_equal(back[k], tensors[k]) for k in tensors)
        fails["checkpoint"] += not (same and save_checkpoint(back) == blob)
    detail = ", ".join(f"{k} {100 - v}/100" for k, v in fails.items())
    report(9, "serialization formats round-trip exactly", not any(fails.values()), detail)
