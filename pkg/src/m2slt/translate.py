"""End-to-end translator: shared visual encoder, MiR/MaR enhancement,
additive fusion, and a small autoregressive decoder trained with summed NLL.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import hopfield, mir
from .encoder import POOLED_DIM, pool_frames
from .events import AlignedSample, FrameSequence
from .hopfield import MarParams
from .mir import MemoryPool
from .numkit import (
    Mlp,
    NumericError,
    SgdConfig,
    as_matrix,
    check_finite,
    cosine_annealed_lr,
    cross_entropy_rows,
    glorot,
    load_checkpoint,
    mlp_backward,
    mlp_forward,
    save_checkpoint,
    sgd_step,
)
from .prototype import PrototypeSet

log = logging.getLogger(__name__)

BOS, EOS, PAD, UNK = 0, 1, 2, 3
RESERVED = ("<bos>", "<eos>", "<pad>", "<unk>")


class Vocab:
    """Id <-> string table with four reserved ids at the front."""

    def __init__(self, symbols: Sequence[str]):
        self.itos = list(RESERVED) + [s for s in symbols if s not in RESERVED]
        if len(set(self.itos)) != len(self.itos):
            raise ValueError("duplicate vocabulary symbols")
        self.stoi = {s: i for i, s in enumerate(self.itos)}

    @classmethod
    def synthetic(cls, size: int) -> "Vocab":
        return cls([f"w{i}" for i in range(len(RESERVED), size)])

    def __len__(self) -> int:
        return len(self.itos)

    def encode(self, symbols: Sequence[str]) -> list[int]:
        return [self.stoi.get(s, UNK) for s in symbols]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.itos[i] for i in ids]


def check_tokens(tokens: Sequence[int], vocab_size: int) -> tuple[int, ...]:
    toks = tuple(int(t) for t in tokens)
    for t in toks:
        if not 0 <= t < vocab_size:
            raise ValueError(f"token id {t} outside vocabulary of size {vocab_size}")
    if BOS in toks:
        raise ValueError("token sequence contains an interior <bos>")
    return toks


@dataclass
class ModelConfig:
    dim: int = 64
    frame_interval: int = 4
    max_frames: int = 64
    vocab_size: int = 30
    enc_hidden: int = 128
    mir_slots: int = 128
    mir_dim: int = 512
    mir_hidden: int = 512
    top_k: int = 3
    mir_iterations: int = 1
    mar_hidden: int = 512
    beta_h: float = 8.0
    mar_iterations: int = 1
    dec_hidden: int = 128
    emb_dim: int = 32
    max_len: int = 16
    # ablation switches
    mir_micro: bool = True
    mir_recurrent: bool = True
    mar: bool = True
    freeze_scales: bool = False  # keep alpha and beta at their current value

    def __post_init__(self):
        if self.frame_interval < 1 or self.max_frames < 1:
            raise ValueError("frame_interval and max_frames must be >= 1")
        if self.vocab_size <= len(RESERVED):
            raise ValueError("vocab_size must exceed the reserved ids")


def sample_frames(frames, cfg: ModelConfig):
    """Keep every ``frame_interval``-th frame, capped at ``max_frames``."""
    seq = frames if isinstance(frames, FrameSequence) else FrameSequence(frames)
    if len(seq) < 1:
        raise ValueError("cannot sample an empty frame sequence")
    idx = np.arange(0, len(seq), cfg.frame_interval)[: cfg.max_frames]
    return seq.select(idx)


@dataclass
class InputNorm:
    """Frozen per-feature standardisation of pooled descriptors, one per modality."""

    rgb_mean: np.ndarray = field(default_factory=lambda: np.zeros((1, POOLED_DIM)))
    rgb_scale: np.ndarray = field(default_factory=lambda: np.ones((1, POOLED_DIM)))
    evt_mean: np.ndarray = field(default_factory=lambda: np.zeros((1, POOLED_DIM)))
    evt_scale: np.ndarray = field(default_factory=lambda: np.ones((1, POOLED_DIM)))

    FLOOR = 1e-3  # keeps constant features from blowing up

    @classmethod
    def fit(cls, data: Sequence["Prepared"]) -> "InputNorm":
        rgb = np.concatenate([d.rgb for d in data])
        evt = np.concatenate([d.evt for d in data])
        return cls(
            rgb.mean(axis=0, keepdims=True), rgb.std(axis=0, keepdims=True) + cls.FLOOR,
            evt.mean(axis=0, keepdims=True), evt.std(axis=0, keepdims=True) + cls.FLOOR,
        )

    def rgb(self, x: np.ndarray) -> np.ndarray:
        return (x - self.rgb_mean) / self.rgb_scale

    def evt(self, x: np.ndarray) -> np.ndarray:
        return (x - self.evt_mean) / self.evt_scale

    def state(self) -> dict[str, np.ndarray]:
        return {
            "norm.rgb.mean": self.rgb_mean, "norm.rgb.scale": self.rgb_scale,
            "norm.evt.mean": self.evt_mean, "norm.evt.scale": self.evt_scale,
        }

    @classmethod
    def from_state(cls, state: dict) -> "InputNorm":
        return cls(state["norm.rgb.mean"], state["norm.rgb.scale"],
                   state["norm.evt.mean"], state["norm.evt.scale"])


def visual_encode(frames, encoder: Mlp, mean=0.0, scale=1.0) -> np.ndarray:
    """Pool each frame, standardise, and apply the shared MLP."""
    f = frames.frames if isinstance(frames, FrameSequence) else frames
    return encoder((pool_frames(f) - mean) / scale)


def fuse(f_micro, f_rgb_macro, f_evt_macro) -> np.ndarray:
    a, b, c = as_matrix(f_micro), as_matrix(f_rgb_macro), as_matrix(f_evt_macro)
    if not a.shape == b.shape == c.shape:
        raise ValueError(f"fuse shape mismatch: {a.shape}, {b.shape}, {c.shape}")
    return a + b + c


@dataclass
class Prepared:
    """Pooled per-frame descriptors for one sample, ready for the model."""

    rgb: np.ndarray  # (L, 51)
    evt: np.ndarray  # (L, 51)
    tokens: tuple[int, ...]
    meta: str = ""


def prepare(sample: AlignedSample, cfg: ModelConfig) -> Prepared:
    rgb = sample_frames(sample.rgb, cfg)
    evt = sample_frames(sample.evt, cfg)
    return Prepared(pool_frames(rgb.frames), pool_frames(evt.frames), tuple(sample.tokens), sample.meta)


class Translator:
    def __init__(self, cfg: ModelConfig, prototypes: PrototypeSet | np.ndarray, seed: int = 0):
        self.cfg = cfg
        protos = prototypes.prototypes if isinstance(prototypes, PrototypeSet) else as_matrix(prototypes)
        if protos.shape[0] < 1:
            raise ValueError("at least one prototype is required")
        self.prototypes = np.array(protos, dtype=np.float64)
        rng = np.random.default_rng(seed)
        # every group is initialised regardless of switches so that ablations
        # share identical encoder/decoder weights for a given seed
        self.encoder = Mlp.create([POOLED_DIM, cfg.enc_hidden, cfg.dim], rng)
        self.pool = MemoryPool.create(
            cfg.dim, rng, n_slots=cfg.mir_slots, d_mem=cfg.mir_dim, hidden=cfg.mir_hidden, k=cfg.top_k
        )
        self.mar = MarParams.create(
            cfg.dim, self.prototypes.shape[1], rng, hidden=cfg.mar_hidden,
            beta_h=cfg.beta_h, iterations=cfg.mar_iterations,
        )
        self.embed = glorot(rng, cfg.vocab_size, cfg.emb_dim)
        self.decoder = Mlp.create([cfg.dim + cfg.emb_dim, cfg.dec_hidden, cfg.vocab_size], rng)
        self.norm = InputNorm()

    # -- parameter registry ------------------------------------------------

    def params(self) -> dict[str, np.ndarray]:
        out = {f"encoder.{k}": v for k, v in self.encoder.params().items()}
        out.update({f"mir.{k}": v for k, v in self.pool.params().items()})
        out.update({f"mar.{k}": v for k, v in self.mar.params().items()})
        out["decoder.embed"] = self.embed
        out.update({f"decoder.mlp.{k}": v for k, v in self.decoder.params().items()})
        return out

    def trainable(self) -> list[str]:
        names = list(self.params())
        if self.cfg.freeze_scales:
            names = [n for n in names if n not in ("mir.alpha", "mar.beta")]
        return names

    def set_params(self, values: dict[str, np.ndarray]) -> None:
        current = self.params()
        for name, v in values.items():
            if name not in current:
                raise KeyError(f"unknown parameter {name}")
            v = np.array(v, dtype=np.float64).reshape(current[name].shape)
            group, _, rest = name.partition(".")
            if group == "encoder":
                self.encoder.set_param(rest, v)
            elif group == "decoder":
                if rest == "embed":
                    self.embed = v
                else:
                    self.decoder.set_param(rest.split(".", 1)[1], v)
            elif group == "mir":
                self._set_scaled(self.pool, rest, v, "alpha", "memory")
            elif group == "mar":
                self._set_scaled(self.mar, rest, v, "beta", None)

    @staticmethod
    def _set_scaled(obj, rest, v, scalar, matrix):
        if rest == scalar or rest == matrix:
            setattr(obj, rest, v)
            return
        net, _, pname = rest.partition(".")
        getattr(obj, net).set_param(pname, v)

    def state_dict(self) -> dict[str, np.ndarray]:
        out = dict(self.params())
        out["mar.prototypes"] = self.prototypes
        out.update(self.norm.state())
        return out

    def save(self) -> bytes:
        return save_checkpoint(self.state_dict())

    def load(self, data: bytes) -> None:
        state = load_checkpoint(data)
        if "norm.rgb.mean" in state:
            self.norm = InputNorm.from_state(state)
            for k in self.norm.state():
                state.pop(k)
        protos = state.pop("mar.prototypes", None)
        if protos is not None:
            if protos.shape != self.prototypes.shape:
                raise ValueError(f"checkpoint prototypes {protos.shape} != model {self.prototypes.shape}")
            self.prototypes = protos
        missing = set(self.params()) - set(state)
        if missing:
            raise ValueError(f"checkpoint lacks {sorted(missing)[:3]}...")
        self.set_params(state)

    # -- forward / backward --------------------------------------------------

    def features(self, prep: Prepared):
        """Run everything up to the fused sequence; returns (fused, cache)."""
        cfg = self.cfg
        f_rgb, t_rgb = mlp_forward(self.encoder, self.norm.rgb(prep.rgb))
        f_evt, t_evt = mlp_forward(self.encoder, self.norm.evt(prep.evt))
        cache = {"t_rgb": t_rgb, "t_evt": t_evt}

        if cfg.mir_micro:
            h_rgb, cache["mir_rgb"] = mir.mir_enhance_forward(f_rgb, self.pool)
            h_evt, cache["mir_evt"] = mir.mir_enhance_forward(f_evt, self.pool)
        else:
            h_rgb, h_evt = f_rgb, f_evt
        f_micro, cache["mir_fuse"] = mir.mir_fuse_forward(
            h_rgb, h_evt, self.pool, cfg.mir_recurrent, cfg.mir_iterations
        )

        if cfg.mar:
            m_rgb, cache["mar_rgb"] = hopfield.mar_enhance_forward(f_rgb, self.prototypes, self.mar)
            m_evt, cache["mar_evt"] = hopfield.mar_enhance_forward(f_evt, self.prototypes, self.mar)
        else:
            m_rgb, m_evt = f_rgb, f_evt
        return fuse(f_micro, m_rgb, m_evt), cache

    def _decoder_inputs(self, fused, prev_tokens):
        ctx = fused.mean(axis=0, keepdims=True)
        emb = self.embed[np.asarray(prev_tokens, dtype=np.int64)]
        return np.concatenate([np.repeat(ctx, len(emb), axis=0), emb], axis=1)

    def decode_loss(self, fused, target: Sequence[int]):
        """Teacher-forced summed NLL over the target plus <eos>."""
        target = check_tokens(target, self.cfg.vocab_size)
        if not target:
            raise ValueError("target must hold at least one token")
        prev = (BOS,) + target
        gold = target + (EOS,)
        x = self._decoder_inputs(as_matrix(fused), prev)
        logits, tape = mlp_forward(self.decoder, x)
        loss, g_logits = cross_entropy_rows(logits, gold)
        return loss, logits, (tape, prev, g_logits, fused.shape[0])

    def loss_and_grads(self, prep: Prepared):
        fused, cache = self.features(prep)
        loss, logits, (tape, prev, g_logits, L) = self.decode_loss(fused, prep.tokens)
        grads: dict[str, np.ndarray] = {k: np.zeros_like(v) for k, v in self.params().items()}

        g_x, g_dec = mlp_backward(self.decoder, tape, g_logits)
        for k, v in g_dec.items():
            grads[f"decoder.mlp.{k}"] += v
        d = self.cfg.dim
        np.add.at(grads["decoder.embed"], np.asarray(prev), g_x[:, d:])
        g_fused = np.repeat(g_x[:, :d].sum(axis=0, keepdims=True) / L, L, axis=0)

        g_rgb = np.zeros_like(g_fused)
        g_evt = np.zeros_like(g_fused)
        if self.cfg.mar:
            mg: dict[str, np.ndarray] = {}
            g_rgb += hopfield.mar_enhance_backward(self.prototypes, self.mar, cache["mar_rgb"], g_fused, mg)
            g_evt += hopfield.mar_enhance_backward(self.prototypes, self.mar, cache["mar_evt"], g_fused, mg)
            for k, v in mg.items():
                grads[f"mar.{k}"] += v
        else:
            g_rgb += g_fused
            g_evt += g_fused

        pg: dict[str, np.ndarray] = {}
        g_h_rgb, g_h_evt = mir.mir_fuse_backward(self.pool, cache["mir_fuse"], g_fused, pg)
        if self.cfg.mir_micro:
            g_h_rgb = mir.mir_enhance_backward(self.pool, cache["mir_rgb"], g_h_rgb, pg)
            g_h_evt = mir.mir_enhance_backward(self.pool, cache["mir_evt"], g_h_evt, pg)
        for k, v in pg.items():
            grads[f"mir.{k}"] += v
        g_rgb += g_h_rgb
        g_evt += g_h_evt

        for tape_e, g in ((cache["t_rgb"], g_rgb), (cache["t_evt"], g_evt)):
            _, ge = mlp_backward(self.encoder, tape_e, g)
            for k, v in ge.items():
                grads[f"encoder.{k}"] += v
        return loss, grads

    def loss(self, prep: Prepared) -> float:
        fused, _ = self.features(prep)
        return self.decode_loss(fused, prep.tokens)[0]

    def logits(self, prep: Prepared) -> np.ndarray:
        fused, _ = self.features(prep)
        return self.decode_loss(fused, prep.tokens)[1]

    def decode_greedy(self, fused, max_len: int | None = None) -> tuple[int, ...]:
        max_len = self.cfg.max_len if max_len is None else max_len
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        fused = as_matrix(fused)
        ctx = fused.mean(axis=0, keepdims=True)
        out, prev = [], BOS
        for _ in range(max_len):
            x = np.concatenate([ctx, self.embed[prev : prev + 1]], axis=1)
            tok = int(np.argmax(self.decoder(x)[0]))
            if tok == EOS:
                break
            out.append(tok)
            prev = tok
        return tuple(out)

    def translate(self, prep: Prepared, max_len: int | None = None) -> tuple[int, ...]:
        fused, _ = self.features(prep)
        return self.decode_greedy(fused, max_len)


@dataclass
class TrainResult:
    model: Translator
    epoch_loss: list[float] = field(default_factory=list)
    epoch_lr: list[float] = field(default_factory=list)

    def csv(self) -> str:
        rows = ["epoch,mean_loss,lr"]
        rows += [f"{i},{loss!r},{lr!r}" for i, (loss, lr) in enumerate(zip(self.epoch_loss, self.epoch_lr))]
        return "\n".join(rows) + "\n"


def train(
    dataset,
    cfg: ModelConfig,
    sgd: SgdConfig,
    prototypes,
    epochs: int = 200,
    seed: int = 0,
    model: Translator | None = None,
) -> TrainResult:
    """Per-sample SGD with a cosine-annealed rate over ``epochs`` shuffled passes."""
    data = [d if isinstance(d, Prepared) else prepare(d, cfg) for d in dataset]
    if not data:
        raise ValueError("cannot train on an empty dataset")
    for d in data:
        check_tokens(d.tokens, cfg.vocab_size)
    if model is None:
        model = Translator(cfg, prototypes, seed)
        model.norm = InputNorm.fit(data)
    total = epochs * len(data)
    sgd = SgdConfig(sgd.lr0, total, sgd.momentum)
    rng = np.random.default_rng(seed)
    velocity: dict[str, np.ndarray] = {}
    names = model.trainable()
    result = TrainResult(model)
    step = 0
    for epoch in range(epochs):
        result.epoch_lr.append(cosine_annealed_lr(step, sgd))
        losses = []
        for i in rng.permutation(len(data)):
            loss, grads = model.loss_and_grads(data[i])
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}")
            params = model.params()
            new = sgd_step(
                {n: params[n] for n in names}, {n: grads[n] for n in names}, step, sgd, velocity
            )
            for n, v in new.items():
                check_finite(v, n)
            model.set_params(new)
            losses.append(loss)
            step += 1
        result.epoch_loss.append(float(np.mean(losses)))
        log.debug("epoch %d loss %.4f", epoch, result.epoch_loss[-1])
    return result


def evaluate(model: Translator, dataset, max_len: int | None = None):
    """Greedy-decode every sample; returns (hypotheses, references)."""
    hyps, refs = [], []
    for d in dataset:
        prep = d if isinstance(d, Prepared) else prepare(d, model.cfg)
        hyps.append(model.translate(prep, max_len))
        refs.append(tuple(prep.tokens))
    return hyps, refs


def weighted_frame_fusion(sample: AlignedSample, w_rgb: float = 0.5) -> AlignedSample:
    """Pixel-level 0.5/0.5 blend of the two modalities; evaluation-only baseline."""
    blend = w_rgb * sample.rgb.frames + (1.0 - w_rgb) * sample.evt.frames
    seq = FrameSequence(blend)
    return AlignedSample(seq, seq, sample.tokens, sample.meta)
