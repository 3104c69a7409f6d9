"""Small dense-numeric toolkit with hand-written backward passes.

Matrices are plain 2-D float64 numpy arrays. Every differentiable op comes in
a forward/backward pair so the model code can chain exact gradients without
a general autodiff graph.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

EPS_DIV = 1e-8
CKPT_MAGIC = b"M2SW"


class StateError(RuntimeError):
    """A tape no longer matches the network that produced it."""


class NumericError(FloatingPointError):
    """NaN or Inf appeared where finite values are required."""


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {m.shape}")
    return m


def check_finite(a: np.ndarray, what: str = "value") -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NumericError(f"non-finite {what}")
    return a


def matmul(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return a @ b


def softmax_rows(m, temperature: float = 1.0) -> np.ndarray:
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    z = as_matrix(m) / temperature
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_backward(probs: np.ndarray, grad_out: np.ndarray, temperature: float = 1.0):
    """Gradient w.r.t. the softmax input given its output ``probs``."""
    inner = (grad_out * probs).sum(axis=1, keepdims=True)
    return probs * (grad_out - inner) / temperature


def log_softmax_rows(m) -> np.ndarray:
    z = as_matrix(m)
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def cosine_similarity(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"cosine_similarity inner dims differ: {a.shape[1]} vs {b.shape[1]}")
    na = np.sqrt((a * a).sum(axis=1))
    nb = np.sqrt((b * b).sum(axis=1))
    return (a @ b.T) / (np.outer(na, nb) + EPS_DIV)


def cosine_similarity_backward(a, b, grad_out):
    """Gradients of ``cosine_similarity(a, b)`` w.r.t. both inputs."""
    a, b = as_matrix(a), as_matrix(b)
    na = np.sqrt((a * a).sum(axis=1))
    nb = np.sqrt((b * b).sum(axis=1))
    dot = a @ b.T
    den = np.outer(na, nb) + EPS_DIV
    g_dot = grad_out / den
    g_den = -grad_out * dot / (den * den)
    ga = g_dot @ b
    gb = g_dot.T @ a
    # d den / d a_i = nb_j * a_i / na_i
    with np.errstate(divide="ignore", invalid="ignore"):
        sa = np.where(na > 0, (g_den @ nb) / na, 0.0)
        sb = np.where(nb > 0, (g_den.T @ na) / nb, 0.0)
    ga += sa[:, None] * a
    gb += sb[:, None] * b
    return ga, gb


def cross_entropy_rows(logits, targets) -> tuple[float, np.ndarray]:
    """Summed negative log-likelihood and its gradient w.r.t. the logits."""
    logits = as_matrix(logits)
    targets = np.asarray(targets, dtype=np.int64)
    logp = log_softmax_rows(logits)
    rows = np.arange(len(targets))
    loss = float(-logp[rows, targets].sum())
    grad = np.exp(logp)
    grad[rows, targets] -= 1.0
    return loss, grad


# -- MLP --------------------------------------------------------------------


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    s = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=(fan_in, fan_out))


@dataclass
class Layer:
    W: np.ndarray  # (in, out)
    b: np.ndarray  # (1, out)
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ("relu", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class Tape:
    net_id: int
    version: int
    inputs: list  # input to each layer
    pre: list  # pre-activation of each layer


class Mlp:
    """Fully connected net; the last layer uses the identity activation."""

    def __init__(self, layers: list[Layer]):
        for a, b in zip(layers, layers[1:]):
            if a.W.shape[1] != b.W.shape[0]:
                raise ValueError("layer dimensions do not chain")
        self.layers = layers
        self.version = 0

    @classmethod
    def create(cls, sizes, rng, hidden_activation="relu") -> "Mlp":
        layers = []
        for i, (fi, fo) in enumerate(zip(sizes, sizes[1:])):
            act = "identity" if i == len(sizes) - 2 else hidden_activation
            layers.append(Layer(glorot(rng, fi, fo), np.zeros((1, fo)), act))
        return cls(layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].W.shape[0]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].W.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers):
            out[f"{i}.W"] = layer.W
            out[f"{i}.b"] = layer.b
        return out

    def set_param(self, name: str, value: np.ndarray) -> None:
        i, kind = name.split(".")
        layer = self.layers[int(i)]
        cur = getattr(layer, kind)
        if cur.shape != value.shape:
            raise ValueError(f"shape mismatch for {name}: {cur.shape} vs {value.shape}")
        setattr(layer, kind, np.array(value, dtype=np.float64))
        self.touch()

    def touch(self) -> None:
        self.version += 1

    def __call__(self, x) -> np.ndarray:
        return mlp_forward(self, x)[0]


def mlp_forward(net: Mlp, x) -> tuple[np.ndarray, Tape]:
    h = as_matrix(x)
    if h.shape[1] != net.in_dim:
        raise ValueError(f"mlp input has {h.shape[1]} columns, expected {net.in_dim}")
    inputs, pre = [], []
    for layer in net.layers:
        inputs.append(h)
        z = h @ layer.W + layer.b
        pre.append(z)
        h = np.maximum(z, 0.0) if layer.activation == "relu" else z
    return h, Tape(id(net), net.version, inputs, pre)


def mlp_backward(net: Mlp, tape: Tape, grad_out) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    if tape.net_id != id(net) or tape.version != net.version:
        raise StateError("tape does not match the current network parameters")
    g = as_matrix(grad_out)
    grads = {}
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if layer.activation == "relu":
            g = g * (tape.pre[i] > 0)
        grads[f"{i}.W"] = tape.inputs[i].T @ g
        grads[f"{i}.b"] = g.sum(axis=0, keepdims=True)
        g = g @ layer.W.T
    return g, grads


# -- optimisation -------------------------------------------------------------


@dataclass
class SgdConfig:
    lr0: float = 0.01
    total_steps: int = 1
    momentum: float = 0.0

    def __post_init__(self):
        if not self.lr0 > 0:
            raise ValueError("lr0 must be positive")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")


def cosine_annealed_lr(step: int, cfg: SgdConfig) -> float:
    step = min(max(int(step), 0), cfg.total_steps)
    return cfg.lr0 * 0.5 * (1.0 + math.cos(math.pi * step / cfg.total_steps))


def sgd_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    step: int,
    cfg: SgdConfig,
    velocity: dict[str, np.ndarray] | None = None,
) -> dict[str, np.ndarray]:
    """Return updated copies of ``params``; ``velocity`` is updated in place."""
    if set(params) != set(grads):
        raise ValueError("params and grads have different keys")
    lr = cosine_annealed_lr(step, cfg)
    out = {}
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != np.shape(p):
            raise ValueError(f"gradient shape mismatch for {name}")
        if cfg.momentum > 0:
            if velocity is None:
                raise ValueError("momentum > 0 requires a velocity buffer")
            v = velocity.get(name)
            v = g.copy() if v is None else cfg.momentum * v + g
            velocity[name] = v
            g = v
        out[name] = p - lr * g
    return out


# -- gradient checking ----------------------------------------------------------


def relative_error(analytic, numeric, floor: float = 1e-6) -> np.ndarray:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def finite_difference(f: Callable[[], float], param: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central differences of scalar ``f`` w.r.t. every entry of ``param`` (mutated in place, restored)."""
    grad = np.zeros_like(param)
    it = np.nditer(param, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = param[idx]
        param[idx] = old + h
        fp = f()
        param[idx] = old - h
        fm = f()
        param[idx] = old
        grad[idx] = (fp - fm) / (2 * h)
    return grad


# -- checkpoints -------------------------------------------------------------------


def save_checkpoint(tensors: Mapping[str, np.ndarray]) -> bytes:
    """Serialize named matrices (vectors become 1 x n, scalars 1 x 1) as f32."""
    out = [CKPT_MAGIC, struct.pack("<I", len(tensors))]
    for name, value in tensors.items():
        m = np.asarray(value, dtype=np.float64)
        if m.ndim == 0:
            m = m.reshape(1, 1)
        elif m.ndim == 1:
            m = m.reshape(1, -1)
        elif m.ndim != 2:
            raise ValueError(f"{name}: only matrices can be checkpointed")
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack("<II", *m.shape))
        out.append(np.ascontiguousarray(m, dtype="<f4").tobytes())
    return b"".join(out)


def load_checkpoint(data: bytes) -> dict[str, np.ndarray]:
    if data[:4] != CKPT_MAGIC:
        raise ValueError("not an M2SW checkpoint")
    (count,) = struct.unpack_from("<I", data, 4)
    pos = 8
    out = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos : pos + n].decode("utf-8")
            pos += n
            rows, cols = struct.unpack_from("<II", data, pos)
            pos += 8
            size = rows * cols
            if pos + 4 * size > len(data):
                raise ValueError(f"truncated tensor {name}")
            arr = np.frombuffer(data, dtype="<f4", count=size, offset=pos)
            out[name] = arr.astype(np.float64).reshape(rows, cols)
            pos += 4 * size
    except struct.error as exc:
        raise ValueError(f"truncated checkpoint: {exc}") from None
    if pos != len(data):
        raise ValueError("trailing bytes after checkpoint")
    return out
