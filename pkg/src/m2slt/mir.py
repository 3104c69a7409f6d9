"""Micro-sign retrieval over a shared, learnable memory pool."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .numkit import Mlp, as_matrix, cosine_similarity, mlp_backward, mlp_forward


@dataclass
class MemoryPool:
    memory: np.ndarray  # (n_slots, d_mem)
    enc: Mlp  # D -> d_mem
    dec: Mlp  # d_mem -> D
    alpha: np.ndarray = field(default_factory=lambda: np.zeros((1, 1)))
    k: int = 3

    def __post_init__(self):
        n_slots, d_mem = self.memory.shape
        if not 1 <= self.k <= n_slots:
            raise ValueError(f"k={self.k} must lie in [1, {n_slots}]")
        if self.enc.out_dim != d_mem or self.dec.in_dim != d_mem:
            raise ValueError("enc/dec projections do not match the memory width")
        self.alpha = np.asarray(self.alpha, dtype=np.float64).reshape(1, 1)

    @classmethod
    def create(cls, dim, rng, n_slots=128, d_mem=512, hidden=512, k=3) -> "MemoryPool":
        s = np.sqrt(6.0 / (n_slots + d_mem))
        memory = rng.uniform(-s, s, size=(n_slots, d_mem))
        enc = Mlp.create([dim, hidden, d_mem], rng)
        dec = Mlp.create([d_mem, hidden, dim], rng)
        return cls(memory, enc, dec, np.zeros((1, 1)), k)

    @property
    def dim(self) -> int:
        return self.enc.in_dim

    def params(self) -> dict[str, np.ndarray]:
        out = {"memory": self.memory, "alpha": self.alpha}
        out.update({f"enc.{k}": v for k, v in self.enc.params().items()})
        out.update({f"dec.{k}": v for k, v in self.dec.params().items()})
        return out


def mir_retrieve(features, pool: MemoryPool) -> tuple[np.ndarray, np.ndarray]:
    """Per-timestep mean of the k memory rows most cosine-similar to enc(F)."""
    f = as_matrix(features)
    if f.shape[1] != pool.dim:
        raise ValueError(f"features have {f.shape[1]} columns, pool expects {pool.dim}")
    z = pool.enc(f)
    idx = kernels.topk_rows(cosine_similarity(z, pool.memory), pool.k)
    return pool.memory[idx].mean(axis=1), idx


@dataclass
class EnhanceCache:
    idx: np.ndarray
    dec_tape: object
    dec_out: np.ndarray


def mir_enhance_forward(features, pool: MemoryPool):
    f = as_matrix(features)
    retrieved, idx = mir_retrieve(f, pool)
    dec_out, tape = mlp_forward(pool.dec, retrieved)
    return f + pool.alpha[0, 0] * dec_out, EnhanceCache(idx, tape, dec_out)


def mir_enhance(features, pool: MemoryPool) -> np.ndarray:
    return mir_enhance_forward(features, pool)[0]


def mir_enhance_backward(pool: MemoryPool, cache: EnhanceCache, grad_out, grads: dict):
    """Accumulate parameter grads into ``grads``; return grad w.r.t. the input.

    Top-k selection is piecewise constant, so the input gradient is the
    residual path only and enc receives nothing from this op.
    """
    g = as_matrix(grad_out)
    alpha = pool.alpha[0, 0]
    _acc(grads, "alpha", np.array([[np.sum(g * cache.dec_out)]]))
    g_ret, g_dec = mlp_backward(pool.dec, cache.dec_tape, alpha * g)
    for name, v in g_dec.items():
        _acc(grads, f"dec.{name}", v)
    g_mem = np.zeros_like(pool.memory)
    k = cache.idx.shape[1]
    for j in range(k):
        np.add.at(g_mem, cache.idx[:, j], g_ret / k)
    _acc(grads, "memory", g_mem)
    return g


def mir_fuse_forward(f_rgb_hat, f_evt_hat, pool: MemoryPool, recurrent: bool, iterations: int = 1):
    a, b = as_matrix(f_rgb_hat), as_matrix(f_evt_hat)
    if a.shape != b.shape:
        raise ValueError(f"mir_fuse shape mismatch: {a.shape} vs {b.shape}")
    out = a + b
    caches = []
    if recurrent:
        for _ in range(iterations):
            out, cache = mir_enhance_forward(out, pool)
            caches.append(cache)
    return out, caches


def mir_fuse(f_rgb_hat, f_evt_hat, pool: MemoryPool, recurrent: bool = False, iterations: int = 1):
    return mir_fuse_forward(f_rgb_hat, f_evt_hat, pool, recurrent, iterations)[0]


def mir_fuse_backward(pool: MemoryPool, caches, grad_out, grads: dict):
    g = as_matrix(grad_out)
    for cache in reversed(caches):
        g = mir_enhance_backward(pool, cache, g, grads)
    return g, g


def zero_grads(pool: MemoryPool) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in pool.params().items()}


def _acc(grads: dict, name: str, value: np.ndarray) -> None:
    if name in grads:
        grads[name] = grads[name] + value
    else:
        grads[name] = np.array(value, dtype=np.float64)
