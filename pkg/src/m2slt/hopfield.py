"""Modern-Hopfield lookup over frozen macro-sign prototypes."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numkit import Mlp, as_matrix, mlp_backward, mlp_forward, softmax_rows, softmax_rows_backward
from .prototype import PrototypeSet


class RetrievalError(ValueError):
    pass


@dataclass
class MarParams:
    enc: Mlp  # D -> D_enc
    dec: Mlp  # D_enc -> D
    beta: np.ndarray = field(default_factory=lambda: np.zeros((1, 1)))
    beta_h: float = 8.0
    iterations: int = 1

    def __post_init__(self):
        if not self.beta_h > 0:
            raise ValueError("beta_h must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        self.beta = np.asarray(self.beta, dtype=np.float64).reshape(1, 1)

    @classmethod
    def create(cls, dim, enc_dim, rng, hidden=512, beta_h=8.0, iterations=1) -> "MarParams":
        enc = Mlp.create([dim, hidden, enc_dim], rng)
        dec = Mlp.create([enc_dim, hidden, dim], rng)
        return cls(enc, dec, np.zeros((1, 1)), beta_h, iterations)

    def params(self) -> dict[str, np.ndarray]:
        out = {"beta": self.beta}
        out.update({f"enc.{k}": v for k, v in self.enc.params().items()})
        out.update({f"dec.{k}": v for k, v in self.dec.params().items()})
        return out


def _patterns(prototypes) -> np.ndarray:
    x = prototypes.prototypes if isinstance(prototypes, PrototypeSet) else prototypes
    x = as_matrix(x)
    if x.shape[0] == 0:
        raise RetrievalError("cannot retrieve from an empty prototype set")
    return x


def hopfield_forward(queries, prototypes, beta_h: float = 8.0, iterations: int = 1):
    """Apply ``xi <- X^T softmax(beta_h X xi)`` to every query row.

    Returns the output and the list of attention matrices (one per update).
    """
    x = _patterns(prototypes)
    q = as_matrix(queries)
    if q.shape[1] != x.shape[1]:
        raise ValueError(f"query dim {q.shape[1]} != prototype dim {x.shape[1]}")
    attn = []
    for _ in range(iterations):
        a = softmax_rows(beta_h * (q @ x.T))
        attn.append((q, a))
        q = a @ x
    return q, attn


def hopfield_retrieve(queries, prototypes, beta_h: float = 8.0, iterations: int = 1) -> np.ndarray:
    return hopfield_forward(queries, prototypes, beta_h, iterations)[0]


def hopfield_backward(prototypes, attn, grad_out, beta_h: float) -> np.ndarray:
    """Gradient w.r.t. the queries; prototypes are constants."""
    x = _patterns(prototypes)
    g = as_matrix(grad_out)
    for _q, a in reversed(attn):
        g_a = g @ x.T
        g_s = softmax_rows_backward(a, g_a)
        g = beta_h * (g_s @ x)
    return g


@dataclass
class MarCache:
    enc_tape: object
    attn: list
    dec_tape: object
    dec_out: np.ndarray


def mar_enhance_forward(features, prototypes, params: MarParams):
    f = as_matrix(features)
    if f.shape[1] != params.enc.in_dim:
        raise ValueError(f"features have {f.shape[1]} columns, MaR expects {params.enc.in_dim}")
    z, enc_tape = mlp_forward(params.enc, f)
    r, attn = hopfield_forward(z, prototypes, params.beta_h, params.iterations)
    d, dec_tape = mlp_forward(params.dec, r)
    return f + params.beta[0, 0] * d, MarCache(enc_tape, attn, dec_tape, d)


def mar_enhance(features, prototypes, params: MarParams) -> np.ndarray:
    return mar_enhance_forward(features, prototypes, params)[0]


def mar_enhance_backward(prototypes, params: MarParams, cache: MarCache, grad_out, grads: dict):
    g = as_matrix(grad_out)
    _acc(grads, "beta", np.array([[np.sum(g * cache.dec_out)]]))
    g_r, g_dec = mlp_backward(params.dec, cache.dec_tape, params.beta[0, 0] * g)
    for k, v in g_dec.items():
        _acc(grads, f"dec.{k}", v)
    g_z = hopfield_backward(prototypes, cache.attn, g_r, params.beta_h)
    g_f, g_enc = mlp_backward(params.enc, cache.enc_tape, g_z)
    for k, v in g_enc.items():
        _acc(grads, f"enc.{k}", v)
    return g + g_f


def _acc(grads: dict, name: str, value: np.ndarray) -> None:
    grads[name] = grads[name] + value if name in grads else np.array(value, dtype=np.float64)
