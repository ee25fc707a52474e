"""Attention-based multiple-instance pooling of the high-resolution bag."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .encoder import _truncated_normal
from .tensor import Tensor


@dataclass
class MILParams:
    V: Tensor  # (hidden, d)
    w: Tensor  # (hidden,)

    @property
    def hidden(self) -> int:
        return self.V.shape[0]

    def parameters(self) -> list[Tensor]:
        return [self.V, self.w]

    def named(self, prefix: str = "mil."):
        return [(prefix + "V", self.V), (prefix + "w", self.w)]


def init_mil(d: int, seed: int, hidden: int | None = None) -> MILParams:
    hidden = hidden or max(1, d // 2)
    rng = np.random.default_rng(seed)
    V = _truncated_normal(rng, (hidden, d), 1.0 / np.sqrt(d))
    w = _truncated_normal(rng, (hidden,), 1.0 / np.sqrt(hidden))
    return MILParams(T.parameter(V), T.parameter(w))


def mil_pool_batch(h: Tensor, weights: np.ndarray, params: MILParams) -> tuple[Tensor, Tensor]:
    """h: (B, N, d) instance features, weights: (B, N) attention values.

    Each instance is scaled by its attention value once; that scaled
    instance feeds both the gating network and the weighted sum.
    Returns (z: (B, d), a: (B, N)).
    """
    b, n, d = h.shape
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (b, n):
        raise T.ShapeError(f"mil_pool: weights {weights.shape} vs bag {(b, n)}")
    if params.V.shape[1] != d:
        raise T.ShapeError(f"mil_pool: V {params.V.shape} vs feature width {d}")
    scaled = h * T.Tensor(np.broadcast_to(weights[:, :, None], (b, n, d)))
    gate = T.tanh(T.matmul(scaled.reshape(b * n, d), T.transpose(params.V)))
    logits = T.matmul(gate, params.w.reshape(params.hidden, 1)).reshape(b, n)
    a = T.softmax(logits)
    z = T.matmul(a.reshape(b, 1, n), scaled).reshape(b, d)
    return z, a


def mil_attention_pool(bag, params: MILParams) -> tuple[Tensor, Tensor]:
    """Pool a list of (h_i, A_i) pairs; h_i are (d,) tensors or arrays."""
    bag = list(bag)
    if not bag:
        raise ValueError("mil_attention_pool: empty bag")
    feats = [T.as_tensor(h).reshape(1, -1) for h, _ in bag]
    widths = {f.shape[-1] for f in feats}
    if len(widths) != 1:
        raise T.ShapeError(f"mil_attention_pool: instance widths differ {sorted(widths)}")
    h = T.concat(feats, axis=0)
    n, d = h.shape
    z, a = mil_pool_batch(h.reshape(1, n, d), np.array([[float(w) for _, w in bag]]), params)
    return z.reshape(d), a.reshape(n)
