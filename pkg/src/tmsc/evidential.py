"""Dirichlet opinions per view and their reduced Dempster-Shafer fusion.

Plain-value functions (``Opinion``, ``ds_combine``) work on numpy arrays;
the ``*_tensor`` functions express the same algebra with differentiable
tensor ops so the fused view can be trained.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .encoder import _truncated_normal
from .tensor import Tensor

CONFLICT_LIMIT = 1.0 - 1e-9


class TotalConflictError(ValueError):
    """The two opinions are (numerically) in total conflict."""


@dataclass(frozen=True)
class DirichletParams:
    alpha: np.ndarray

    @property
    def strength(self) -> float:
        return float(np.sum(self.alpha))

    @property
    def evidence(self) -> np.ndarray:
        return self.alpha - 1.0


@dataclass(frozen=True)
class Opinion:
    b: np.ndarray
    u: float

    @property
    def K(self) -> int:
        return len(self.b)

    def mass(self) -> float:
        return float(np.sum(self.b) + self.u)


@dataclass
class EvidenceHeadParams:
    weight: Tensor  # (K, d)
    bias: Tensor  # (K,)

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]

    def named(self, prefix: str):
        return [(prefix + "weight", self.weight), (prefix + "bias", self.bias)]


def init_head(k: int, d: int, seed: int) -> EvidenceHeadParams:
    rng = np.random.default_rng(seed)
    return EvidenceHeadParams(
        T.parameter(_truncated_normal(rng, (k, d), 1.0 / np.sqrt(d))),
        T.parameter(np.zeros(k)),
    )


def evidence_head(z: Tensor, params: EvidenceHeadParams) -> Tensor:
    """softplus(z W^T + b); z is (d,) or (B, d)."""
    z = T.as_tensor(z)
    single = z.ndim == 1
    if single:
        z = z.reshape(1, z.shape[0])
    if z.shape[1] != params.weight.shape[1]:
        raise T.ShapeError(f"evidence_head: feature {z.shape} vs weight {params.weight.shape}")
    e = T.softplus(T.linear(z, T.transpose(params.weight), params.bias))
    return e.reshape(e.shape[1]) if single else e


def opinion_from_evidence(e) -> tuple[DirichletParams, Opinion]:
    e = np.asarray(e, dtype=np.float64)
    if np.any(e < 0) or not np.all(np.isfinite(e)):
        raise ValueError("evidence must be finite and non-negative")
    alpha = e + 1.0
    s = alpha.sum()
    return DirichletParams(alpha), Opinion(e / s, len(e) / s)


def alpha_from_opinion(op: Opinion) -> DirichletParams:
    if not op.u > 0:
        raise ValueError("opinion with zero uncertainty has infinite Dirichlet strength")
    s = op.K / op.u
    return DirichletParams(np.asarray(op.b, dtype=np.float64) * s + 1.0)


def conflict(m1: Opinion, m2: Opinion) -> float:
    """Sum over i != j of b1_i * b2_j."""
    b1, b2 = np.asarray(m1.b, np.float64), np.asarray(m2.b, np.float64)
    return float(b1.sum() * b2.sum() - np.dot(b1, b2))


def ds_combine(m1: Opinion, m2: Opinion) -> Opinion:
    if m1.K != m2.K:
        raise ValueError(f"cannot fuse opinions over {m1.K} and {m2.K} classes")
    b1, b2 = np.asarray(m1.b, np.float64), np.asarray(m2.b, np.float64)
    c = float(b1.sum() * b2.sum() - b1 @ b2)
    if c >= CONFLICT_LIMIT:
        raise TotalConflictError(f"total conflict between opinions (C={c:.12g})")
    scale = 1.0 / (1.0 - c)
    return Opinion(scale * (b1 * b2 + b1 * m2.u + b2 * m1.u), scale * m1.u * m2.u)


def average_combine(m1: Opinion, m2: Opinion) -> Opinion:
    """Decision-level averaging baseline: mean of (b, u), renormalised."""
    b = 0.5 * (np.asarray(m1.b) + np.asarray(m2.b))
    u = 0.5 * (m1.u + m2.u)
    total = b.sum() + u
    return Opinion(b / total, u / total)


# --- differentiable forms, batched over rows ----------------------------------


def _row(t: Tensor, shape) -> Tensor:
    return T.expand(t, shape)


def belief_tensor(e: Tensor) -> tuple[Tensor, Tensor]:
    """(B, K) evidence -> beliefs (B, K) and uncertainty (B, 1)."""
    _, k = e.shape
    s = T.sum(e, axis=1, keepdims=True) + float(k)
    return e / _row(s, e.shape), float(k) / s


def alpha_from_belief_tensor(b: Tensor, u: Tensor) -> Tensor:
    k = b.shape[1]
    return b * _row(float(k) / u, b.shape) + 1.0


def ds_combine_tensor(e1: Tensor, e2: Tensor) -> Tensor:
    """Fused Dirichlet parameters (B, K) of the two evidence views."""
    if e1.shape != e2.shape:
        raise T.ShapeError(f"ds_combine: evidence shapes {e1.shape} vs {e2.shape}")
    b1, u1 = belief_tensor(e1)
    b2, u2 = belief_tensor(e2)
    c = T.sum(b1, 1, True) * T.sum(b2, 1, True) - T.sum(b1 * b2, 1, True)
    if np.any(c.data >= CONFLICT_LIMIT):
        raise TotalConflictError("total conflict between opinions")
    keep = 1.0 - c
    b = (b1 * b2 + b1 * _row(u2, b1.shape) + b2 * _row(u1, b1.shape)) / _row(keep, b1.shape)
    u = u1 * u2 / keep
    return alpha_from_belief_tensor(b, u)


def average_combine_tensor(e1: Tensor, e2: Tensor) -> Tensor:
    b1, u1 = belief_tensor(e1)
    b2, u2 = belief_tensor(e2)
    b, u = (b1 + b2) * 0.5, (u1 + u2) * 0.5
    total = T.sum(b, 1, True) + u
    return alpha_from_belief_tensor(b / _row(total, b.shape), u / total)


def opinions_from_alpha(alpha: np.ndarray) -> list[Opinion]:
    """(B, K) Dirichlet parameters -> one Opinion per row."""
    alpha = np.atleast_2d(np.asarray(alpha, dtype=np.float64))
    return [opinion_from_evidence(np.maximum(row - 1.0, 0.0))[1] for row in alpha]
