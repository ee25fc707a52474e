"""Evidential training objective.

All loss functions accept Dirichlet parameters as a (K,) or (B, K) tensor
(or array) and return one value per row: a scalar tensor for (K,) input,
a (B,) tensor otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .evidential import DirichletParams
from .tensor import Tensor


def _alpha(alpha, name: str, floor: float = 1.0) -> tuple[Tensor, bool]:
    if isinstance(alpha, DirichletParams):
        alpha = alpha.alpha
    alpha = T.as_tensor(alpha)
    single = alpha.ndim == 1
    if single:
        alpha = alpha.reshape(1, alpha.shape[0])
    if alpha.ndim != 2:
        raise T.ShapeError(f"{name}: alpha must be (K,) or (B, K), got {alpha.shape}")
    if np.any(alpha.data < floor - 1e-6):
        raise ValueError(f"{name}: Dirichlet parameters must be >= {floor}")
    return alpha, single


def _onehot(y, shape, name: str) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[None]
    if y.shape != shape:
        raise T.ShapeError(f"{name}: labels {y.shape} vs alpha {shape}")
    if not (np.all((y == 0) | (y == 1)) and np.all(y.sum(axis=1) == 1)):
        raise ValueError(f"{name}: labels must be one-hot")
    return y


def _finish(rows: Tensor, single: bool) -> Tensor:
    return rows.reshape(()) if single else rows


def ace_loss(alpha, y) -> Tensor:
    """psi(S) - psi(alpha_c) for the true class c."""
    alpha, single = _alpha(alpha, "ace_loss")
    y = _onehot(y, alpha.shape, "ace_loss")
    s = T.sum(alpha, axis=1)
    rows = T.digamma(s) - T.sum(T.Tensor(y) * T.digamma(alpha), axis=1)
    return _finish(rows, single)


def kl_uniform(alpha_tilde) -> Tensor:
    """KL( Dir(alpha_tilde) || Dir(1, ..., 1) ) in closed form."""
    a, single = _alpha(alpha_tilde, "kl_uniform")
    b, k = a.shape
    s = T.sum(a, axis=1)
    s_cols = T.expand(s.reshape(b, 1), (b, k))
    rows = (
        T.lgamma(s)
        - float(np.sum(np.log(np.arange(1, k))))  # lgamma(K)
        - T.sum(T.lgamma(a), axis=1)
        + T.sum((a - 1.0) * (T.digamma(a) - T.digamma(s_cols)), axis=1)
    )
    return _finish(rows, single)


def alpha_tilde(alpha, y) -> Tensor:
    """y + (1 - y) * alpha: the true-class parameter is reset to 1."""
    alpha, single = _alpha(alpha, "alpha_tilde")
    y = _onehot(y, alpha.shape, "alpha_tilde")
    out = alpha * T.Tensor(1.0 - y) + T.Tensor(y)
    return out.reshape(out.shape[1]) if single else out


def view_loss(alpha, y, lam: float, ace_on_alpha_tilde: bool = False) -> tuple[Tensor, Tensor, Tensor]:
    """Per-view loss; returns (total, ace, kl) with kl unweighted.

    Default: ace on alpha and KL on alpha_tilde. ``ace_on_alpha_tilde``
    swaps to the literal notation (ace on alpha_tilde, KL on alpha).
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    at = alpha_tilde(alpha, y)
    if ace_on_alpha_tilde:
        ace, kl = ace_loss(at, y), kl_uniform(alpha)
    else:
        ace, kl = ace_loss(alpha, y), kl_uniform(at)
    return ace + kl * float(lam), ace, kl


@dataclass
class LossBreakdown:
    total: Tensor  # scalar: batch mean of the summed per-view losses
    ace: dict  # view name -> float (batch mean)
    kl: dict
    lam: float

    def as_floats(self) -> dict:
        out = {"total": self.total.item(), "lambda": self.lam}
        for view in ("fused", "v1", "v2"):
            out[f"{view}_ace"] = self.ace[view]
            out[f"{view}_kl"] = self.kl[view]
        return out


def total_loss(alpha_fused, alpha_v1, alpha_v2, y, lam: float, ace_on_alpha_tilde: bool = False) -> LossBreakdown:
    """Sum of the three view losses (fused, low, high), averaged over rows."""
    shapes = {T.as_tensor(getattr(a, "alpha", a)).shape[-1] for a in (alpha_fused, alpha_v1, alpha_v2)}
    if len(shapes) != 1:
        raise T.ShapeError(f"total_loss: class counts differ {sorted(shapes)}")
    total = None
    ace, kl = {}, {}
    for name, alpha in (("fused", alpha_fused), ("v1", alpha_v1), ("v2", alpha_v2)):
        term, a, k = view_loss(alpha, y, lam, ace_on_alpha_tilde)
        ace[name] = float(np.mean(a.data, dtype=np.float64))
        kl[name] = float(np.mean(k.data, dtype=np.float64))
        total = term if total is None else total + term
    return LossBreakdown(T.mean(total), ace, kl, float(lam))


def lambda_schedule(epoch: int) -> float:
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    return min(1.0, epoch / 10)
