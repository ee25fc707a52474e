"""Attention rollout over the low-resolution encoder and Otsu foreground masking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import AttentionStack


@dataclass
class RolloutMap:
    grid: np.ndarray  # (g, g) float64, >= 0
    foreground: np.ndarray  # (g, g) bool

    @property
    def side(self) -> int:
        return self.grid.shape[0]


def renormalize_layer(w_att: np.ndarray) -> np.ndarray:
    """A = 0.5 (W + I): the identity term accounts for the residual path."""
    w = np.asarray(w_att, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"renormalize_layer: expected a square matrix, got {w.shape}")
    return 0.5 * (w + np.eye(w.shape[0]))


def rollout_steps(attn) -> list[np.ndarray]:
    """All intermediates A~(0..L-1) with A~(0) = A(0), A~(l) = A(l) A~(l-1)."""
    layers = attn.layers if isinstance(attn, AttentionStack) else list(attn)
    if not layers:
        raise ValueError("compute_rollout: empty attention stack")
    shape = np.shape(layers[0])
    steps = []
    for layer in layers:
        if np.shape(layer) != shape:
            raise ValueError(f"compute_rollout: layer shape {np.shape(layer)} vs {shape}")
        a = renormalize_layer(layer)
        steps.append(a if not steps else a @ steps[-1])
    return steps


def compute_rollout(attn) -> np.ndarray:
    return rollout_steps(attn)[-1]


def extract_cls_grid(rollout: np.ndarray, g: int) -> np.ndarray:
    """Class-token row without its own column, reshaped row-major to (g, g)."""
    rollout = np.asarray(rollout, dtype=np.float64)
    if rollout.shape != (g * g + 1, g * g + 1):
        raise ValueError(f"extract_cls_grid: rollout {rollout.shape} does not fit grid {g}x{g} + cls")
    return rollout[0, 1:].reshape(g, g).copy()


def _quantize(gray: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(gray, dtype=np.float64) * 255.0), 0, 255).astype(np.int64)


def otsu_level(gray: np.ndarray) -> int:
    """8-bit level k maximising between-class variance of {<= k} vs {> k}.

    Scores are compared exactly as rationals so ties resolve to the smallest k.
    A constant image returns its own level (everything falls in class 0).
    """
    levels = _quantize(gray).ravel()
    hist = np.bincount(levels, minlength=256).tolist()
    n = len(levels)
    total = int(np.dot(np.arange(256), hist))
    if sum(1 for h in hist if h) < 2:
        return int(levels[0]) if n else 0
    best_k, best_num, best_den = 0, -1, 1
    n0 = s0 = 0
    for k in range(255):
        n0 += hist[k]
        s0 += k * hist[k]
        n1 = n - n0
        if n0 == 0 or n1 == 0:
            continue
        # sigma_B^2 = (n*s0 - n0*S)^2 / (n^2 * n0 * n1); the n^2 factor is common.
        num = (n * s0 - n0 * total) ** 2
        den = n0 * n1
        if num * best_den > best_num * den:
            best_k, best_num, best_den = k, num, den
    return best_k


def otsu_threshold(gray: np.ndarray) -> float:
    """Threshold t = k / 255; a pixel is class 0 (foreground) iff round(255 v) / 255 <= t."""
    return otsu_level(gray) / 255.0


def foreground_mask(gray: np.ndarray, g: int, coverage: float = 0.5) -> np.ndarray:
    """Dark-is-tissue mask on a (g, g) grid: a cell is foreground when at
    least ``coverage`` of its pixels are at or below the Otsu threshold."""
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim == 3:
        gray = gray.mean(axis=2)
    h, w = gray.shape
    if h % g or w % g:
        raise ValueError(f"foreground_mask: image {h}x{w} not divisible by grid {g}")
    dark = _quantize(gray) <= otsu_level(gray)
    frac = dark.reshape(g, h // g, g, w // g).mean(axis=(1, 3))
    return frac >= coverage


def apply_mask(grid: np.ndarray, mask: np.ndarray) -> RolloutMap:
    grid = np.asarray(grid, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if grid.shape != mask.shape:
        raise ValueError(f"apply_mask: grid {grid.shape} vs mask {mask.shape}")
    return RolloutMap(np.where(mask, grid, 0.0), mask.copy())


def rollout_map(attn, low_res: np.ndarray, g: int, coverage: float = 0.5) -> RolloutMap:
    """Rollout -> class-token grid -> Otsu-masked RolloutMap."""
    grid = extract_cls_grid(compute_rollout(attn), g)
    return apply_mask(grid, foreground_mask(low_res, g, coverage))
