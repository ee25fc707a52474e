"""Non-maximum-suppression patch selection on the rollout grid, plus the
baseline selectors used in ablations, and high-resolution tile extraction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rollout import RolloutMap


@dataclass
class PatchBag:
    indices: list = field(default_factory=list)
    attention: list = field(default_factory=list)
    patches: list = field(default_factory=list)

    def __len__(self):
        return len(self.indices)


def _as_grid(grid) -> np.ndarray:
    grid = grid.grid if isinstance(grid, RolloutMap) else grid
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise ValueError(f"expected a 2-D grid, got shape {grid.shape}")
    return grid


def _check_count(n_h: int, q: int) -> None:
    if n_h <= 0:
        raise ValueError(f"N_h must be positive, got {n_h}")
    if n_h > q:
        raise ValueError(f"N_h={n_h} exceeds the number of grid cells Q={q}")


def nms_patch_select(grid, n_h: int) -> list[tuple[int, float]]:
    """Pick ``n_h`` cells: argmax, record, zero it and its 4-neighbours, repeat.

    Ties go to the smallest row-major index. Once the working grid holds no
    unselected positive cell, the smallest unselected indices fill the bag.
    """
    values = _as_grid(grid)
    rows, cols = values.shape
    _check_count(n_h, values.size)
    work = values.copy().ravel()
    taken = np.zeros(values.size, dtype=bool)
    out = []
    for _ in range(n_h):
        candidates = np.where(taken, -np.inf, work)
        m = int(np.argmax(candidates))  # first maximum == smallest index
        out.append((m, float(values.flat[m])))
        taken[m] = True
        r, c = divmod(m, cols)
        work[m] = 0.0
        for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= rr < rows and 0 <= cc < cols:
                work[rr * cols + cc] = 0.0
    return out


def topk_select(grid, n_h: int) -> list[tuple[int, float]]:
    """Highest-attention cells without suppression (stable on ties)."""
    values = _as_grid(grid)
    _check_count(n_h, values.size)
    order = np.argsort(-values.ravel(), kind="stable")[:n_h]
    return [(int(i), float(values.flat[i])) for i in order]


def random_select(q: int, n_h: int, rng: np.random.Generator) -> list[tuple[int, float]]:
    """Random cropping baseline: distinct cells with uniform weight 1/Q."""
    _check_count(n_h, q)
    picks = rng.choice(q, size=n_h, replace=False)
    return [(int(i), 1.0 / q) for i in picks]


def extract_patches(high_res: np.ndarray, indices, g: int, patch_px: int) -> list[np.ndarray]:
    """Crop the high-resolution tile under each grid index (row-major)."""
    high_res = np.asarray(high_res)
    side = g * patch_px
    if high_res.shape[:2] != (side, side):
        raise ValueError(f"high-res image {high_res.shape[:2]} does not match grid {g} x {patch_px}px")
    indices = [int(i) for i in indices]
    if len(set(indices)) != len(indices):
        raise ValueError(f"duplicate patch indices {indices}")
    tiles = []
    for i in indices:
        if not 0 <= i < g * g:
            raise IndexError(f"patch index {i} outside 0..{g * g - 1}")
        r, c = divmod(i, g)
        tiles.append(high_res[r * patch_px : (r + 1) * patch_px, c * patch_px : (c + 1) * patch_px].copy())
    return tiles


def select_bag(high_res, rmap: RolloutMap, n_h: int, patch_px: int) -> PatchBag:
    picked = nms_patch_select(rmap, n_h)
    idx = [i for i, _ in picked]
    return PatchBag(idx, [a for _, a in picked], extract_patches(high_res, idx, rmap.side, patch_px))
