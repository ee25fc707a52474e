"""Rollout heatmaps as 8-bit PGM images."""

from __future__ import annotations

import numpy as np

from .pgm import write_pgm


def heatmap_pixels(grid, cell_px: int = 1, selected=(), border: int = 1) -> np.ndarray:
    """Min-max normalise to 0..255 (constant grid -> zeros), upscale each
    cell to ``cell_px`` pixels and draw a 255-valued border around every
    selected cell index."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2 or grid.size == 0:
        raise ValueError(f"heatmap needs a non-empty 2-D grid, got shape {grid.shape}")
    lo, hi = grid.min(), grid.max()
    if hi > lo:
        scaled = np.rint((grid - lo) / (hi - lo) * 255.0)
    else:
        scaled = np.zeros_like(grid)
    pixels = np.kron(scaled, np.ones((cell_px, cell_px))).astype(np.uint8)
    selected = list(selected)
    if selected and cell_px < 2 * border + 1:
        raise ValueError(f"cell_px={cell_px} too small to draw a {border}px border")
    cols = grid.shape[1]
    for idx in selected:
        r, c = divmod(int(idx), cols)
        y0, x0 = r * cell_px, c * cell_px
        tile = pixels[y0 : y0 + cell_px, x0 : x0 + cell_px]
        tile[:border, :] = 255
        tile[-border:, :] = 255
        tile[:, :border] = 255
        tile[:, -border:] = 255
    return pixels


def write_heatmap(grid, path, selected=(), cell_px: int | None = None) -> None:
    if cell_px is None:
        cell_px = 8 if len(selected) else 1
    write_pgm(path, heatmap_pixels(grid, cell_px, selected))
