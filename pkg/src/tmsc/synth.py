"""Deterministic synthetic two-scale dataset.

Each sample is a bright slide with one dark elliptical blob. The class is
written twice: weakly in the blob orientation (visible at low resolution)
and reliably as 2-pixel stripes inside a few blob cells. The stripes have
period 4, so the 4x block mean that produces the thumbnail erases them;
only the high-resolution branch can read them.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .pgm import read_pgm_float, write_pgm

BACKGROUND = 0.9
BLOB = 0.25
STRIPE_AMPLITUDE = 0.15
MAX_CLASSES = 4
SPLIT_NAMES = ("train", "val", "test")


@dataclass(frozen=True)
class SynthConfig:
    K: int = 2
    g: int = 6
    patch_px: int = 16
    low_patch_px: int = 4
    n_samples: int = 260
    texture_cell_count: int = 4
    noise_std: float = 0.03
    corrupt_high_prob: float = 0.0
    shape_agreement: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if not 2 <= self.K <= MAX_CLASSES:
            raise ValueError(f"K must be in 2..{MAX_CLASSES} (one stripe orientation per class)")
        if self.g <= 0 or self.patch_px <= 0 or self.low_patch_px <= 0 or self.n_samples <= 0:
            raise ValueError("grid, patch sizes and n_samples must be positive")
        if self.patch_px % self.low_patch_px or (self.patch_px // self.low_patch_px) % 4:
            raise ValueError("patch_px / low_patch_px must be a multiple of 4 so stripes vanish at low resolution")
        if not 1 <= self.texture_cell_count <= self.g * self.g:
            raise ValueError("texture_cell_count must be in 1..g^2")
        for name in ("noise_std",):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("corrupt_high_prob", "shape_agreement"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be a probability")

    @property
    def high_side(self) -> int:
        return self.g * self.patch_px

    @property
    def low_side(self) -> int:
        return self.g * self.low_patch_px

    @property
    def factor(self) -> int:
        return self.patch_px // self.low_patch_px


@dataclass
class Sample:
    id: str
    low_res: np.ndarray
    high_res: np.ndarray
    label: int
    K: int
    corrupted: bool = False
    texture_cells: tuple = field(default_factory=tuple)

    @property
    def one_hot(self) -> np.ndarray:
        y = np.zeros(self.K)
        y[self.label] = 1.0
        return y


def stencil(k: int, size: int) -> np.ndarray:
    """+-1 stripe pattern of orientation k (0 horizontal, 1 vertical, 2/3 diagonals)."""
    y, x = np.mgrid[0:size, 0:size]
    coord = (y, x, x + y, x - y)[k]
    return np.where((coord // 2) % 2 == 0, -1.0, 1.0)


def block_mean(image: np.ndarray, factor: int) -> np.ndarray:
    h, w = image.shape
    return image.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))


def _blob(cfg: SynthConfig, rng: np.random.Generator, shape_id: int) -> np.ndarray:
    side, cell = cfg.high_side, cfg.patch_px
    theta = math.pi * shape_id / cfg.K + rng.uniform(-0.15, 0.15)
    cy, cx = side / 2 + rng.uniform(-0.4, 0.4, size=2) * cell
    major, minor = 2.5 * cell * rng.uniform(0.92, 1.0), 1.6 * cell * rng.uniform(0.92, 1.0)
    y, x = np.mgrid[0:side, 0:side] + 0.5
    dy, dx = y - cy, x - cx
    along = dx * math.cos(theta) + dy * math.sin(theta)
    across = -dx * math.sin(theta) + dy * math.cos(theta)
    return (along / major) ** 2 + (across / minor) ** 2 <= 1.0


def _texture_cells(coverage: np.ndarray, count: int, rng: np.random.Generator) -> tuple:
    """Random foreground cells (blob covers at least half the cell).

    The first pick is drawn from fully covered cells so at least one cell
    carries the complete stencil.
    """
    full = np.flatnonzero(coverage >= 1.0)
    if full.size == 0:
        full = np.array([int(np.argmax(coverage))])
    first = int(rng.choice(full))
    rest = np.array([i for i in np.flatnonzero(coverage >= 0.5) if i != first], dtype=int)
    extra = rng.choice(rest, size=min(count - 1, rest.size), replace=False) if count > 1 else []
    return tuple(sorted([first] + [int(i) for i in extra]))


def make_sample(cfg: SynthConfig, index: int) -> Sample:
    rng = np.random.default_rng([cfg.seed, index])
    label = index % cfg.K
    if rng.random() < cfg.shape_agreement:
        shape_id = label
    else:
        shape_id = int(rng.choice([k for k in range(cfg.K) if k != label]))
    inside = _blob(cfg, rng, shape_id)
    image = np.where(inside, BLOB, BACKGROUND)

    g, cell = cfg.g, cfg.patch_px
    cells = _texture_cells(inside.reshape(g, cell, g, cell).mean(axis=(1, 3)).ravel(), cfg.texture_cell_count, rng)
    corrupted = bool(rng.random() < cfg.corrupt_high_prob)
    pattern = stencil(label, cell)
    for i in cells:
        r, c = divmod(i, g)
        window = (slice(r * cell, (r + 1) * cell), slice(c * cell, (c + 1) * cell))
        signs = rng.choice([-1.0, 1.0], size=(cell, cell)) if corrupted else pattern
        image[window] = np.where(inside[window], BLOB + STRIPE_AMPLITUDE * signs, image[window])

    if cfg.noise_std > 0:
        image = image + rng.normal(0.0, cfg.noise_std, size=image.shape)
    high = np.clip(image, 0.0, 1.0)
    return Sample(
        id=f"s{index:05d}",
        low_res=block_mean(high, cfg.factor),
        high_res=high,
        label=label,
        K=cfg.K,
        corrupted=corrupted,
        texture_cells=cells,
    )


def add_noise(sample: Sample, std: float, rng: np.random.Generator) -> Sample:
    """Copy of ``sample`` with Gaussian pixel noise on the high-resolution image
    (clipped to [0, 1]); the thumbnail is rebuilt from it."""
    high = np.clip(sample.high_res + rng.normal(0.0, std, size=sample.high_res.shape), 0.0, 1.0)
    factor = high.shape[0] // sample.low_res.shape[0]
    return Sample(sample.id, block_mean(high, factor), high, sample.label, sample.K,
                  sample.corrupted, sample.texture_cells)


def generate_dataset(config: SynthConfig) -> list[Sample]:
    return [make_sample(config, i) for i in range(config.n_samples)]


def _half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_dataset(samples, seed: int) -> tuple[list, list, list]:
    """Stratified 70/30 train+val/test split, then 80/20 train/val."""
    samples = list(samples)
    if len(samples) < 10:
        raise ValueError(f"need at least 10 samples to split, got {len(samples)}")
    by_class: dict = {}
    for s in samples:
        by_class.setdefault(s.label, []).append(s)
    train, val, test = [], [], []
    for label in sorted(by_class):
        group = by_class[label]
        if len(group) < 4:
            raise ValueError(f"class {label} has {len(group)} samples; at least 4 are needed to stratify")
        perm = np.random.default_rng([seed, label]).permutation(len(group))
        group = [group[i] for i in perm]
        n_test = _half_up(0.3 * len(group))
        rest = len(group) - n_test
        n_val = _half_up(0.2 * rest)
        test += group[:n_test]
        val += group[n_test : n_test + n_val]
        train += group[n_test + n_val :]
    key = lambda s: s.id  # noqa: E731
    return sorted(train, key=key), sorted(val, key=key), sorted(test, key=key)


# --- on-disk layout ---------------------------------------------------------


def save_dataset(samples, out_dir, seed: int, config: SynthConfig | None = None) -> None:
    """Write <id>_low.pgm / <id>_high.pgm pairs and index.tsv (id, label, split)."""
    os.makedirs(out_dir, exist_ok=True)
    train, val, test = split_dataset(samples, seed)
    split_of = {s.id: name for name, part in zip(SPLIT_NAMES, (train, val, test)) for s in part}
    for s in samples:
        write_pgm(os.path.join(out_dir, f"{s.id}_low.pgm"), s.low_res)
        write_pgm(os.path.join(out_dir, f"{s.id}_high.pgm"), s.high_res)
    with open(os.path.join(out_dir, "index.tsv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(["id", "label", "split"])
        for s in samples:
            writer.writerow([s.id, s.label, split_of[s.id]])
    if config is not None:
        with open(os.path.join(out_dir, "synth.tsv"), "w", encoding="utf-8") as fh:
            for k, v in asdict(config).items():
                fh.write(f"{k}\t{v}\n")
        with open(os.path.join(out_dir, "corrupted.tsv"), "w", encoding="utf-8") as fh:
            for s in samples:
                fh.write(f"{s.id}\t{int(s.corrupted)}\n")


def load_dataset(data_dir, split: str | None = None, K: int | None = None) -> list[Sample]:
    """Read samples back from disk (8-bit quantised), optionally one split only."""
    index = os.path.join(data_dir, "index.tsv")
    if not os.path.exists(index):
        raise FileNotFoundError(f"no index.tsv in {data_dir}")
    with open(index, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh, delimiter="\t"))
    if rows and set(rows[0]) != {"id", "label", "split"}:
        raise ValueError(f"index.tsv columns must be id, label, split; got {list(rows[0])}")
    if K is None:
        K = max(int(r["label"]) for r in rows) + 1 if rows else 0
    corrupted = set()
    flags = os.path.join(data_dir, "corrupted.tsv")
    if os.path.exists(flags):
        with open(flags, encoding="utf-8") as fh:
            corrupted = {line.split("\t")[0] for line in fh if line.rstrip().endswith("\t1")}
    samples = []
    for r in rows:
        if split is not None and r["split"] != split:
            continue
        samples.append(
            Sample(
                id=r["id"],
                low_res=read_pgm_float(os.path.join(data_dir, f"{r['id']}_low.pgm")),
                high_res=read_pgm_float(os.path.join(data_dir, f"{r['id']}_high.pgm")),
                label=int(r["label"]),
                K=K,
                corrupted=r["id"] in corrupted,
            )
        )
    return samples


def load_splits(data_dir, K: int | None = None) -> dict:
    index = os.path.join(data_dir, "index.tsv")
    all_samples = load_dataset(data_dir, K=K)
    with open(index, encoding="utf-8", newline="") as fh:
        split_of = {r["id"]: r["split"] for r in csv.DictReader(fh, delimiter="\t")}
    return {name: [s for s in all_samples if split_of[s.id] == name] for name in SPLIT_NAMES}
