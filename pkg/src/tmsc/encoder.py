"""Small vision-transformer encoder returning the class-token feature and
the per-layer head-averaged attention matrices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Tensor

# pixels in [0, 1] are mapped to [-1, 1] before patch embedding
PIXEL_MEAN = 0.5
PIXEL_STD = 0.5


@dataclass(frozen=True)
class EncoderConfig:
    image_side: int = 24
    patch_size: int = 4
    channels: int = 1
    depth: int = 2
    heads: int = 2
    embed_dim: int = 32
    mlp_ratio: float = 2.0

    def __post_init__(self):
        for name in ("image_side", "patch_size", "channels", "depth", "heads", "embed_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"EncoderConfig.{name} must be positive")
        if self.image_side % self.patch_size:
            raise ValueError(
                f"image_side {self.image_side} not divisible by patch_size {self.patch_size}"
            )
        if self.embed_dim % self.heads:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if self.mlp_ratio <= 0:
            raise ValueError("mlp_ratio must be positive")

    @property
    def grid(self) -> int:
        return self.image_side // self.patch_size

    @property
    def num_tokens(self) -> int:
        return self.grid**2 + 1

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.channels

    @property
    def mlp_dim(self) -> int:
        return max(1, int(round(self.embed_dim * self.mlp_ratio)))


@dataclass
class AttentionStack:
    """One (T, T) head-averaged attention matrix per layer, input first.

    Batched forward passes store (B, T, T) per layer; ``sample(i)`` slices one.
    """

    layers: list = field(default_factory=list)

    def __len__(self):
        return len(self.layers)

    def sample(self, i: int) -> "AttentionStack":
        return AttentionStack([layer[i] for layer in self.layers])


@dataclass
class EncoderParams:
    config: EncoderConfig
    tensors: dict

    def parameters(self) -> list[Tensor]:
        return list(self.tensors.values())

    def named(self, prefix: str = ""):
        return [(prefix + k, v) for k, v in self.tensors.items()]

    def count(self) -> int:
        return int(np.sum([t.size for t in self.tensors.values()]))

    def __getitem__(self, key):
        return self.tensors[key]


def patchify(image: np.ndarray, patch_size: int) -> np.ndarray:
    """(H, W, C) image -> (num_patches, p*p*C) tokens, row-major over the grid."""
    image = np.asarray(image)
    if image.ndim == 2:
        image = image[:, :, None]
    h, w, c = image.shape
    if h % patch_size or w % patch_size:
        raise ValueError(f"image {h}x{w} not divisible by patch size {patch_size}")
    gh, gw = h // patch_size, w // patch_size
    tiles = image.reshape(gh, patch_size, gw, patch_size, c).transpose(0, 2, 1, 3, 4)
    return tiles.reshape(gh * gw, patch_size * patch_size * c)


def unpatchify(tokens: np.ndarray, patch_size: int, height: int, width: int, channels: int = 1) -> np.ndarray:
    gh, gw = height // patch_size, width // patch_size
    tiles = np.asarray(tokens).reshape(gh, gw, patch_size, patch_size, channels)
    return tiles.transpose(0, 2, 1, 3, 4).reshape(height, width, channels)


def _truncated_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    """Normal(0, std) truncated at two standard deviations (resampling)."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return out * std


def _layer_shapes(cfg: EncoderConfig) -> dict:
    d, m = cfg.embed_dim, cfg.mlp_dim
    return {
        "ln1.g": (d,), "ln1.b": (d,),
        "qkv.w": (d, 3 * d), "qkv.b": (3 * d,),
        "proj.w": (d, d), "proj.b": (d,),
        "ln2.g": (d,), "ln2.b": (d,),
        "fc1.w": (d, m), "fc1.b": (m,),
        "fc2.w": (m, d), "fc2.b": (d,),
    }


def init_params(config: EncoderConfig, seed: int) -> EncoderParams:
    """Truncated-normal weights scaled by 1/sqrt(fan_in); zero biases, unit norms."""
    rng = np.random.default_rng(seed)
    d = config.embed_dim
    shapes = {
        "patch.w": (config.patch_dim, d),
        "patch.b": (d,),
        "cls": (d,),
        "pos": (config.num_tokens, d),
    }
    for layer in range(config.depth):
        shapes.update({f"blocks.{layer}.{k}": v for k, v in _layer_shapes(config).items()})
    shapes.update({"norm.g": (d,), "norm.b": (d,)})

    tensors = {}
    for name, shape in shapes.items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "g":
            value = np.ones(shape)
        elif leaf == "b":
            value = np.zeros(shape)
        else:
            fan_in = shape[0] if len(shape) == 2 and name not in ("pos",) else d
            value = _truncated_normal(rng, shape, 1.0 / np.sqrt(fan_in))
        tensors[name] = T.parameter(value)
    return EncoderParams(config, tensors)


def block_size(config: EncoderConfig) -> int:
    return int(sum(np.prod(s) for s in _layer_shapes(config).values()))


def _attention(x: Tensor, p: dict, prefix: str, cfg: EncoderConfig, captured: list) -> Tensor:
    b, t, d = x.shape
    heads, dh = cfg.heads, d // cfg.heads
    qkv = T.linear(x.reshape(b * t, d), p[prefix + "qkv.w"], p[prefix + "qkv.b"])
    qkv = qkv.reshape(b, t, 3, heads, dh).transpose(2, 0, 3, 1, 4)
    q = qkv[0].reshape(b * heads, t, dh)
    k = qkv[1].reshape(b * heads, t, dh)
    v = qkv[2].reshape(b * heads, t, dh)
    scores = T.matmul(q, k.transpose(0, 2, 1)) * (1.0 / np.sqrt(dh))
    att = T.softmax(scores)
    captured.append(att.data.astype(np.float64).reshape(b, heads, t, t).mean(axis=1))
    out = T.matmul(att, v).reshape(b, heads, t, dh).transpose(0, 2, 1, 3).reshape(b * t, d)
    return T.linear(out, p[prefix + "proj.w"], p[prefix + "proj.b"]).reshape(b, t, d)


def encode_batch(images: np.ndarray, params: EncoderParams) -> tuple[Tensor, AttentionStack]:
    """(B, H, W[, C]) images -> (z: (B, d) tensor, attention stack of (B, T, T))."""
    cfg = params.config
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 3:
        images = images[..., None]
    expected = (cfg.image_side, cfg.image_side, cfg.channels)
    if images.ndim != 4 or images.shape[1:] != expected:
        raise T.ShapeError(f"encode: image shape {images.shape[1:]} vs expected {expected}")
    b, d, n = images.shape[0], cfg.embed_dim, cfg.grid**2
    p = params.tensors

    images = (images - PIXEL_MEAN) / PIXEL_STD
    tokens = np.stack([patchify(img, cfg.patch_size) for img in images])
    x = T.linear(T.Tensor(tokens.reshape(b * n, cfg.patch_dim)), p["patch.w"], p["patch.b"])
    cls = T.expand(p["cls"].reshape(1, 1, d), (b, 1, d))
    x = T.concat([cls, x.reshape(b, n, d)], axis=1)
    x = x + T.expand(p["pos"].reshape(1, n + 1, d), (b, n + 1, d))

    captured: list = []
    for layer in range(cfg.depth):
        pre = f"blocks.{layer}."
        x = x + _attention(T.layer_norm(x, p[pre + "ln1.g"], p[pre + "ln1.b"]), p, pre, cfg, captured)
        h = T.layer_norm(x, p[pre + "ln2.g"], p[pre + "ln2.b"]).reshape(b * (n + 1), d)
        h = T.linear(T.gelu(T.linear(h, p[pre + "fc1.w"], p[pre + "fc1.b"])), p[pre + "fc2.w"], p[pre + "fc2.b"])
        x = x + h.reshape(b, n + 1, d)
    x = T.layer_norm(x, p["norm.g"], p["norm.b"])
    return x[:, 0, :], AttentionStack(captured)


def encode(image: np.ndarray, params: EncoderParams, config: EncoderConfig | None = None):
    """Single image -> (z: (d,) tensor, AttentionStack of (T, T) matrices)."""
    if config is not None and config != params.config:
        raise ValueError("encode: config does not match params")
    z, attn = encode_batch(np.asarray(image)[None], params)
    return z.reshape(params.config.embed_dim), attn.sample(0)
