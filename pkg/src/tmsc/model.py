"""Two-branch model: low-resolution encoder + rollout-guided patch bag +
high-resolution encoder with MIL pooling, one evidential head per scale,
and the fused opinion."""

from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import tensor as T
from .encoder import EncoderConfig, EncoderParams, encode_batch, init_params
from .evidential import (
    EvidenceHeadParams,
    Opinion,
    average_combine,
    average_combine_tensor,
    ds_combine,
    ds_combine_tensor,
    evidence_head,
    init_head,
    opinion_from_evidence,
)
from .mil import MILParams, init_mil, mil_pool_batch
from .rollout import RolloutMap, rollout_map
from .selection import PatchBag, extract_patches, nms_patch_select, random_select, topk_select
from .synth import Sample, SynthConfig

FUSION_MODES = ("tmsn", "avg")
SELECTION_MODES = ("nms", "topk", "random")


@dataclass(frozen=True)
class RunConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    embed_dim: int = 32
    depth: int = 2
    heads: int = 2
    patch_size: int = 4
    mlp_ratio: float = 2.0
    mil_hidden: int = 0  # 0 -> embed_dim // 2
    n_h: int = 4
    epochs: int = 30
    lr: float = 1e-3
    batch_size: int = 4
    seed: int = 0
    fusion_mode: str = "tmsn"
    selection_mode: str = "nms"
    ace_on_alpha_tilde: bool = False
    mask_coverage: float = 0.5

    def __post_init__(self):
        if self.fusion_mode not in FUSION_MODES:
            raise ValueError(f"fusion_mode must be one of {FUSION_MODES}, got {self.fusion_mode!r}")
        if self.selection_mode not in SELECTION_MODES:
            raise ValueError(f"selection_mode must be one of {SELECTION_MODES}, got {self.selection_mode!r}")
        if not 1 <= self.n_h <= self.synth.g**2:
            raise ValueError(f"n_h={self.n_h} must be in 1..g^2={self.synth.g ** 2}")
        if self.epochs < 0 or self.lr <= 0 or self.batch_size <= 0:
            raise ValueError("epochs must be >= 0; lr and batch_size must be positive")
        if self.synth.low_patch_px != self.patch_size:
            raise ValueError("synth.low_patch_px must equal the encoder patch_size (one token per grid cell)")
        if self.synth.patch_px % self.patch_size:
            raise ValueError("synth.patch_px must be divisible by patch_size")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        raw = dict(raw)
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        synth = raw.pop("synth", {}) or {}
        synth_known = {f.name for f in fields(SynthConfig)}
        if set(synth) - synth_known:
            raise ValueError(f"unknown synth keys: {sorted(set(synth) - synth_known)}")
        return cls(synth=SynthConfig(**synth), **raw)

    def encoder_configs(self) -> tuple[EncoderConfig, EncoderConfig]:
        common = dict(
            patch_size=self.patch_size, channels=1, depth=self.depth,
            heads=self.heads, embed_dim=self.embed_dim, mlp_ratio=self.mlp_ratio,
        )
        return (
            EncoderConfig(image_side=self.synth.low_side, **common),
            EncoderConfig(image_side=self.synth.patch_px, **common),
        )


@dataclass
class ModelBundle:
    lrn: EncoderParams
    hrn: EncoderParams
    mil: MILParams
    head_low: EvidenceHeadParams
    head_high: EvidenceHeadParams
    meta: dict  # K, n_h, g, patch_px, seed, fusion_mode, selection_mode, mask_coverage

    def named_parameters(self) -> list[tuple[str, T.Tensor]]:
        return (
            self.lrn.named("lrn.")
            + self.hrn.named("hrn.")
            + self.mil.named("mil.")
            + self.head_low.named("head_low.")
            + self.head_high.named("head_high.")
        )

    def parameters(self) -> list[T.Tensor]:
        return [t for _, t in self.named_parameters()]

    def snapshot(self) -> dict:
        return {name: t.data.copy() for name, t in self.named_parameters()}

    def restore(self, snap: dict) -> None:
        for name, t in self.named_parameters():
            t.data = snap[name].copy()
            t.grad = None


def build_model(config: RunConfig) -> ModelBundle:
    low_cfg, high_cfg = config.encoder_configs()
    s, k, d = config.seed, config.synth.K, config.embed_dim
    return ModelBundle(
        lrn=init_params(low_cfg, [s, 1]),
        hrn=init_params(high_cfg, [s, 2]),
        mil=init_mil(d, [s, 3], config.mil_hidden or None),
        head_low=init_head(k, d, [s, 4]),
        head_high=init_head(k, d, [s, 5]),
        meta={
            "K": k,
            "n_h": config.n_h,
            "g": config.synth.g,
            "patch_px": config.synth.patch_px,
            "seed": s,
            "fusion_mode": config.fusion_mode,
            "selection_mode": config.selection_mode,
            "mask_coverage": config.mask_coverage,
        },
    )


@dataclass
class Prediction:
    fused_opinion: Opinion
    low_opinion: Opinion
    high_opinion: Opinion
    predicted_class: int
    uncertainty: float
    rollout: RolloutMap
    bag: PatchBag


@dataclass
class BatchOutput:
    alpha_fused: T.Tensor
    alpha_low: T.Tensor
    alpha_high: T.Tensor
    evidence_low: T.Tensor
    evidence_high: T.Tensor
    rollouts: list
    bags: list


def sample_rng(seed: int, sample_id: str, epoch: int = -1) -> np.random.Generator:
    """Per-sample stream for random cropping; epoch -1 is used at inference."""
    return np.random.default_rng([seed, epoch + 1, zlib.crc32(sample_id.encode())])


def _select(rmap: RolloutMap, model: ModelBundle, rng) -> list:
    mode, n_h = model.meta["selection_mode"], model.meta["n_h"]
    if mode == "nms":
        return nms_patch_select(rmap, n_h)
    if mode == "topk":
        return topk_select(rmap, n_h)
    return random_select(rmap.grid.size, n_h, rng)


def forward_batch(samples, model: ModelBundle, epoch: int = -1, selections=None) -> BatchOutput:
    """Differentiable forward pass over a list of samples.

    Rollout and patch selection sit outside the gradient graph. Passing
    ``selections`` (one list of (index, attention) pairs per sample, e.g.
    taken from an earlier call's bags) replays them instead of recomputing,
    which keeps finite-difference probes on the same branch.
    """
    samples = list(samples)
    meta = model.meta
    g, n_h, px = meta["g"], meta["n_h"], meta["patch_px"]
    low_side = model.lrn.config.image_side
    for s in samples:
        if s.low_res.shape != (low_side, low_side) or s.high_res.shape != (g * px, g * px):
            raise T.ShapeError(
                f"sample {s.id}: low {s.low_res.shape} / high {s.high_res.shape} do not match the model"
            )
    b = len(samples)
    z1, attn = encode_batch(np.stack([s.low_res for s in samples]), model.lrn)

    rollouts, bags, tiles, weights = [], [], [], []
    for i, s in enumerate(samples):
        rmap = rollout_map(attn.sample(i), s.low_res, g, meta["mask_coverage"])
        if selections is None:
            picked = _select(rmap, model, sample_rng(meta["seed"], s.id, epoch))
        else:
            picked = [(int(m), float(a)) for m, a in selections[i]]
            if len(picked) != n_h:
                raise ValueError(f"sample {s.id}: replayed bag has {len(picked)} entries, expected {n_h}")
        idx = [m for m, _ in picked]
        patches = extract_patches(s.high_res, idx, g, px)
        rollouts.append(rmap)
        bags.append(PatchBag(idx, [a for _, a in picked], patches))
        tiles.extend(patches)
        weights.append([a for _, a in picked])

    h, _ = encode_batch(np.stack(tiles), model.hrn)
    d = h.shape[1]
    # Rollout mass is spread over Q = g^2 cells, so raw A_i sit near 1/Q and
    # would shrink every instance. Scaling by Q puts a uniform map at weight 1.
    scaled = np.array(weights, dtype=np.float64) * (g * g)
    z2, _ = mil_pool_batch(h.reshape(b, n_h, d), scaled, model.mil)

    e1 = evidence_head(z1, model.head_low)
    e2 = evidence_head(z2, model.head_high)
    fuse = ds_combine_tensor if meta["fusion_mode"] == "tmsn" else average_combine_tensor
    return BatchOutput(fuse(e1, e2), e1 + 1.0, e2 + 1.0, e1, e2, rollouts, bags)


def predictions_from_output(out: BatchOutput, model: ModelBundle) -> list[Prediction]:
    combine = ds_combine if model.meta["fusion_mode"] == "tmsn" else average_combine
    preds = []
    for i in range(len(out.bags)):
        _, low = opinion_from_evidence(out.evidence_low.data[i].astype(np.float64))
        _, high = opinion_from_evidence(out.evidence_high.data[i].astype(np.float64))
        fused = combine(low, high)
        preds.append(
            Prediction(
                fused_opinion=fused,
                low_opinion=low,
                high_opinion=high,
                predicted_class=int(np.argmax(fused.b)),
                uncertainty=float(fused.u),
                rollout=out.rollouts[i],
                bag=out.bags[i],
            )
        )
    return preds


def predict_batch(samples, model: ModelBundle) -> list[Prediction]:
    with T.no_grad():
        return predictions_from_output(forward_batch(samples, model), model)


def forward(sample: Sample, model: ModelBundle) -> Prediction:
    return predict_batch([sample], model)[0]
