"""Binary checkpoint format.

Layout (all integers unsigned 32-bit little-endian)::

    b"TMSC" | version | tensor count
    per tensor: name length | UTF-8 name | rank | dims... | float32 LE payload

Configuration and meta values are stored as rank-0 tensors named
``meta.*``, ``lrn.cfg.*`` and ``hrn.cfg.*``.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from . import tensor as T
from .encoder import EncoderConfig, EncoderParams
from .evidential import EvidenceHeadParams
from .mil import MILParams
from .model import FUSION_MODES, SELECTION_MODES, ModelBundle

MAGIC = b"TMSC"
VERSION = 1

_ENCODER_FIELDS = ("image_side", "patch_size", "channels", "depth", "heads", "embed_dim", "mlp_ratio")
_META_INT = ("K", "n_h", "g", "patch_px", "seed")


class CheckpointError(ValueError):
    pass


def _records(model: ModelBundle) -> list[tuple[str, np.ndarray]]:
    recs = [(name, t.data) for name, t in model.named_parameters()]
    for prefix, enc in (("lrn", model.lrn), ("hrn", model.hrn)):
        for f in _ENCODER_FIELDS:
            recs.append((f"{prefix}.cfg.{f}", np.array(getattr(enc.config, f))))
    meta = model.meta
    for key in _META_INT:
        recs.append((f"meta.{key}", np.array(meta[key])))
    recs.append(("meta.fusion_mode", np.array(FUSION_MODES.index(meta["fusion_mode"]))))
    recs.append(("meta.selection_mode", np.array(SELECTION_MODES.index(meta["selection_mode"]))))
    recs.append(("meta.mask_coverage", np.array(meta["mask_coverage"])))
    return recs


def dumps(model: ModelBundle) -> bytes:
    recs = _records(model)
    parts = [MAGIC, struct.pack("<II", VERSION, len(recs))]
    for name, value in recs:
        raw = name.encode("utf-8")
        arr = np.asarray(value, dtype="<f4")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def save_checkpoint(model: ModelBundle, path) -> None:
    payload = dumps(model)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


class _Reader:
    def __init__(self, raw: bytes):
        self.raw, self.pos = raw, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.raw):
            raise CheckpointError(f"truncated checkpoint: expected {n} bytes of {what} at offset {self.pos}")
        out = self.raw[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def loads(raw: bytes) -> dict:
    r = _Reader(raw)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}: not a TMSC checkpoint")
    version = r.u32("version")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    tensors = {}
    for _ in range(r.u32("tensor count")):
        name = r.take(r.u32("name length"), "name").decode("utf-8")
        rank = r.u32("rank")
        dims = tuple(struct.unpack(f"<{rank}I", r.take(4 * rank, "dims")))
        count = int(np.prod(dims)) if rank else 1
        tensors[name] = np.frombuffer(r.take(4 * count, f"payload of {name}"), dtype="<f4").reshape(dims).copy()
    if r.pos != len(raw):
        raise CheckpointError(f"{len(raw) - r.pos} trailing bytes after the last tensor")
    return tensors


def _scalar(tensors: dict, key: str) -> float:
    if key not in tensors:
        raise CheckpointError(f"checkpoint is missing {key}")
    return float(tensors[key])


def _encoder(tensors: dict, prefix: str) -> EncoderParams:
    values = {f: _scalar(tensors, f"{prefix}.cfg.{f}") for f in _ENCODER_FIELDS}
    cfg = EncoderConfig(**{f: (v if f == "mlp_ratio" else int(v)) for f, v in values.items()})
    start = prefix + "."
    params = {
        name[len(start):]: T.parameter(arr)
        for name, arr in tensors.items()
        if name.startswith(start) and not name.startswith(start + "cfg.")
    }
    return EncoderParams(cfg, params)


def bundle_from_tensors(tensors: dict) -> ModelBundle:
    def grab(name):
        if name not in tensors:
            raise CheckpointError(f"checkpoint is missing {name}")
        return T.parameter(tensors[name])

    meta = {key: int(_scalar(tensors, f"meta.{key}")) for key in _META_INT}
    meta["fusion_mode"] = FUSION_MODES[int(_scalar(tensors, "meta.fusion_mode"))]
    meta["selection_mode"] = SELECTION_MODES[int(_scalar(tensors, "meta.selection_mode"))]
    meta["mask_coverage"] = _scalar(tensors, "meta.mask_coverage")
    return ModelBundle(
        lrn=_encoder(tensors, "lrn"),
        hrn=_encoder(tensors, "hrn"),
        mil=MILParams(grab("mil.V"), grab("mil.w")),
        head_low=EvidenceHeadParams(grab("head_low.weight"), grab("head_low.bias")),
        head_high=EvidenceHeadParams(grab("head_high.weight"), grab("head_high.bias")),
        meta=meta,
    )


def load_checkpoint(path) -> ModelBundle:
    with open(path, "rb") as fh:
        return bundle_from_tensors(loads(fh.read()))
