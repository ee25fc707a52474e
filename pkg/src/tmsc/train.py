"""Training loop and evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .loss import lambda_schedule, total_loss
from .metrics import MetricsReport, compute_metrics, confusion_matrix
from .model import ModelBundle, RunConfig, build_model, forward_batch, predict_batch
from .synth import generate_dataset, split_dataset

log = logging.getLogger(__name__)

LOG_COLUMNS = (
    "epoch", "lambda", "loss_total",
    "loss_fused_ace", "loss_fused_kl",
    "loss_v1_ace", "loss_v1_kl",
    "loss_v2_ace", "loss_v2_kl",
    "val_acc",
)

EVAL_CHUNK = 16


@dataclass
class EpochLog:
    epoch: int
    lam: float
    loss_total: float
    ace: dict
    kl: dict
    val_acc: float

    def row(self) -> list:
        return [
            self.epoch, self.lam, self.loss_total,
            self.ace["fused"], self.kl["fused"],
            self.ace["v1"], self.kl["v1"],
            self.ace["v2"], self.kl["v2"],
            self.val_acc,
        ]


def write_log(entries, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(LOG_COLUMNS) + "\n")
        for e in entries:
            fh.write("\t".join(str(v) if isinstance(v, int) else f"{v:.6f}" for v in e.row()) + "\n")


def one_hot(labels, k: int) -> np.ndarray:
    y = np.zeros((len(labels), k))
    y[np.arange(len(labels)), labels] = 1.0
    return y


def evaluate(model: ModelBundle, samples) -> tuple[MetricsReport, list[dict]]:
    """Fused-prediction metrics plus one record per sample."""
    samples = list(samples)
    if not samples:
        raise ValueError("evaluate: no samples")
    # fixed id order makes the result independent of the caller's ordering
    ordered = sorted(samples, key=lambda s: s.id)
    records = []
    for start in range(0, len(ordered), EVAL_CHUNK):
        chunk = ordered[start : start + EVAL_CHUNK]
        for s, p in zip(chunk, predict_batch(chunk, model)):
            records.append({
                "id": s.id,
                "label": s.label,
                "prediction": p.predicted_class,
                "fused_u": p.uncertainty,
                "low_u": p.low_opinion.u,
                "high_u": p.high_opinion.u,
            })
    cm = confusion_matrix([r["label"] for r in records], [r["prediction"] for r in records], model.meta["K"])
    return compute_metrics(cm), records


def train_on(config: RunConfig, train_set, val_set) -> tuple[ModelBundle, list[EpochLog]]:
    if not train_set:
        raise ValueError("train: empty training split")
    model = build_model(config)
    params = model.parameters()
    k = config.synth.K
    history: list[EpochLog] = []
    best_acc, best_snap = -1.0, model.snapshot()

    for epoch in range(config.epochs):
        lam = lambda_schedule(epoch)
        order = np.random.default_rng([config.seed, 7, epoch]).permutation(len(train_set))
        sums = {"total": 0.0, "ace": {}, "kl": {}}
        for start in range(0, len(order), config.batch_size):
            batch = [train_set[i] for i in order[start : start + config.batch_size]]
            out = forward_batch(batch, model, epoch)
            y = one_hot([s.label for s in batch], k)
            bd = total_loss(out.alpha_fused, out.alpha_low, out.alpha_high, y, lam, config.ace_on_alpha_tilde)
            bd.total.backward()
            T.sgd_step(params, config.lr)
            n = len(batch)
            sums["total"] += bd.total.item() * n
            for view in ("fused", "v1", "v2"):
                sums["ace"][view] = sums["ace"].get(view, 0.0) + bd.ace[view] * n
                sums["kl"][view] = sums["kl"].get(view, 0.0) + bd.kl[view] * n
        n_train = len(train_set)
        val_acc = evaluate(model, val_set)[0].acc if val_set else float("nan")
        entry = EpochLog(
            epoch, lam, sums["total"] / n_train,
            {v: x / n_train for v, x in sums["ace"].items()},
            {v: x / n_train for v, x in sums["kl"].items()},
            val_acc,
        )
        history.append(entry)
        log.info("epoch %d lambda %.2f loss %.4f val_acc %.4f", epoch, lam, entry.loss_total, val_acc)
        if not np.isfinite(entry.loss_total):
            raise FloatingPointError(f"training loss diverged at epoch {epoch}")
        if not val_set or val_acc >= best_acc:
            best_acc, best_snap = val_acc, model.snapshot()

    model.restore(best_snap)
    return model, history


def train(config: RunConfig, samples=None) -> tuple[ModelBundle, list[EpochLog], dict]:
    """Generate (or take) a dataset, split it and train.

    Returns the best-validation model, the epoch log and the splits.
    """
    if samples is None:
        samples = generate_dataset(config.synth)
    train_set, val_set, test_set = split_dataset(samples, config.seed)
    model, history = train_on(config, train_set, val_set)
    return model, history, {"train": train_set, "val": val_set, "test": test_set}
