"""Command-line entry point: synth, train, eval, infer, rollout."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .heatmap import write_heatmap
from .model import RunConfig, forward
from .pgm import read_pgm_float
from .synth import Sample, generate_dataset, load_dataset, load_splits, save_dataset
from .train import evaluate, train_on, write_log
from .synth import split_dataset


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"malformed config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ValueError(f"config {path} must hold a JSON object")
    return RunConfig.from_dict(raw)


def _sample_from_files(low_path, high_path, model) -> Sample:
    return Sample("input", read_pgm_float(low_path), read_pgm_float(high_path), 0, model.meta["K"])


def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    save_dataset(generate_dataset(cfg.synth), args.out, cfg.seed, cfg.synth)
    print(f"wrote {cfg.synth.n_samples} samples to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.data:
        splits = load_splits(args.data, cfg.synth.K)
        train_set, val_set = splits["train"], splits["val"]
    else:
        train_set, val_set, _ = split_dataset(generate_dataset(cfg.synth), cfg.seed)
    model, history = train_on(cfg, train_set, val_set)
    save_checkpoint(model, args.out)
    if args.log:
        write_log(history, args.log)
    best = max((e.val_acc for e in history), default=float("nan"))
    print(f"trained {len(history)} epochs, best val_acc {best:.4f}; checkpoint {args.out}")
    return 0


def cmd_eval(args) -> int:
    model = load_checkpoint(args.ckpt)
    samples = load_dataset(args.data, split=args.split, K=model.meta["K"])
    if not samples:
        raise ValueError(f"no samples in split {args.split!r} of {args.data}")
    report, _ = evaluate(model, samples)
    print(report.line())
    print(report.block())
    return 0


def cmd_infer(args) -> int:
    model = load_checkpoint(args.ckpt)
    pred = forward(_sample_from_files(args.low, args.high, model), model)
    print(f"class\t{pred.predicted_class}")
    print("beliefs\t" + "\t".join(f"{b:.6f}" for b in pred.fused_opinion.b))
    print(f"u_fused\t{pred.fused_opinion.u:.6f}")
    print(f"u_low\t{pred.low_opinion.u:.6f}")
    print(f"u_high\t{pred.high_opinion.u:.6f}")
    return 0


def cmd_rollout(args) -> int:
    model = load_checkpoint(args.ckpt)
    pred = forward(_sample_from_files(args.low, args.high, model), model)
    write_heatmap(pred.rollout.grid, args.out, selected=pred.bag.indices, cell_px=args.cell_px)
    print(f"selected cells {pred.bag.indices}; heatmap {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tmsc", description="Trusted multi-scale classification on synthetic slides.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train and write a checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--data", help="dataset directory written by `synth` (default: generate in memory)")
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="per-epoch TSV log")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="print metrics for one split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.set_defaults(func=cmd_eval)

    for name, func, helptext in (("infer", cmd_infer, "classify one image pair"),
                                 ("rollout", cmd_rollout, "write the masked rollout heatmap")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--ckpt", required=True)
        p.add_argument("--low", required=True)
        p.add_argument("--high", required=True)
        if name == "rollout":
            p.add_argument("--out", required=True)
            p.add_argument("--cell-px", type=int, default=8)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # one-line diagnostics for every failure
        print(f"tmsc {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
