"""Command-line surface: train, eval, infer, depth, params."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .checkpoint import Checkpoint, load_checkpoint
from .config import ModelConfig, TrainConfig, load_config
from .data import load_dataset
from .depth import ExternalDepthSource
from .metrics import MetricReport
from .model import build, param_count
from .train import evaluate, infer, precompute_depths, train

METRIC_COLUMNS = (("mDice", "mdice"), ("mIoU", "miou"), ("wFm", "wfm"),
                  ("Smeasure", "smeasure"), ("maxEmeasure", "emeasure_max"),
                  ("MAE", "mae"))


def _markdown_table(report: MetricReport) -> str:
    header = "| " + " | ".join(name for name, _ in METRIC_COLUMNS) + " |"
    rule = "|" + "|".join(["---"] * len(METRIC_COLUMNS)) + "|"
    row = "| " + " | ".join(f"{getattr(report, key):.4f}"
                            for _, key in METRIC_COLUMNS) + " |"
    return "\n".join([header, rule, row])


def _report_json(report: MetricReport, rows: list[dict]) -> dict:
    doc = {key: getattr(report, key) for _, key in METRIC_COLUMNS}
    doc["n_samples"] = report.n_samples
    doc["wfm_excluded"] = report.wfm_excluded
    doc["per_image"] = rows
    return doc


def _load_configs(args) -> tuple[ModelConfig, TrainConfig]:
    if args.config:
        model_cfg, train_cfg = load_config(args.config)
    else:
        model_cfg, train_cfg = ModelConfig(), TrainConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "no_dam", False):
        overrides["no_dam"] = True
    if getattr(args, "no_multiscale", False):
        overrides["no_multiscale"] = True
    if overrides:
        import dataclasses
        train_cfg = dataclasses.replace(train_cfg, **overrides)
        if "seed" in overrides:
            model_cfg = dataclasses.replace(model_cfg, seed=overrides["seed"])
    return model_cfg, train_cfg


def _cmd_train(args) -> int:
    model_cfg, train_cfg = _load_configs(args)
    samples = load_dataset(args.data, args.split)
    resume = load_checkpoint(args.resume) if args.resume else None
    ckpt, history = train(samples, train_cfg, model_cfg, out_path=args.out,
                          resume=resume, progress=print)
    print(f"trained {history['steps']} steps; "
          f"final epoch loss {history['epoch_loss'][-1]:.6f}; "
          f"checkpoint written to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    samples = load_dataset(args.data, args.split)
    report, rows = evaluate(ckpt.model(), samples, threshold=args.threshold)
    table = _markdown_table(report)
    print(table)
    if report.wfm_excluded:
        print(f"(wFm undefined for {report.wfm_excluded} empty-GT samples; "
              "excluded from its mean)")
    if args.report:
        path = Path(args.report)
        if path.suffix == ".json":
            path.write_text(json.dumps(_report_json(report, rows), indent=2))
        elif path.suffix == ".md":
            lines = [table, "", "| id | " +
                     " | ".join(n for n, _ in METRIC_COLUMNS) + " |",
                     "|---|" + "|".join(["---"] * len(METRIC_COLUMNS)) + "|"]
            for row in rows:
                cells = [f"{row[k]:.4f}" if row[k] is not None else "n/a"
                         for _, k in METRIC_COLUMNS]
                lines.append(f"| {row['id']} | " + " | ".join(cells) + " |")
            path.write_text("\n".join(lines) + "\n")
        else:
            raise SystemExit(f"--report must end in .json or .md: {path}")
        print(f"report written to {path}")
    return 0


def _cmd_infer(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    infer(ckpt.model(), args.image, args.out, depth_path=args.depth,
          use_zero_depth=args.zero_depth, threshold=args.threshold,
          binary_out=args.binary_out)
    print(f"mask written to {args.out}")
    return 0


def _cmd_depth(args) -> int:
    source = ExternalDepthSource(args.cmd, timeout=args.timeout)
    written = precompute_depths(args.data, source, progress=print)
    print(f"wrote {len(written)} depth maps ({source.launches} tool launches)")
    return 0


def _cmd_params(args) -> int:
    model_cfg, _ = _load_configs(args)
    closed = param_count(model_cfg)
    enumerated = build(model_cfg).num_params()
    print(f"closed-form parameter count: {closed}")
    print(f"enumerated parameter count:  {enumerated}")
    if closed != enumerated:
        print("MISMATCH between closed form and enumeration", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixseg",
        description="Depth-primed multi-scale mixer segmentation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on a dataset split")
    p.add_argument("--data", required=True, help="dataset root directory")
    p.add_argument("--split", required=True, help="file listing sample ids")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--no-dam", action="store_true", dest="no_dam",
                   help="zero out the depth input (ablation)")
    p.add_argument("--no-multiscale", action="store_true", dest="no_multiscale",
                   help="train at the base size only (ablation)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="checkpoint.ckpt")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--threshold", type=float, default=0.5,
                   help="binarization threshold for mDice/mIoU")
    p.add_argument("--report", help="write a .json or .md report here")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("infer", help="segment a single image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--depth", help="depth file for this image")
    group.add_argument("--stub-depth", action="store_true", dest="stub_depth",
                       help="use the luminance stub (default)")
    group.add_argument("--zero-depth", action="store_true", dest="zero_depth")
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--binary-out", dest="binary_out",
                   help="also write a mask binarized at --threshold")
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("depth", help="precompute depth maps with an external tool")
    p.add_argument("--cmd", required=True,
                   help="command template with {in} and {out} placeholders")
    p.add_argument("--data", required=True, help="dataset root directory")
    p.add_argument("--timeout", type=float, default=120.0)
    p.set_defaults(func=_cmd_depth)

    p = sub.add_parser("params", help="print closed-form and enumerated counts")
    p.add_argument("--config", help="key=value config file")
    p.set_defaults(func=_cmd_params)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
