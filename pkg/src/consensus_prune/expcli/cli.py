"""``consensus-prune`` command line.

Exit codes: 0 success, 2 usage or input error (bad config, missing dataset
or checkpoint, corrupt state), 3 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import torch

from ..accounting import cost_report
from ..errors import (
    ConfigError,
    CorruptCheckpoint,
    DatasetError,
    IneligibleLayer,
    ReportError,
    ReportMismatch,
    SpecError,
    UnknownCorruption,
)
from ..netlib import load_checkpoint, save_checkpoint
from ..netlib.checkpoint import ARCH_FILE
from ..robustness import RobustnessReport, format_delta
from .campaign import CONFIG_FILE, EvalContext, run_campaign, train_base
from .config import ExperimentConfig, dump_config, load_config
from .report import write_report

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 2, 3
INPUT_ERRORS = (
    ConfigError, DatasetError, FileNotFoundError, SpecError, CorruptCheckpoint, ReportError,
    ReportMismatch, IneligibleLayer, UnknownCorruption,
)

log = logging.getLogger("consensus_prune")


def _resolve(args) -> tuple[ExperimentConfig, Path]:
    """Config with command-line overrides applied, plus the directory that
    relative data paths are resolved against."""
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "out", None):
        cfg = dataclasses.replace(cfg, out_dir=str(args.out))
    base_dir = Path(args.config).resolve().parent if args.config else Path.cwd()
    return cfg, base_dir


def cmd_train(args) -> int:
    cfg, base_dir = _resolve(args)
    data = cfg.data.load(base_dir)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / CONFIG_FILE)
    ckpt = train_base(cfg, data)
    path = save_checkpoint(ckpt, out / "checkpoint")
    cost = cost_report(ckpt.architecture)
    metrics = {
        "train_acc": ckpt.meta["train_acc"],
        "test_acc": ckpt.meta["test_acc"],
        "loss_history": ckpt.meta["loss_history"],
        "flops": cost.flops,
        "params": cost.params,
    }
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n")
    print(f"checkpoint: {path}")
    print(f"test accuracy: {metrics['test_acc']:.2f}%")
    return EXIT_OK


def cmd_prune(args) -> int:
    cfg, base_dir = _resolve(args)
    base = load_checkpoint(args.checkpoint) if args.checkpoint else None
    state = run_campaign(cfg, cfg.out_dir, base=base, resume=args.resume, base_dir=base_dir)
    print(f"status: {state.status}")
    print(f"removed: {', '.join(state.victims) or '(none)'}")
    print(f"flop reduction: {state.iterations[-1].cost['flop_reduction_pct']:.2f}%")
    return EXIT_OK


def _load_baseline(path: Path, ctx: EvalContext) -> RobustnessReport:
    if path.is_dir() and (path / ARCH_FILE).exists():
        return ctx.run(load_checkpoint(path).to_model())
    if not path.exists():
        raise FileNotFoundError(f"baseline not found: {path}")
    try:
        return RobustnessReport.load(path)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ReportError(f"unreadable baseline report {path}: {exc}") from exc


def cmd_eval(args) -> int:
    cfg, base_dir = _resolve(args)
    ckpt = load_checkpoint(args.checkpoint)
    ctx = EvalContext.from_config(cfg, cfg.data.load(base_dir))
    baseline = _load_baseline(Path(args.baseline), ctx) if args.baseline else None
    report = ctx.run(ckpt.to_model(), baseline)
    out = Path(args.out) if args.out else Path(args.checkpoint)
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / "robustness.json")
    for key, acc in report.accuracies().items():
        delta = f"  ({format_delta(report.delta_pp[key])} pp)" if report.delta_pp else ""
        print(f"{key:>22}: {acc:6.2f}%{delta}")
    return EXIT_OK


def cmd_report(args) -> int:
    csv_path, plot_path = write_report(args.campaign, args.out)
    print(f"csv: {csv_path}")
    print(f"plot: {plot_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")
    p = argparse.ArgumentParser(prog="consensus-prune", description="Consensus-criterion layer pruning.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common], help="train the unpruned model")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("prune", parents=[common], help="run (or resume) a pruning campaign")
    r.add_argument("--config", required=True)
    r.add_argument("--checkpoint", help="unpruned checkpoint; trained from the config when omitted")
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--resume", action="store_true")
    r.set_defaults(func=cmd_prune)

    e = sub.add_parser("eval", parents=[common], help="robustness evaluation of one checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--config", help="dataset and attack suite (defaults otherwise)")
    e.add_argument("--baseline", help="report JSON or checkpoint directory to compute deltas against")
    e.add_argument("--seed", type=int)
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("report", parents=[common], help="CSV and trade-off plot for a campaign")
    c.add_argument("campaign", help="campaign directory")
    c.add_argument("--out", help="where to write (defaults to the campaign directory)")
    c.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(message)s",
    )
    torch.set_num_threads(1)
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
