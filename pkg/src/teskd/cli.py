"""Command-line interface.

    teskd train --config PATH [--seed N] [--out DIR]
    teskd eval --checkpoint PATH --data {cifar100,synth} [--dir PATH]
    teskd ablate --config PATH --grid {fusion,students,featdist} [--seeds 0,1,2] [--baseline] [--reuse] [--out DIR]
    teskd export-teacher --checkpoint PATH --out PATH
    teskd plot --metrics CSV [CSV ...] --out PNG_OR_SVG

Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 invalid config.
Failures print a single ``error: <kind>: <message>`` line on stderr.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigError, TESKDError

EXIT_RUNTIME, EXIT_USAGE, EXIT_CONFIG = 1, 2, 3


def _parser():
    p = argparse.ArgumentParser(prog="teskd")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int, help="overrides train.seed")
    t.add_argument("--out", help="run directory (default: runs/<config name>)")

    e = sub.add_parser("eval", help="per-head test accuracy of a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", choices=["cifar100", "synth"], required=True)
    e.add_argument("--dir", help="CIFAR-100 directory (overrides data.dir)")

    a = sub.add_parser("ablate", help="run an ablation grid")
    a.add_argument("--config", required=True)
    a.add_argument("--grid", choices=["fusion", "students", "featdist"], required=True)
    a.add_argument("--seeds", default="0,1,2", help="comma-separated seeds")
    a.add_argument("--baseline", action="store_true", help="add a backbone-only row")
    a.add_argument("--out", help="output directory (default: runs/ablate_<grid>)")
    a.add_argument("--reuse", action="store_true",
                   help="keep cells whose metrics.csv already reached the final epoch")

    x = sub.add_parser("export-teacher", help="write a deployable teacher-only checkpoint")
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--out", required=True)

    pl = sub.add_parser("plot", help="loss/accuracy curves and per-head bars")
    pl.add_argument("--metrics", nargs="+", required=True)
    pl.add_argument("--out", required=True)
    return p


def _cmd_train(args):
    from .config import load_config
    from .trainer import run_experiment

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides({"train.seed": args.seed})
    out = Path(args.out) if args.out else Path("runs") / Path(args.config).stem
    _, metrics = run_experiment(cfg, out)
    print(f"metrics: {out / 'metrics.csv'}")
    final = metrics.split("test")
    if final:
        print(_format_acc({h: final[-1][f"{h}_top1"] for h in ("teacher", "stu1", "stu2", "stu3")}))


def _format_acc(acc):
    return " ".join(f"{k}_top1={v:.2f}" for k, v in acc.items() if v is not None)


def _cmd_eval(args):
    from .config import DataConfig, DistillConfig
    from .checkpoint import load_model
    from .data import load_dataset
    from .trainer import evaluate

    model, payload = load_model(args.checkpoint)
    if payload.get("config") is not None:
        cfg = DistillConfig.from_dict(payload["config"])
        data = cfg.data
        model_cfg = cfg.model
    else:
        data = DataConfig(synth_classes=payload["manifest"]["num_classes"])
        model_cfg = None
    data.source = args.data
    if args.dir:
        data.dir = args.dir
    _, test = load_dataset(data, model_cfg)
    print(_format_acc(evaluate(model, test)))


def _cmd_ablate(args):
    from .ablation import BASELINE_ROW, GRIDS, run_ablation
    from .config import load_config

    cfg = load_config(args.config)
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--seeds must be comma-separated integers, got {args.seeds!r}") from None
    grid = list(GRIDS[args.grid])
    if args.baseline:
        grid.insert(0, BASELINE_ROW)
    out = Path(args.out) if args.out else Path("runs") / f"ablate_{args.grid}"
    report = run_ablation(cfg, grid, seeds, out, reuse_existing=args.reuse)
    print(report.to_text())
    print(f"report: {out / 'report.csv'}")


def _cmd_export(args):
    from .checkpoint import load_model, save_teacher

    model, payload = load_model(args.checkpoint)
    path = save_teacher(model, args.out, payload.get("config"))
    print(f"teacher: {path}")


def _cmd_plot(args):
    from .plotting import plot_metrics

    print(f"figure: {plot_metrics(args.metrics, args.out)}")


COMMANDS = {"train": _cmd_train, "eval": _cmd_eval, "ablate": _cmd_ablate,
            "export-teacher": _cmd_export, "plot": _cmd_plot}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TESKDError, OSError, ValueError) as exc:
        kind = type(exc).__name__
        print(f"error: {kind}: {exc}".replace("\n", " "), file=sys.stderr)
        return EXIT_RUNTIME
    return 0


def run_cli(argv) -> int:
    """Like :func:`main` but returns the exit code for usage errors instead of raising."""
    try:
        return main(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
