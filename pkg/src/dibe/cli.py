"""``dibe`` command line: gen, train, sweep, guide, check, plot.

Exit codes: 0 success, 2 usage, 3 config error, 4 missing file, 5 invalid
data, 6 training diverged, 7 a check failed, 1 anything else.
"""

import argparse
import logging
import os
import sys
from pathlib import Path

from . import gradcheck, plotting
from .config import ConfigError, ExperimentConfig, dump_config, load_config
from .experiments import curves_csv, dataset_for, guided_vs_grid, run_many, run_training
from .guide import comparison_csv
from .synth import PGMError, generate_dataset, measure_input_imbalance, save_dataset
from .trainer import TrainingDiverged, TrainingLog

logger = logging.getLogger("dibe")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING = 4
EXIT_DATA = 5
EXIT_DIVERGED = 6
EXIT_CHECK_FAILED = 7


class UsageError(Exception):
    pass


def _write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    return path


def _load(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.out is not None:
        cfg = ExperimentConfig(cfg.dataset, cfg.train, cfg.guidance, args.out, cfg.dataset_dir, cfg.init_prior)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise UsageError("--seed must be an unsigned 64-bit integer")
        cfg = cfg.with_seed(args.seed)
    return cfg


# --------------------------------------------------------------------------
# commands


def cmd_gen(args):
    cfg = _load(args)
    ds = generate_dataset(cfg.dataset)
    manifest = save_dataset(Path(cfg.out_dir) / "dataset", ds)
    print(f"wrote {len(ds.train)} train / {len(ds.val)} val pairs to {manifest.parent}")
    for split in ("train", "val"):
        ratio = measure_input_imbalance(getattr(ds, split))
        print(f"{split} fg:bg = 1:{1.0 / ratio:.1f}" if ratio > 0 else f"{split}: no foreground")
    return EXIT_OK


def cmd_train(args):
    cfg = _load(args)
    out = Path(cfg.out_dir)
    log = run_training(cfg.train, dataset_for(cfg), cfg.prior)
    _write(out / "config.txt", dump_config(cfg))
    path = _write(out / "train_log.csv", log.to_csv())
    last = log.final
    print(f"epoch {last.epoch}: iou={last.iou:.4f} pa={last.pa:.4f} oii={last.oii:.4f} fp/fn={last.fp_fn_ratio:.3g}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_sweep(args):
    cfg = _load(args)
    if not args.values:
        raise UsageError("--values needs at least one value")
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    try:
        cfgs = [cfg.with_param(args.param, v) for v in values]
    except ValueError as exc:
        raise ConfigError(f"--param {args.param}: {exc}") from None
    logs = run_many([c.train for c in cfgs], dataset_for(cfg), cfg.prior, jobs=args.jobs)
    out = Path(cfg.out_dir)
    _write(out / "config.txt", dump_config(cfg))
    for value, log in zip(values, logs):
        path = _write(out / f"sweep_{args.param}_{value}.csv", log.to_csv())
        last = log.final
        print(f"{args.param}={value}: iou={last.iou:.4f} oii={last.oii:.4f} -> {path}")
    path = _write(out / f"sweep_{args.param}_curves.csv", curves_csv(values, logs, args.param))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_guide(args):
    cfg = _load(args)
    trace, grid, rows = guided_vs_grid(cfg.train, dataset_for(cfg), cfg.guidance, args.grid_parts, cfg.prior)
    out = Path(cfg.out_dir)
    _write(out / "config.txt", dump_config(cfg))
    _write(out / "guide_trace.csv", trace.to_csv())
    _write(out / "guide_comparison.csv", comparison_csv(rows))
    for t in trace.trials:
        print(f"alpha={t.alpha:.4f} oii={t.oii:.4f} iou={t.iou:.4f} pa={t.pa:.4f}")
    print(f"status: {trace.status} after {trace.n_trainings} trainings")
    for method, n, alpha, iou, pa in rows:
        print(f"{method:>9}: trainings={n} alpha={alpha:.4f} iou={iou:.4f} pa={pa:.4f}")
    return EXIT_OK


def cmd_check(args):
    unknown = [s for s in args.suite or [] if s not in gradcheck.SUITES]
    if unknown:
        raise UsageError(f"unknown suite(s) {unknown}; choose from {list(gradcheck.SUITES)}")
    results = gradcheck.run_all(args.suite or None)
    failed = 0
    for suite, checks in results.items():
        print(f"[{suite}]")
        for c in checks:
            print("  " + c.line())
            failed += not c.passed
    total = sum(len(c) for c in results.values())
    print(f"{total - failed}/{total} checks passed")
    return EXIT_OK if failed == 0 else EXIT_CHECK_FAILED


def _parse_curves(specs, default):
    curves = []
    for spec in specs or default:
        family, sep, gamma = spec.partition(":")
        if not sep:
            raise UsageError(f"--curve expects FAMILY:GAMMA, got {spec!r}")
        curves.append((family, float(gamma)))
    return curves


def cmd_plot(args):
    out_dir = Path(args.out if args.out is not None else "runs")
    mode = args.mode
    if mode == "epochs":
        if not args.csv:
            raise UsageError("epochs mode needs at least one log CSV")
        logs = {}
        for path in args.csv:
            if not os.path.exists(path):
                raise FileNotFoundError(f"log file not found: {path}")
            logs[Path(path).stem] = TrainingLog.read_csv(path)
        svg = plotting.epoch_plot(logs, args.metric)
        name = args.name or f"{args.metric}_vs_epoch.svg"
    elif mode == "loss-tv":
        svg = plotting.loss_vs_tv_plot(_parse_curves(args.curve, ["DIBE_REG:1.5", "FT:0.75"]))
        name = args.name or "loss_vs_tv.svg"
    elif mode == "grad-tv":
        svg = plotting.grad_vs_tv_plot(_parse_curves(args.curve, ["DIBE_REG:1.5", "FT:0.75"]))
        name = args.name or "grad_vs_tv.svg"
    else:
        alphas = [float(a) for a in args.alphas.split(",")]
        svg = plotting.dibe_dis_gradient_plot(alphas, args.lam, args.gamma)
        name = args.name or "dibe_dis_gradient.svg"
    path = _write(out_dir / name, svg)
    print(f"wrote {path}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _add_common(p, suppress):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="experiment config file (key = value lines)")
    p.add_argument("--out", default=d, help="output directory (overrides out_dir)")
    p.add_argument("--seed", type=int, default=d, help="training seed (overrides train.seed)")
    p.add_argument("--jobs", type=int, default=argparse.SUPPRESS if suppress else 1,
                   help="parallel trainings for sweep")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser():
    parser = argparse.ArgumentParser(prog="dibe", description="DIBE losses, OII metric and OII-guided search.")
    _add_common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        _add_common(p, suppress=True)
        p.set_defaults(func=fn)
        return p

    add("gen", cmd_gen, "generate a synthetic dataset under OUT/dataset")
    add("train", cmd_train, "train once and write OUT/train_log.csv")
    p = add("sweep", cmd_sweep, "train once per value of a parameter")
    p.add_argument("--param", default="alpha", help="train/loss field to vary (default alpha)")
    p.add_argument("--values", required=True, help="comma-separated values, e.g. 0.1,0.5,0.9")
    p = add("guide", cmd_guide, "OII-guided alpha search plus grid-search comparison")
    p.add_argument("--grid-parts", type=int, default=4, help="grid has PARTS+1 points (default 4)")
    p = add("check", cmd_check, "run gradient/property oracle suites")
    p.add_argument("--suite", action="append", help=f"run only this suite; one of {list(gradcheck.SUITES)}")
    p = add("plot", cmd_plot, "write SVG line charts")
    p.add_argument("mode", choices=("epochs", "loss-tv", "grad-tv", "dis-grad"))
    p.add_argument("csv", nargs="*", help="training log CSVs (epochs mode)")
    p.add_argument("--metric", default="oii", choices=("oii", "iou", "pa", "loss", "fp_fn_ratio"))
    p.add_argument("--curve", action="append", help="FAMILY:GAMMA for loss-tv / grad-tv (repeatable)")
    p.add_argument("--alphas", default="0,0.3,0.6,0.9", help="dis-grad alphas")
    p.add_argument("--lam", type=float, default=0.25)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--name", help="output file name")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"dibe: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"dibe: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"dibe: missing file: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except TrainingDiverged as exc:
        print(f"dibe: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (PGMError, ValueError) as exc:
        print(f"dibe: invalid data: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
