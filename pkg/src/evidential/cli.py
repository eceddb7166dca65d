"""Command line entry point: ``evidential <subcommand> [options]``.

Exit status is 0 on success, 1 for configuration or input errors and 2 for
numeric failures such as a diverged reference estimate.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import experiments, oracles, plots, reference
from .errors import NumericError
from .experiments import Artifacts, ConfigError

log = logging.getLogger("evidential")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


def _overrides(pairs) -> dict:
    text = "\n".join(pairs or [])
    return experiments.parse_config(text)


def build_config(args, base: dict | None = None) -> experiments.ExperimentConfig:
    values = dict(base or {})
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        values.update(experiments.parse_config(path.read_text()))
    values.update(_overrides(args.set))
    if args.out is not None:
        values["out"] = args.out
    if args.seed is not None:
        values["seed"] = args.seed
    return experiments.make_config(values)


def cmd_generate(args) -> int:
    started = time.time()
    cfg = build_config(args)
    art = Artifacts(cfg.out)
    paths = [experiments.dataset_for(cfg, art, n) for n in cfg.n]
    art.write_manifest("generate", cfg, started, {"datasets": [f"{cfg.task}_n{n}_seed{cfg.seed}.csv" for n in cfg.n]})
    print(f"wrote {len(paths)} dataset(s) to {art.datasets}")
    return EXIT_OK


def cmd_train(args) -> int:
    started = time.time()
    cfg = build_config(args)
    art = Artifacts(cfg.out)
    diverged = []
    for n in cfg.n:
        ds = experiments.dataset_for(cfg, art, n)
        for spec in cfg.loss_specs():
            for run in range(cfg.runs):
                result = experiments.train_model(cfg, art, spec, n, run, ds)
                if result.diverged:
                    diverged.append(f"n={n} {spec.label} lambda={spec.lam:g} run={run}: {result.message}")
    art.write_manifest("train", cfg, started, {"diverged": diverged})
    for line in diverged:
        print(f"warning: diverged {line}", file=sys.stderr)
    print(f"checkpoints in {art.checkpoints}")
    return EXIT_OK


def cmd_reference(args) -> int:
    started = time.time()
    cfg = build_config(args)
    art = Artifacts(cfg.out)
    excluded = {}
    for n in cfg.n:
        est = experiments.reference_for(cfg, art, n)
        excluded[str(n)] = est.excluded
    art.write_manifest("reference", cfg, started, {"excluded_refits": excluded})
    print(f"reference estimates in {art.reference}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    started = time.time()
    cfg = build_config(args)
    art = Artifacts(cfg.out)

    for n in cfg.n:
        directory = experiments.reference_dir(cfg, art, n)
        ref = reference.load(directory)
        report = experiments.evaluate(cfg, art, n, ref, train_missing=False)
        path = experiments.write_eval(report, art, f"evaluate_n{n}")
        plots.plot_file(path, "w1", art.plots / f"evaluate_n{n}.svg", title=f"W1 to reference, N={n}")
        for label, lam in report.missing:
            print(f"warning: no trained model for {label} lambda={lam:g} (n={n})", file=sys.stderr)
    art.write_manifest("evaluate", cfg, started)
    print(f"reports in {art.reports}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    base = experiments.PRESETS[args.figure]["desk" if args.desk_scale else "full"]
    cfg = build_config(args, base)
    res = experiments.reproduce(args.figure, cfg)
    print(f"{args.figure}: {len(res.reports)} report(s), {len(res.plots)} plot(s) under {cfg.out}")
    return EXIT_OK


def cmd_plot(args) -> int:
    out = plots.plot_file(args.csv, args.kind, args.output, title=args.title or "", value=args.value)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_oracles(args) -> int:
    report = oracles.run_oracles(args.seed)
    print(report.to_text())
    if args.json:
        Path(args.json).write_text(report.to_json() + "\n")
    if not report.passed:
        print("error: oracle failures: " + ", ".join(report.failures()), file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value configuration file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one configuration key")
    p.add_argument("--out", help="output directory (config key: out)")
    p.add_argument("--seed", type=int, help="master seed (config key: seed)")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evidential", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn, text in [
        ("generate", cmd_generate, "write synthetic training sets"),
        ("train", cmd_train, "train second-order models for every configured loss"),
        ("reference", cmd_reference, "estimate the reference distribution by refitting first-order models"),
        ("evaluate", cmd_evaluate, "Wasserstein distances between trained models and a saved reference"),
    ]:
        p = sub.add_parser(name, help=text)
        _common(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("reproduce", help="run one figure end to end")
    p.add_argument("figure", choices=experiments.FIGURES)
    p.add_argument("--desk-scale", action="store_true", help="reduced reference size and epochs")
    _common(p)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("oracles", help="check closed forms, gradients and the optimizer numerically")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", help="also write the report as JSON")
    p.set_defaults(func=cmd_oracles)

    p = sub.add_parser("plot", help="render an SVG from a CSV report")
    p.add_argument("csv")
    p.add_argument("kind", choices=sorted(plots.SCHEMAS))
    p.add_argument("output")
    p.add_argument("--value", help="value column for runs plots")
    p.add_argument("--title")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, plots.PlotSchemaError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
