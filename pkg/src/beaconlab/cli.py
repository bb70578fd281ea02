"""Command-line front end.

Exit codes: 0 success, 2 configuration or input error, 3 I/O error,
4 calibration failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

from . import __version__
from . import config as cfgmod
from .errors import BeaconLabError, CalibrationError, ConfigError, InsufficientDataError
from .report import OutputDir, csv_text, json_text, timestamp

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_IO = 3
EXIT_CALIBRATION = 4

log = logging.getLogger("beaconlab")


def _default_jobs() -> int:
    return os.cpu_count() or 1


def _common(parser: argparse.ArgumentParser, *, replicas: bool = True, svg: bool = True) -> None:
    parser.add_argument(
        "--config", metavar="PATH", default=None,
        help=f"configuration file (default: ${cfgmod.CONFIG_ENV} if set, else the bundled calibrated config)",
    )
    parser.add_argument("--seed", type=int, default=None, help="master seed override (default: experiment.master_seed from the config, 42)")
    parser.add_argument("-o", "--out", metavar="DIR", default="out", help="output directory (default: %(default)s)")
    parser.add_argument("--jobs", type=int, default=_default_jobs(), help="worker processes (default: CPU count, %(default)s here)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    if replicas:
        parser.add_argument("--replicas", type=int, default=None, help="replica count override (default: experiment.replicas from the config, 50)")
    if svg:
        parser.add_argument("--svg", action="store_true", help="also write <study>.svg")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beaconlab",
        description="Simulate cloud-native beacon campaigns and regenerate the attribution studies.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    helps = {
        "grid": "vector x attacker grid: CAS, DR, CTD, posterior and attacker-level ANOVA",
        "decay": "CAS decay under churn at each timepoint with Welch contrasts",
        "providers": "CAS by (vector, provider) with a Kruskal-Wallis test across providers",
        "scatter": "mean CAS vs final posterior per beacon-attacker trace",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        _common(p)

    p = sub.add_parser("calibrate", help="fit every coefficient to the anchor file and write config.json",
                       description="Fit every coefficient to the anchor file and write <out>/config.json.")
    p.add_argument("--anchors", metavar="PATH", default=None, help="anchors file (default: bundled anchors.json)")
    _common(p, replicas=False, svg=False)

    p = sub.add_parser("forge", help="write the beacon fleet as JSON lines (<out>/fleet.jsonl)",
                       description="Render the beacon fleet for an organisation context as JSON lines.")
    p.add_argument("--context", default=None, help="organisation context label (default: experiment.context from the config, payflow.io)")
    _common(p, replicas=False, svg=False)
    return parser


def _load(args) -> cfgmod.LabConfig:
    cfg = cfgmod.resolve(args.config)
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if getattr(args, "replicas", None) is not None:
        if args.replicas < 1:
            raise ConfigError("--replicas must be >= 1")
        changes["replicas"] = args.replicas
    return cfg.with_experiment(**changes) if changes else cfg


def _jobs(args) -> int:
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    return args.jobs


def _run_study(args) -> int:
    from .experiments import STUDIES, figure

    cfg = _load(args)
    jobs = _jobs(args)
    started = timestamp()
    t0 = time.perf_counter()
    log.info("running %s: seed=%d replicas=%d jobs=%d", args.command, cfg.experiment.master_seed, cfg.experiment.replicas, jobs)
    report = STUDIES[args.command](cfg, jobs=jobs)
    log.info("%s finished in %.1fs", args.command, time.perf_counter() - t0)

    out = OutputDir(args.out)
    out.prepare()
    out.write(f"{report.study}.csv", csv_text(report.columns, report.rows))
    out.write(f"{report.study}_tests.json", json_text({"tests": report.tests, "summary": report.summary}))
    if args.svg:
        out.write(f"{report.study}.svg", figure(report))
    out.write_manifest(dict(report.manifest), started)
    _print_summary(report)
    return EXIT_OK


def _fmt(x) -> str:
    return "-" if x is None else f"{x:.3f}"


def _print_summary(report) -> None:
    s = report.summary
    if report.study == "grid":
        print(f"{'vector':<20} {'CAS':>7} {'DR':>7} {'CTD-N':>7} {'CTD-A':>7}")
        for name, body in s["per_vector"].items():
            print(f"{name:<20} {_fmt(body['cas']['mean']):>7} {_fmt(body['dr']['mean']):>7} "
                  f"{_fmt(body['ctd']['Naive']['mean']):>7} {_fmt(body['ctd']['APT']['mean']):>7}")
        print(f"{'overall':<20} {_fmt(s['overall']['cas']['mean']):>7} {_fmt(s['overall']['dr']['mean']):>7}")
    elif report.study == "decay":
        print(f"{'vector':<20} {'CAS_0':>7} {'CAS_end':>7} {'delta':>7}")
        for name, body in s["per_vector"].items():
            print(f"{name:<20} {_fmt(body['cas_start']):>7} {_fmt(body['cas_end']):>7} {body['delta']:>+7.3f}")
    elif report.study == "providers":
        for name, body in s["per_provider"].items():
            print(f"{name:<8} mean CAS {_fmt(body['mean'])} (n={body['n']})")
    elif report.study == "scatter":
        print(f"pearson r {_fmt(s['pearson_r'])}  max posterior {_fmt(s['max_posterior'])}  ideal zone {s['ideal_zone_count']}")
    for key, t in report.tests.items():
        if isinstance(t, dict) and "p_value" in t:
            print(f"{key}: statistic={t['statistic']:.4f} p={t['p_value']:.4g}")
        elif isinstance(t, dict) and "error" in t:
            print(f"{key}: {t['error']}")


def _run_calibrate(args) -> int:
    from .calibration import calibrate_all, load_anchors

    anchors = load_anchors(args.anchors)
    base_seed = args.seed
    if base_seed is None:
        base_seed = _load(args).experiment.master_seed
    jobs = _jobs(args)
    started = timestamp()
    try:
        result = calibrate_all(anchors, seed=base_seed, jobs=jobs)
    except CalibrationError as exc:
        if exc.residuals is not None:
            print(exc.residuals.table())
        raise
    print(result.residuals.table())
    out = OutputDir(args.out)
    out.prepare()
    out.write("config.json", cfgmod.dumps(result.config))
    out.write("calibration_residuals.csv", csv_text(["anchor", "target", "value", "residual", "tolerance", "ok"], result.residuals.rows))
    out.write_manifest({"study": "calibrate", "master_seed": base_seed, "config_digest": result.config.digest()}, started)
    return EXIT_OK


def _run_forge(args) -> int:
    from .taxonomy import fleet_to_jsonl, generate_fleet

    cfg = _load(args)
    context = args.context or cfg.experiment.context
    if context not in cfg.contexts:
        raise ConfigError(f"unknown context {context!r}; known: {sorted(cfg.contexts)}")
    seed = cfg.experiment.master_seed
    started = timestamp()
    fleet = generate_fleet(seed, context, cfg.contexts)
    out = OutputDir(args.out)
    out.prepare()
    out.write("fleet.jsonl", fleet_to_jsonl(fleet))
    out.write_manifest({"study": "forge", "master_seed": seed, "context": context, "config_digest": cfg.digest()}, started)
    print(f"wrote {len(fleet)} beacons for {context}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    handler = {"calibrate": _run_calibrate, "forge": _run_forge}.get(args.command, _run_study)
    try:
        return handler(args)
    except CalibrationError as exc:
        print(f"beaconlab: calibration failed: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except (ConfigError, InsufficientDataError) as exc:
        print(f"beaconlab: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        name = exc.filename or args.out
        print(f"beaconlab: cannot write {name}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    except BeaconLabError as exc:
        print(f"beaconlab: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
