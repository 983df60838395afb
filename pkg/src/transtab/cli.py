"""Command line: ``transtab {bounds,converge,observe}``.

Data goes to files in ``--out-dir``; logs go to stderr; only ``bounds``
writes to stdout. Exit codes: 0 success, 2 configuration error, 1 numeric or
I/O failure.
"""
import argparse
import hashlib
import json
import logging
import os
import sys

from . import __version__
from .bounds import s3_bounds
from .ensemble import (
    CONVERGENCE,
    OBSERVER,
    ConfigError,
    ExperimentConfig,
    run_convergence,
    run_observer,
    write_series_csv,
    write_table_csv,
)
from .stabilizer import NumericalError

log = logging.getLogger("transtab")

KIND_BY_COMMAND = {"converge": CONVERGENCE, "observe": OBSERVER}

# flag dest -> ExperimentConfig field
OVERRIDES = {
    "seed": "seed",
    "runs": "runs",
    "epochs": "epochs",
    "alpha": "alpha",
    "epsilon": "epsilon",
    "delta": "delta",
    "noise_std": "noise_std",
    "omega_low": "omega_low",
    "omega_high": "omega_high",
    "omega_mode": "omega_mode",
    "burn_in": "burn_in",
    "gain": "gain",
}


def _gain(text):
    if text == "auto":
        return text
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("gain must be 'auto' or w,x,y,z")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser():
    parser = argparse.ArgumentParser(prog="transtab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with ExperimentConfig fields")
    common.add_argument("--alpha", type=float)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--delta", type=float)
    common.add_argument("--out-dir", default="out")

    sub.add_parser("bounds", parents=[common], help="certified gains for the S^3 system")

    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("--seed", type=int)
    run.add_argument("--runs", type=int)
    run.add_argument("--epochs", type=int)
    run.add_argument("--omega-low", type=float)
    run.add_argument("--omega-high", type=float)
    run.add_argument("--omega-mode", choices=["per_epoch", "per_run"])
    run.add_argument("--burn-in", type=int)
    run.add_argument("--threads", type=int, default=1)
    run.add_argument("--emit-gnuplot", action="store_true")

    sub.add_parser("converge", parents=[common, run], help="convergence ensemble")
    observe = sub.add_parser("observe", parents=[common, run], help="observer comparison")
    observe.add_argument("--noise-std", type=float)
    observe.add_argument("--gain", type=_gain, help="'auto' or w,x,y,z")
    return parser


def effective_config(args, kind):
    """Defaults, then the config file, then explicit flags."""
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ConfigError("<root>", "config file must hold a JSON object")
    if data.get("kind", kind) != kind:
        raise ConfigError("kind", f"config is for {data['kind']!r}, command needs {kind!r}")
    data["kind"] = kind
    for dest, key in OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is not None:
            data[key] = value
    return ExperimentConfig.from_dict(data)


def _sig6(value):
    return None if value is None else float(f"{value:.6g}")


def bounds_payload(config):
    gains = s3_bounds(config.epsilon, config.delta, alpha=config.alpha)
    keys = ("epsilon", "delta", "L", "d", "b", "alpha_max", "alpha", "c", "contraction")
    values = gains.as_dict()
    return {k: _sig6(values[k]) for k in keys}


def _sha256(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def write_manifest(out_dir, command, config, artifacts):
    manifest = {
        "command": command,
        "version": __version__,
        "config": config.to_dict(),
        "artifacts": {name: _sha256(os.path.join(out_dir, name)) for name in artifacts},
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


GNUPLOT_SERIES = """\
set datafile separator ','
set key autotitle columnhead
set xlabel 'epoch'
"""


def gnuplot_script(csvs, ylabel):
    lines = [GNUPLOT_SERIES, f"set ylabel '{ylabel}'"]
    plots = []
    for name in csvs:
        plots.append(f"'{name}' using 1:4:5 with filledcurves fs transparent solid 0.2 notitle")
        plots.append(f"'{name}' using 1:2 with lines title '{name}'")
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def _write_text(path, text):
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def cmd_bounds(args, config):
    payload = bounds_payload(config)
    text = json.dumps(payload, indent=2)
    print(text)
    os.makedirs(args.out_dir, exist_ok=True)
    _write_text(os.path.join(args.out_dir, "bounds.json"), text + "\n")
    write_manifest(args.out_dir, "bounds", config, ["bounds.json"])


def cmd_converge(args, config):
    series = run_convergence(config, threads=args.threads)
    os.makedirs(args.out_dir, exist_ok=True)
    artifacts = ["converge_dist.csv"]
    write_series_csv(series, os.path.join(args.out_dir, artifacts[0]))
    if args.emit_gnuplot:
        _write_text(os.path.join(args.out_dir, "plot.gp"), gnuplot_script(artifacts, "dist(q, S^3)"))
        artifacts.append("plot.gp")
    write_manifest(args.out_dir, "converge", config, artifacts)
    log.info("epoch %d mean dist %.3e", series.epoch[-1], series.mean[-1])


def cmd_observe(args, config):
    result = run_observer(config, threads=args.threads)
    os.makedirs(args.out_dir, exist_ok=True)
    files = {
        "observe_err_w.csv": result.err_w,
        "observe_err_wo.csv": result.err_wo,
        "observe_dist_w.csv": result.dist_w,
        "observe_dist_wo.csv": result.dist_wo,
    }
    for name, series in files.items():
        write_series_csv(series, os.path.join(args.out_dir, name))
    write_table_csv(result.table, os.path.join(args.out_dir, "observe_table.csv"))
    artifacts = list(files) + ["observe_table.csv"]
    if args.emit_gnuplot:
        _write_text(os.path.join(args.out_dir, "plot.gp"), gnuplot_script(list(files), "error"))
        artifacts.append("plot.gp")
    write_manifest(args.out_dir, "observe", config, artifacts)
    for row in result.table:
        log.info("%-3s %-13s mean %.4f std %.4f max %.4f min %.4f", row.observer, row.metric,
                 row.mean, row.std, row.max, row.min)


COMMANDS = {"bounds": cmd_bounds, "converge": cmd_converge, "observe": cmd_observe}


def main(argv=None):
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    kind = KIND_BY_COMMAND.get(args.command, CONVERGENCE)
    try:
        if getattr(args, "threads", 1) < 1:
            raise ConfigError("threads", "must be at least 1")
        config = effective_config(args, kind)
        if args.command == "bounds" and not 0 < config.epsilon < 1:
            raise ConfigError("epsilon", "must lie in (0, 1)")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: cannot read config: {exc}", file=sys.stderr)
        return 2
    print("effective config: " + json.dumps(config.to_dict(), sort_keys=True), file=sys.stderr)
    try:
        COMMANDS[args.command](args, config)
    except (NumericalError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
