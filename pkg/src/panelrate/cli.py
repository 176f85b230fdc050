"""Command-line interface.

Every command writes a directory of artifacts (``--out``) that always
includes ``config.json`` with the seed, bandwidth, bootstrap size, weight
and tool version. Exit codes: 0 success, 2 input error, 3 statistical
precondition failure, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from importlib import resources
from pathlib import Path

from . import __version__
from .dataset import EMBEDDED, load, to_csv, validate
from .errors import InputError, NumericalError, StatisticalError
from .estimation import default_bandwidth, dense_grid, smooth, step_estimate
from .inference import DEFAULT_WEIGHTS, Weight, run_test
from .report import dump_json, smoothed_csv, step_csv, svg_chart, test_table
from .simulation import (
    BivPoissonParams,
    SimDesign,
    format_power_table,
    power_csv,
    power_study,
    simulate,
    simulated_bandwidth_search,
)

EXIT_OK, EXIT_INPUT, EXIT_STAT, EXIT_NUMERIC = 0, 2, 3, 4
FORMATS = ("json", "csv", "svg", "table")


def _formats(text: str) -> set:
    if text == "all":
        return set(FORMATS)
    chosen = {f.strip() for f in text.split(",") if f.strip()}
    unknown = chosen - set(FORMATS)
    if unknown:
        raise InputError(f"unknown format(s): {', '.join(sorted(unknown))}")
    return chosen


def _weights(text: str) -> list:
    if text == "all":
        return list(DEFAULT_WEIGHTS)
    try:
        return [Weight.parse(w) for w in text.split(",")]
    except ValueError:
        raise InputError(f"unknown weight in {text!r}; choose from unit, riskset, rate, n, all") from None


class Outputs:
    def __init__(self, directory):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.written = []

    def write(self, name: str, text: str):
        path = self.dir / name
        path.write_text(text, encoding="utf-8")
        self.written.append(path)


def _config(args, **extra) -> dict:
    cfg = {"command": args.command, "version": __version__, "seed": None, "bandwidth": None,
           "B": None, "weight": None}
    for key in ("data", "bandwidth", "weight", "B", "reps", "alpha", "seed", "tau", "points"):
        if hasattr(args, key):
            cfg[key] = getattr(args, key)
    cfg.update(extra)
    return cfg


def cmd_validate(args) -> int:
    ds = validate(load(args.data, counts=args.counts))
    visits = sum(s.num_visits for s in ds.subjects)
    print(f"{args.data}: valid, {ds.n} subjects, {visits} visits, {ds.num_causes} causes "
          f"({', '.join(ds.cause_names)})")
    return EXIT_OK


def cmd_estimate(args) -> int:
    ds = load(args.data, counts=args.counts)
    h = default_bandwidth(ds) if args.bandwidth is None else args.bandwidth
    step = step_estimate(ds)
    pts = dense_grid(ds, args.points, args.tau)
    sm = smooth(step, h, pts)
    fmts = _formats(args.format)
    out = Outputs(args.out)
    cfg = _config(args, bandwidth=h, n=ds.n, causes=list(ds.cause_names))
    if "csv" in fmts:
        out.write("step.csv", step_csv(step, ds.cause_names))
        out.write("curves.csv", smoothed_csv(sm, ds.cause_names))
    if "svg" in fmts:
        out.write("curves.svg", svg_chart(sm, ds.cause_names, x_label=ds.time_unit, y_label="rate",
                                          title=f"Kernel rate estimates, h = {h:.4g}", metadata=cfg))
    out.write("config.json", dump_json(cfg))
    print(f"bandwidth {h:.6g}; {ds.num_causes} cause curves + overall on (0, {pts[-1]:g}]")
    return EXIT_OK


def cmd_test(args) -> int:
    ds = load(args.data, counts=args.counts)
    weights = _weights(args.weight)
    h = default_bandwidth(ds) if args.bandwidth is None else args.bandwidth
    results = [
        run_test(ds, w, bandwidth=h, B=args.B, tau=args.tau, alpha=args.alpha,
                 seed=args.seed, workers=args.workers)
        for w in weights
    ]
    fmts = _formats(args.format)
    out = Outputs(args.out)
    table = test_table(results, __version__)
    if "json" in fmts:
        out.write("test.json", dump_json({"version": __version__, "data": args.data, "n": ds.n,
                                          "results": [r.to_dict() for r in results]}))
    if "table" in fmts:
        out.write("test.txt", table)
    out.write("config.json", dump_json(_config(args, bandwidth=h, weight=[w.value for w in weights])))
    print(table, end="")
    return EXIT_OK


def cmd_simulate(args) -> int:
    params = BivPoissonParams.parse(args.theta)
    ds = simulate(params, args.n, args.seed, per_visit=args.per_visit)
    out = Outputs(args.out)
    out.write("data.csv", to_csv(ds))
    out.write("config.json", dump_json(_config(args, theta=[params.theta1, params.theta2, params.theta3],
                                                 n=args.n, per_visit=args.per_visit)))
    print(f"wrote {out.dir / 'data.csv'} ({ds.n} subjects)")
    return EXIT_OK


def _floats(text: str) -> list:
    return [float(x) for x in text.replace(" ", "").split(",") if x]


def load_power_config(path_or_name: str) -> dict:
    """Read a power-study grid file (INI, section ``[study]``).

    A bare name such as ``table1-desk`` refers to a bundled file.
    """
    path = Path(path_or_name)
    if path.exists():
        text = path.read_text(encoding="utf-8")
    else:
        name = path_or_name if path_or_name.endswith(".cfg") else path_or_name + ".cfg"
        bundled = resources.files("panelrate.resources").joinpath(name)
        if not bundled.is_file():
            raise InputError(f"{path_or_name}: no such grid file")
        text = bundled.read_text(encoding="utf-8")
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text, source=str(path_or_name))
        sec = cp["study"]
        thetas = [BivPoissonParams.parse(t) for t in sec["thetas"].split("|")]
        cfg = {
            "thetas": thetas,
            "n": [int(x) for x in _floats(sec["n"])],
            "weights": _weights(sec.get("weights", "unit")),
            "alphas": _floats(sec.get("alphas", "0.05,0.01")),
            "reps": sec.getint("reps", 500),
            "B": sec.getint("B", 200),
            "seed": sec.getint("seed", 0),
            "per_visit": sec.getboolean("per_visit", False),
        }
    except (configparser.Error, KeyError, ValueError) as exc:
        raise InputError(f"{path_or_name}: bad grid file ({exc})") from None
    return cfg


def cmd_power(args) -> int:
    cfg = load_power_config(args.config)
    for key in ("reps", "B", "seed"):
        if getattr(args, key) is not None:
            cfg[key] = getattr(args, key)
    designs = [
        SimDesign(n=n, params=th, reps=cfg["reps"], B=cfg["B"], seed=cfg["seed"],
                  alpha_levels=tuple(cfg["alphas"]), weights=tuple(cfg["weights"]),
                  per_visit=cfg["per_visit"])
        for th in cfg["thetas"] for n in cfg["n"]
    ]

    def progress(d):
        print(f"  done theta={d.params} n={d.n}", file=sys.stderr)

    rows = power_study(designs, workers=args.workers, progress=progress if args.verbose else None)
    fmts = _formats(args.format)
    out = Outputs(args.out)
    if "csv" in fmts:
        out.write("power.csv", power_csv(rows))
    table = format_power_table(rows) + (
        f"reps = {cfg['reps']}, B = {cfg['B']}, seed = {cfg['seed']}, version {__version__}\n")
    if "table" in fmts:
        out.write("power.txt", table)
    out.write("config.json", dump_json({
        "command": "power", "version": __version__, "config": args.config, "bandwidth": None,
        "thetas": [str(t) for t in cfg["thetas"]], "n": cfg["n"],
        "weight": [w.value for w in cfg["weights"]], "alphas": cfg["alphas"],
        "reps": cfg["reps"], "B": cfg["B"], "seed": cfg["seed"], "per_visit": cfg["per_visit"],
    }))
    print(table, end="")
    return EXIT_OK


def cmd_bandwidth(args) -> int:
    params = BivPoissonParams.parse(args.theta)
    res = simulated_bandwidth_search(params, args.n, args.reps, args.seed)
    out = Outputs(args.out)
    out.write("bandwidth.json", dump_json({
        "command": "bandwidth", "version": __version__, "theta": str(params), "n": args.n,
        "reps": args.reps, "seed": args.seed, "B": None, "weight": None,
        "bandwidths": [float(h) for h in res.bandwidths], "mse": [float(m) for m in res.mse], "best": res.best,
    }))
    print(f"MSE-minimising bandwidth {res.best:.4g} (default n^0.1 = {default_bandwidth(args.n):.4g})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="panelrate", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def data_args(sp):
        sp.add_argument("--data", required=True,
                        help=f"CSV path or embedded dataset ({', '.join(EMBEDDED)})")
        sp.add_argument("--counts", choices=("auto", "cumulative", "interval"), default="auto",
                        help="how to read count columns (auto: interval iff a 'total' column exists)")

    def out_args(sp, default_format="all"):
        sp.add_argument("--out", default="panelrate-out", help="output directory")
        sp.add_argument("--format", default=default_format,
                        help="comma list of json,csv,svg,table or 'all'")

    sp = sub.add_parser("validate", help="check a dataset")
    data_args(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("estimate", help="step and kernel-smoothed rate curves")
    data_args(sp)
    sp.add_argument("--bandwidth", type=float, default=None, help="default n^(1/10)")
    sp.add_argument("--tau", type=float, default=None)
    sp.add_argument("--points", type=int, default=200, help="size of the plotting grid")
    out_args(sp)
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("test", help="chi-square test of equal cause-specific rates")
    data_args(sp)
    sp.add_argument("--weight", default="all", help="unit, riskset, rate, n, a comma list, or all")
    sp.add_argument("--bandwidth", type=float, default=None)
    sp.add_argument("--B", type=int, default=500, help="bootstrap replicates")
    sp.add_argument("--alpha", type=float, default=0.05)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--tau", type=float, default=None)
    sp.add_argument("--workers", type=int, default=1, help="threads for the bootstrap")
    out_args(sp)
    sp.set_defaults(func=cmd_test)

    sp = sub.add_parser("simulate", help="generate a bivariate Poisson panel dataset")
    sp.add_argument("--theta", required=True, help="theta1,theta2,theta3")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--per-visit", action="store_true", help="do not scale counts by gap length")
    out_args(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("power", help="Monte Carlo type I error / power study")
    sp.add_argument("--config", default="table1-desk", help="grid file or bundled name")
    sp.add_argument("--reps", type=int, default=None)
    sp.add_argument("--B", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--workers", type=int, default=1, help="processes for replicates")
    sp.add_argument("--verbose", action="store_true")
    out_args(sp)
    sp.set_defaults(func=cmd_power)

    sp = sub.add_parser("bandwidth", help="MSE bandwidth sweep on simulated data")
    sp.add_argument("--theta", required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--reps", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default="panelrate-out")
    sp.set_defaults(func=cmd_bandwidth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except StatisticalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
