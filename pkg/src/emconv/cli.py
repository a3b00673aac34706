"""Command line entry point: ``emconv {run,snr-sweep,roc,sgd,conditions,plot}``.

A JSON config file (``--config``) may carry any experiment field; flags given
on the command line override it. Exit status: 0 on success, 2 for an invalid
configuration, 3 when every trial failed numerically.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import experiments as ex
from .core import ConfigError, NotPositiveDefinite
from .plotting import EmptyCsv, MissingColumn, PlotSpec, emit_svg

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

COMMANDS = {
    "run": ex.run_experiment,
    "snr-sweep": ex.run_snr_sweep,
    "roc": ex.run_roc,
    "sgd": ex.run_sgd_experiment,
    "conditions": ex.run_conditions,
}


def _float_list(text):
    return tuple(float(v) for v in text.split(","))


def _common(p):
    S = argparse.SUPPRESS
    p.add_argument("--config", help="JSON file with experiment fields")
    p.add_argument("--model", choices=("gmm", "mor", "missing"), default=S)
    p.add_argument("--algo", choices=("em", "em-split", "grad", "grad-split", "sgd"), default=S)
    p.add_argument("--d", type=int, default=S)
    p.add_argument("--n", type=int, default=S)
    p.add_argument("--trials", type=int, default=S)
    p.add_argument("--iters", type=int, default=S)
    p.add_argument("--snr", type=float, default=S)
    p.add_argument("--sigma", type=float, default=S)
    p.add_argument("--theta-norm", dest="theta_norm", type=float, default=S)
    p.add_argument("--omega", type=float, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--init-radius-frac", dest="init_radius_frac", type=float, default=S)
    p.add_argument("--init-style", dest="init_style",
                   choices=("toward-theta-star", "random-direction"), default=S)
    p.add_argument("--init-distance", dest="init_distance", type=float, default=S)
    p.add_argument("--step", type=float, default=S)
    p.add_argument("--xi", type=float, default=S)
    p.add_argument("--radius", type=float, default=S)
    p.add_argument("--zeta2", type=float, default=S)
    p.add_argument("--second-moment", dest="second_moment", choices=("paper", "exact"),
                   default=S)
    p.add_argument("--out", default=S)
    p.add_argument("--no-plot", dest="plot", action="store_false", default=S)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emconv", description="EM convergence experiments for latent-variable models")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _common(sub.add_parser("run", help="multi-trial traces and summaries"))
    p = sub.add_parser("snr-sweep", help="fitted rate across an SNR grid")
    _common(p)
    p.add_argument("--snr-grid", dest="snr_grid", type=_float_list, default=argparse.SUPPRESS)
    p = sub.add_parser("roc", help="radius of convergence over a grid of |theta*|")
    _common(p)
    p.add_argument("--theta-norms", dest="theta_norms", type=_float_list,
                   default=argparse.SUPPRESS)
    p.add_argument("--inits-per-radius", dest="inits_per_radius", type=int,
                   default=argparse.SUPPRESS)
    p.add_argument("--bisections", type=int, default=argparse.SUPPRESS)
    p = sub.add_parser("sgd", help="projected stochastic gradient EM")
    _common(p)
    p.add_argument("--slope-t-min", dest="slope_t_min", type=int, default=argparse.SUPPRESS)
    p = sub.add_parser("conditions", help="Monte-Carlo regularity estimates")
    _common(p)
    p.add_argument("--num-probes", dest="num_probes", type=int, default=argparse.SUPPRESS)
    p.add_argument("--mc-n", dest="mc_n", type=int, default=argparse.SUPPRESS)

    p = sub.add_parser("plot", help="render a CSV column as an SVG line plot")
    p.add_argument("csv")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--group-by", dest="group_by")
    p.add_argument("--logy", action="store_true")
    p.add_argument("--logx", action="store_true")
    p.add_argument("--svg", help="output path (default: CSV path with .svg)")
    return parser


def load_spec(args: argparse.Namespace) -> ex.ExperimentSpec:
    values = {}
    if args.config:
        with open(args.config) as fh:
            values = json.load(fh)
        if not isinstance(values, dict):
            raise ConfigError("config file must hold a JSON object")
    skip = {"config", "command", "verbose"}
    values.update({k: v for k, v in vars(args).items() if k not in skip})
    if args.command == "sgd":
        values["algo"] = "sgd"
        values.setdefault("iters", 10_000)
    try:
        return ex.ExperimentSpec.from_dict(values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "plot":
        try:
            path = emit_svg(args.csv, PlotSpec(args.x, args.y, args.logy, args.logx, args.group_by),
                            args.svg)
        except (MissingColumn, EmptyCsv, FileNotFoundError) as exc:
            print(f"emconv plot: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(path)
        return EXIT_OK
    try:
        spec = load_spec(args)
        result = COMMANDS[args.command](spec)
    except (ex.AllTrialsFailed, NotPositiveDefinite) as exc:
        print(f"emconv: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, OSError) as exc:
        print(f"emconv: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for path in result["files"].values():
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
