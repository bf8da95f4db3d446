"""Command-line interface: ``conslaw {simulate,differentiate,discover,bench,bounds}``.

Exit status: 0 success, 2 configuration or validation error, 3 no
conservation law found (``discover`` only), 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .benchmarks import SYSTEM_NAMES, make_system, simulate
from .differentiation import METHODS, DiffMethod, differentiate
from .errors import ConfigurationError, ConslawError, NumericalError, ValidationError
from .harness import ExperimentPlan, default_t_end, emit_report, render_report, run_plan
from .library import STANDARD_MENU, LibrarySpec, eval_gamma, expand, parse_candidates
from .nullspace import DEFAULT_CUTOFF_FLOOR, bounds
from .selection import CutoffPolicy, discover
from .timeseries import (CSV_FLOAT_FORMAT, NoiseSpec, TimeSeries, add_noise, load_csv, save_csv,
                         save_derivatives_csv)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONE_FOUND = 3
EXIT_NUMERICAL = 4

_FORMAT_ALIASES = {"json": "json", "csv": "csv", "markdown": "markdown", "md": "markdown"}


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return v


def _nonneg_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (v >= 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be nonnegative: {text!r}")
    return v


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_method_flags(p):
    p.add_argument("--lambda", dest="lam", type=_positive_float,
                   help="Tikhonov weight (default 1e-6 * N)")
    p.add_argument("--window", type=int, default=11, help="Savitzky-Golay window (odd)")
    p.add_argument("--order", type=int, default=3, help="Savitzky-Golay polynomial order")


def _add_global_flags(p, defaults: bool):
    keep = {} if defaults else {"default": argparse.SUPPRESS}
    p.add_argument("--seed", type=int, help="random seed (default 0)", **(keep or {"default": 0}))
    p.add_argument("--output", "-o", help="output file (or directory for bench)", **keep)
    p.add_argument("--format", choices=sorted(_FORMAT_ALIASES), help="report format", **keep)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conslaw",
        description="Discover conservation laws from time-series data.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_global_flags(parser, defaults=True)
    # the same flags are accepted after the subcommand name
    common = argparse.ArgumentParser(add_help=False)
    _add_global_flags(common, defaults=False)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    add = lambda name, **kw: sub.add_parser(name, parents=[common], **kw)  # noqa: E731

    p = add("simulate", help="integrate a benchmark system and write CSV")
    p.add_argument("--system", required=True, help=f"one of {', '.join(SYSTEM_NAMES)}")
    p.add_argument("--n-points", type=int, default=20)
    p.add_argument("--t-end", type=_positive_float, help="final time (default 1, mapk 1000)")
    p.add_argument("--noise-var", type=_nonneg_float, default=0.0, help="noise level")
    p.add_argument("--literal-variance", action="store_true",
                   help="treat --noise-var as a variance rather than a standard deviation")
    p.add_argument("--derivatives-output", help="also write the true derivatives here")

    p = add("differentiate", help="estimate derivatives of a CSV time series")
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=METHODS, default="tikhonov")
    _add_method_flags(p)

    p = add("discover", help="select a library and print conservation laws")
    p.add_argument("--data", required=True)
    p.add_argument("--derivatives", default="tikhonov",
                   help=f"derivative CSV path or a method ({', '.join(METHODS)})")
    p.add_argument("--candidates", default="all", help='"all" or e.g. "(1,0,0),(1,0,1)"')
    p.add_argument("--cutoff", default=str(DEFAULT_CUTOFF_FLOOR), help='a number or "auto"')
    p.add_argument("--eps-x", type=_nonneg_float, help="max data noise, required with --cutoff auto")
    p.add_argument("--floor", type=_nonneg_float, default=DEFAULT_CUTOFF_FLOOR,
                   help="lower bound for the automatic cutoff")
    _add_method_flags(p)

    p = add("bench", help="run a Monte Carlo experiment plan")
    p.add_argument("--plan", help="JSON plan file; inline flags override its fields")
    p.add_argument("--system", help=f"one of {', '.join(SYSTEM_NAMES)}")
    p.add_argument("--n-values", type=_int_list)
    p.add_argument("--variances", type=_float_list)
    p.add_argument("--trials", type=int)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--candidates")

    p = add("bounds", help="evaluate singular-value perturbation bounds")
    p.add_argument("--data", required=True, help="clean CSV")
    p.add_argument("--noisy-data", required=True, help="perturbed CSV on the same grid")
    p.add_argument("--derivatives", default="tikhonov",
                   help="derivative CSV for the clean data, or a method")
    p.add_argument("--noisy-derivatives", default="tikhonov",
                   help="derivative CSV for the noisy data, or a method")
    p.add_argument("--library", default="(1,0,0)", help="library triple")
    p.add_argument("--eps-x", type=_nonneg_float, required=True, help="max data perturbation")
    p.add_argument("--eps-dx", type=_nonneg_float,
                   help="max derivative perturbation (default: measured)")
    p.add_argument("--h", type=_positive_float, help="sample spacing (default: from data)")
    p.add_argument("--k1", type=_nonneg_float, default=1.0)
    p.add_argument("--k2", type=_nonneg_float, default=1.0)
    p.add_argument("--c-gap", type=_nonneg_float, default=1.0)
    _add_method_flags(p)
    return parser


def _fmt(args, default):
    return _FORMAT_ALIASES[args.format] if args.format else default


def _method(kind, args) -> DiffMethod:
    return DiffMethod(kind, tikhonov_lambda=args.lam, sg_window=args.window, sg_order=args.order)


def _with_derivatives(series: TimeSeries, source: str, args) -> TimeSeries:
    if source in METHODS:
        return differentiate(series, _method(source, args))
    deriv = load_csv(source)
    if deriv.states.shape != series.states.shape:
        raise ValidationError(
            f"derivative file {source} has shape {deriv.states.shape}, data has {series.states.shape}"
        )
    if not np.allclose(deriv.times, series.times, rtol=1e-12, atol=0):
        raise ValidationError(f"derivative file {source} uses a different time grid")
    return series.with_derivatives(deriv.states)


def _write_text(text: str, output) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_simulate(args) -> int:
    system = make_system(args.system)
    t_end = args.t_end if args.t_end is not None else default_t_end(system.name)
    clean = simulate(system, t_end, args.n_points)
    series, _ = add_noise(clean, NoiseSpec(args.noise_var, args.seed, args.literal_variance))
    if args.derivatives_output:
        save_derivatives_csv(clean, args.derivatives_output)
    if args.output:
        save_csv(series, args.output)
    else:
        _stdout_csv(series.times, series.labels, series.states)
    return EXIT_OK


def _stdout_csv(times, labels, matrix):
    lines = [",".join(["t", *labels])]
    for t, row in zip(times, matrix):
        lines.append(",".join(CSV_FLOAT_FORMAT.format(v) for v in (t, *row)))
    sys.stdout.write("\n".join(lines) + "\n")


def cmd_differentiate(args) -> int:
    series = differentiate(load_csv(args.data), _method(args.method, args))
    if args.output:
        save_derivatives_csv(series, args.output)
    else:
        _stdout_csv(series.times, series.labels, series.derivatives)
    return EXIT_OK


def _cutoff_policy(args) -> CutoffPolicy:
    if args.cutoff == "auto":
        if args.eps_x is None:
            raise ConfigurationError("--cutoff auto needs --eps-x")
        return CutoffPolicy.noise_based(args.eps_x, args.floor)
    try:
        value = float(args.cutoff)
    except ValueError:
        raise ConfigurationError(f"--cutoff must be a number or 'auto', got {args.cutoff!r}") from None
    return CutoffPolicy(fixed=value)


def cmd_discover(args) -> int:
    policy = _cutoff_policy(args)
    candidates = STANDARD_MENU if args.candidates == "all" else parse_candidates(args.candidates)
    series = _with_derivatives(load_csv(args.data), args.derivatives, args)
    result = discover(series.states, series.derivatives, candidates, policy)
    for cand in result.candidates:
        if cand.skip_reason:
            print(f"warning: skipped {cand.spec}: {cand.skip_reason}", file=sys.stderr)
    payload = result.to_dict(series.labels)
    payload["cutoff_policy"] = policy.describe()
    text = json.dumps(payload, indent=2) + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    if result.found:
        print(f"optimal library {result.optimal_spec}")
        for law in result.law_strings(series.labels):
            print(law)
    else:
        print("no conservation law found")
    if not args.output and args.format == "json":
        sys.stdout.write(text)
    return EXIT_OK if result.found else EXIT_NONE_FOUND


def cmd_bench(args) -> int:
    data = {}
    if args.plan:
        try:
            data = json.loads(Path(args.plan).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{args.plan}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigurationError(f"{args.plan}: plan must be a JSON object")
    overrides = {
        "system": args.system, "n_values": args.n_values, "variances": args.variances,
        "trials": args.trials, "diff_method": args.method, "candidates": args.candidates,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    if "base_seed" not in data:
        data["base_seed"] = args.seed
    plan = ExperimentPlan.from_dict(data)
    result = run_plan(plan)
    fmt = _fmt(args, "markdown")
    emit_report(result.rows, fmt, args.output or ".", result.singular_values)
    sys.stdout.write(render_report(result.rows, "markdown"))
    return EXIT_OK


def cmd_bounds(args) -> int:
    clean = _with_derivatives(load_csv(args.data), args.derivatives, args)
    noisy = _with_derivatives(load_csv(args.noisy_data), args.noisy_derivatives, args)
    if clean.states.shape != noisy.states.shape or not np.allclose(clean.times, noisy.times):
        raise ValidationError("clean and noisy data must share shape and time grid")
    spec = LibrarySpec.parse(args.library)
    terms = expand(spec, clean.n_states)
    g_clean = eval_gamma(terms, clean.states, clean.derivatives)
    g_noisy = eval_gamma(terms, noisy.states, noisy.derivatives)
    eps_dx = args.eps_dx
    if eps_dx is None:
        eps_dx = float(np.max(np.abs(noisy.derivatives - clean.derivatives)))
    h = args.h if args.h is not None else float(np.mean(np.diff(clean.times)))
    report = bounds(g_clean, g_noisy, args.eps_x, eps_dx, h, args.k1, args.k2, args.c_gap)
    payload = {"library": list(spec.triple), "N": clean.n_samples, "p": len(terms),
               "eps_x": args.eps_x, "eps_dx": eps_dx, "h": h, **report.to_dict()}
    _write_text(json.dumps(payload, indent=2) + "\n", args.output)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "differentiate": cmd_differentiate,
    "discover": cmd_discover,
    "bench": cmd_bench,
    "bounds": cmd_bounds,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConslawError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
