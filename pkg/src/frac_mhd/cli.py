"""Command-line interface.

Subcommands: run, convergence, spatial, bench, diff, sweep, reference.
Flags may also be supplied through a flat key=value config file
(``--config``); explicit flags win.  Exit codes: 0 success, 2 usage
error, 3 numerical failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import shlex
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import (RunSpec, UsageError, cmd_bench, cmd_convergence, cmd_diff,
                          cmd_reference, cmd_run, cmd_spatial, cmd_sweep)
from .fbdf import DEFAULT_CUTOFF, DEFAULT_EPS, CalibrationError
from .models import PhysicalParams
from .solver import FactorizationError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

_PHYSICAL_FLAGS = ("alpha", "lam", "M", "m", "K_perm", "Gr", "R", "Pr", "H",
                   "length", "t_final")


def _fraction(text: str) -> float:
    """Accept '1/200' or plain floats for step-size style flags."""
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def _fraction_list(text: str) -> list[float]:
    return [_fraction(part) for part in text.split(",") if part]


def _int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part]


def _float_list(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part]


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--problem", choices=("example1", "example2"), default="example1")
    parser.add_argument("--gamma", type=float, default=0.4)
    parser.add_argument("--beta", type=float, default=0.6)
    parser.add_argument("--tau", type=_fraction, default=1.0 / 200.0)
    parser.add_argument("--n", type=int, default=32, help="spectral polynomial degree")
    parser.add_argument("--mode", choices=("direct", "fast"), default="direct")
    parser.add_argument("--eps", type=float, default=DEFAULT_EPS,
                        help="fast-history relative weight tolerance")
    parser.add_argument("--k0", type=int, default=DEFAULT_CUTOFF,
                        help="exact local-window length of the fast history")
    parser.add_argument("--out", type=str, default=None, help="output file or directory")
    parser.add_argument("--config", type=str, default=None,
                        help="flat key=value file supplying defaults for any flag")
    parser.add_argument("--t-final", dest="t_final", type=float, default=None)
    parser.add_argument("--grid-points", dest="grid_points", type=int, default=101)
    # physical parameters (example2)
    parser.add_argument("--alpha", type=float, default=None)
    parser.add_argument("--lambda", dest="lam", type=float, default=None)
    parser.add_argument("--M", type=float, default=None)
    parser.add_argument("--m", type=float, default=None)
    parser.add_argument("--K-perm", dest="K_perm", type=float, default=None)
    parser.add_argument("--Gr", type=float, default=None)
    parser.add_argument("--R", type=float, default=None)
    parser.add_argument("--Pr", type=float, default=None)
    parser.add_argument("--H", type=float, default=None)
    parser.add_argument("--length", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="frac-mhd", description=__doc__)
    parser.add_argument("--version", action="version", version=f"frac-mhd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="single run, write the final-time profile")
    _add_common(p)
    p.add_argument("--trajectory-every", dest="trajectory_every", type=int, default=None)

    p = sub.add_parser("convergence", help="temporal error/order table")
    _add_common(p)
    p.add_argument("--taus", type=_fraction_list, required=True,
                   help="comma-separated step sizes, e.g. 1/200,1/400,1/800")
    p.add_argument("--reference", type=str, default=None,
                   help="explicit reference file (example2)")
    p.add_argument("--tau-ref", dest="tau_ref", type=_fraction, default=None)
    p.add_argument("--n-ref", dest="n_ref", type=int, default=80)

    p = sub.add_parser("spatial", help="error versus polynomial degree")
    _add_common(p)
    p.add_argument("--ns", type=_int_list, required=True,
                   help="comma-separated degrees, e.g. 4,8,12,16")
    p.set_defaults(tau=1.0 / 1000.0)

    p = sub.add_parser("bench", help="direct/fast loop timings over step counts")
    _add_common(p)
    p.add_argument("--ks", type=_int_list, required=True,
                   help="comma-separated step counts, e.g. 4096,8192,16384")
    p.add_argument("--reps", type=int, default=3)

    p = sub.add_parser("diff", help="fast-vs-direct field differences")
    _add_common(p)

    p = sub.add_parser("sweep", help="profile family over one parameter")
    _add_common(p)
    p.add_argument("--param", required=True)
    p.add_argument("--values", type=_float_list, required=True)

    p = sub.add_parser("reference", help="compute and cache a fine reference run")
    _add_common(p)
    p.add_argument("--tau-ref", dest="tau_ref", type=_fraction, required=True)
    p.add_argument("--n-ref", dest="n_ref", type=int, default=80)
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Pre-scan for --config and install its key=value pairs as defaults."""
    if "--config" not in argv:
        return argv
    path = Path(argv[argv.index("--config") + 1])
    defaults = {}
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        defaults[key] = value.strip()
    parsed = {}
    for key, value in defaults.items():
        if key in ("problem", "mode", "out", "reference", "param"):
            parsed[key] = value
        elif key in ("n", "k0", "n_ref", "grid_points", "reps", "trajectory_every"):
            parsed[key] = int(value)
        elif key in ("taus",):
            parsed[key] = _fraction_list(value)
        elif key in ("ns", "ks"):
            parsed[key] = _int_list(value)
        elif key in ("values",):
            parsed[key] = _float_list(value)
        elif key in ("tau", "tau_ref"):
            parsed[key] = _fraction(value)
        else:
            parsed[key] = float(value)
    parser.set_defaults(**parsed)
    return argv


def _physical_params(args) -> PhysicalParams | None:
    overrides = {key: getattr(args, key) for key in _PHYSICAL_FLAGS
                 if getattr(args, key, None) is not None}
    if args.problem != "example2":
        return None
    base = PhysicalParams(gamma=args.gamma, beta=args.beta)
    from dataclasses import replace
    return replace(base, **overrides)


def _run_spec(args) -> RunSpec:
    return RunSpec(problem=args.problem, gamma=args.gamma, beta=args.beta,
                   tau=args.tau, degree=args.n, mode=args.mode, eps=args.eps,
                   k0=args.k0, params=_physical_params(args),
                   t_final=args.t_final, grid_points=args.grid_points,
                   trajectory_every=getattr(args, "trajectory_every", None),
                   out=args.out)


def _dispatch(args, invocation: str) -> int:
    spec = _run_spec(args)
    if args.command == "run":
        solution, summary = cmd_run(spec, invocation)
        errs = summary["errors"]
        line = (f"problem={summary['problem']} tau={summary['tau']:g} "
                f"N={summary['N']} mode={summary['mode']} "
                f"loop={summary['loop_seconds']:.3f}s")
        if errs is not None:
            line += (f" Error={errs['total']:.4e} (u={errs['u']:.4e} "
                     f"v={errs['v']:.4e} theta={errs['theta']:.4e})")
        print(line)
    elif args.command == "convergence":
        out = args.out
        csv_path = None
        if out:
            out_path = Path(out)
            csv_path = out_path if out_path.suffix == ".csv" else out_path / "convergence.csv"
        report = cmd_convergence(spec, args.taus, reference=args.reference,
                                 tau_ref=args.tau_ref, n_ref=args.n_ref,
                                 out=csv_path, invocation=invocation)
        for row in report.rows:
            order = "-" if row.order is None else f"{row.order:.4f}"
            print(f"tau={row.tau:.6g} Error={row.error:.4e} order={order}")
    elif args.command == "spatial":
        csv_path = None
        if args.out:
            out_path = Path(args.out)
            csv_path = out_path if out_path.suffix == ".csv" else out_path / "spatial.csv"
        report = cmd_spatial(spec, args.ns, out=csv_path, invocation=invocation)
        for n, _, _, _, err, plateau in report.rows:
            print(f"N={n} Error={err:.4e}{' (plateau)' if plateau else ''}")
    elif args.command == "bench":
        csv_path = None
        if args.out:
            out_path = Path(args.out)
            csv_path = out_path if out_path.suffix == ".csv" else out_path / "bench.csv"
        report = cmd_bench(spec, args.ks, reps=args.reps, out=csv_path,
                           invocation=invocation)
        for row in report.rows:
            print(f"K={row['K']} mode={row['mode']} loop={row['loop_s']:.4f}s")
        rel = "" if report.reliable else " (unreliable: grid too small)"
        print(f"slopes: direct={report.slopes['direct']:.3f} "
              f"fast={report.slopes['fast']:.3f}{rel}")
    elif args.command == "diff":
        csv_path = None
        if args.out:
            out_path = Path(args.out)
            csv_path = out_path if out_path.suffix == ".csv" else out_path / "diff.csv"
        report = cmd_diff(spec, out=csv_path, invocation=invocation)
        for name, l2, ptw in report.rows:
            print(f"{name}: l2_diff={l2:.4e} max_diff={ptw:.4e}")
    elif args.command == "sweep":
        report = cmd_sweep(spec, args.param, args.values, out_dir=args.out,
                           invocation=invocation)
        for note in report.notes:
            print(note)
    elif args.command == "reference":
        path = cmd_reference(spec, tau_ref=args.tau_ref, n_ref=args.n_ref,
                             invocation=invocation)
        print(f"reference written to {path}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
    except OSError as exc:
        print(f"frac-mhd: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else EXIT_OK
    invocation = shlex.join(["frac-mhd", *argv])
    try:
        return _dispatch(args, invocation)
    except (UsageError, ValueError) as exc:
        print(f"frac-mhd: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CalibrationError, FactorizationError, np.linalg.LinAlgError) as exc:
        print(f"frac-mhd: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"frac-mhd: i/o failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
