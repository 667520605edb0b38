"""Study harness: single runs, convergence and spatial-accuracy studies,
fast-vs-direct benchmarks and field comparisons, physical parameter
sweeps.  Every artifact is a CSV with a provenance comment line, and every
study is deterministic for identical inputs (benchmark timings aside).
"""

from __future__ import annotations

import csv
import json
import math
import statistics
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .fbdf import DEFAULT_CUTOFF, DEFAULT_EPS
from .models import PhysicalParams, ProblemSpec, example1_problem, example2_problem, reconstruct_fields
from .solver import Solution, SolverConfig, run
from .spectral import build_space, eval_expansion, gauss_rule, l2_error

__all__ = [
    "RunSpec",
    "ConvergenceReport",
    "SpatialReport",
    "BenchReport",
    "DiffReport",
    "SweepReport",
    "UsageError",
    "cmd_run",
    "cmd_convergence",
    "cmd_reference",
    "cmd_spatial",
    "cmd_bench",
    "cmd_diff",
    "cmd_sweep",
]


class UsageError(ValueError):
    """Invalid request that the caller can correct (exit code 2)."""


# ----------------------------------------------------------------------
# Specs and CSV plumbing
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class RunSpec:
    """Everything needed to reproduce one solver run."""

    problem: str = "example1"
    gamma: float = 0.4
    beta: float = 0.6
    tau: float = 1.0 / 200.0
    degree: int = 32
    mode: str = "direct"
    eps: float = DEFAULT_EPS
    k0: int = DEFAULT_CUTOFF
    params: PhysicalParams | None = None
    t_final: float | None = None
    grid_points: int = 101
    trajectory_every: int | None = None
    out: str | None = None


def _steps_for(t_final: float, tau: float) -> int:
    steps = round(t_final / tau)
    if steps < 1 or abs(steps * tau - t_final) > 1e-9 * max(1.0, t_final):
        raise UsageError(f"final time {t_final} is not an integer multiple of tau={tau}")
    return steps


def resolve(spec: RunSpec) -> tuple[ProblemSpec, SolverConfig]:
    """Turn a run spec into a (problem, config) pair."""
    if spec.problem == "example1":
        problem = example1_problem(spec.gamma, spec.beta)
    elif spec.problem == "example2":
        params = spec.params if spec.params is not None else PhysicalParams(
            gamma=spec.gamma, beta=spec.beta)
        problem = example2_problem(params)
    else:
        raise UsageError(f"unknown problem {spec.problem!r}")
    t_final = spec.t_final if spec.t_final is not None else problem.t_final
    problem.check_t_final(t_final)
    config = SolverConfig(tau=spec.tau, steps=_steps_for(t_final, spec.tau),
                          degree=spec.degree, mode=spec.mode, eps=spec.eps,
                          k0=spec.k0, trajectory_every=spec.trajectory_every,
                          grid_points=spec.grid_points)
    return problem, config


def _write_csv(path: Path, header: list[str], rows: list[list], invocation: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# frac-mhd {__version__} {invocation}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


# ----------------------------------------------------------------------
# Single run
# ----------------------------------------------------------------------

def cmd_run(spec: RunSpec, invocation: str = "api run") -> tuple[Solution, dict]:
    """Run once; write the final-time profile (and optional trajectory).

    The profile CSV has columns ``z,u,v,theta`` with physical fields
    (boundary lifting added back).  Returns the solution and a summary
    dict with errors when exact solutions exist.
    """
    problem, config = resolve(spec)
    solution = run(problem, config)
    t_final = config.steps * config.tau
    z = np.linspace(0.0, problem.length, spec.grid_points)
    u = eval_expansion(solution.space, solution.u, z)
    v = eval_expansion(solution.space, solution.v, z)
    th = eval_expansion(solution.space, solution.theta, z)
    u, v, th = reconstruct_fields(problem, u, v, th, z, t_final)
    summary = {"problem": spec.problem, "tau": spec.tau, "N": spec.degree,
               "mode": spec.mode, "t_final": t_final,
               "loop_seconds": solution.loop_seconds,
               "errors": solution.errors}
    if spec.out:
        out = Path(spec.out)
        _write_csv(out, ["z", "u", "v", "theta"],
                   [[_fmt(zi), _fmt(ui), _fmt(vi), _fmt(ti)]
                    for zi, ui, vi, ti in zip(z, u, v, th)], invocation)
        if spec.trajectory_every:
            rows = []
            for k, t, uk, vk, tk in solution.trajectory:
                fu = eval_expansion(solution.space, uk, z)
                fv = eval_expansion(solution.space, vk, z)
                ft = eval_expansion(solution.space, tk, z)
                fu, fv, ft = reconstruct_fields(problem, fu, fv, ft, z, t)
                for name, vals in (("u", fu), ("v", fv), ("theta", ft)):
                    rows.extend([[k, _fmt(t), name, _fmt(zi), _fmt(val)]
                                 for zi, val in zip(z, vals)])
            _write_csv(out.with_name(out.stem + "_trajectory.csv"),
                       ["k", "t", "field", "z", "value"], rows, invocation)
    return solution, summary


# ----------------------------------------------------------------------
# Reference runs (self-convergence for the physical problem)
# ----------------------------------------------------------------------

def reference_path(out_dir, problem: str, gamma: float, beta: float,
                   degree: int, steps: int) -> Path:
    return Path(out_dir) / "references" / (
        f"ref_{problem}_g{gamma:g}_b{beta:g}_N{degree}_K{steps}.npz")


def cmd_reference(spec: RunSpec, tau_ref: float, n_ref: int = 80,
                  invocation: str = "api reference") -> Path:
    """Compute and cache a fine reference run (fast mode by default)."""
    ref_spec = replace(spec, tau=tau_ref, degree=n_ref, mode="fast",
                       trajectory_every=None)
    problem, config = resolve(ref_spec)
    solution = run(problem, config)
    path = reference_path(spec.out or ".", spec.problem, spec.gamma, spec.beta,
                          n_ref, config.steps)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {"problem": spec.problem, "gamma": spec.gamma, "beta": spec.beta,
            "degree": n_ref, "tau": tau_ref, "steps": config.steps,
            "length": problem.length, "t_final": config.steps * config.tau,
            "mode": "fast", "eps": config.eps, "k0": config.k0,
            "invocation": invocation}
    np.savez(path, u=solution.u, v=solution.v, theta=solution.theta,
             meta=json.dumps(meta, sort_keys=True))
    return path


def _reference_errors(solution: Solution, ref: dict, length: float) -> dict:
    """L2 distances between a run and a stored reference at final time."""
    n_fine = 2 * max(solution.space.degree, ref["degree"]) + 8
    rule = gauss_rule(n_fine, length)
    ref_space = build_space(ref["degree"], length)
    out = {}
    for name, coefs in (("u", solution.u), ("v", solution.v), ("theta", solution.theta)):
        mine = eval_expansion(solution.space, coefs, rule.points)
        theirs = eval_expansion(ref_space, ref[name], rule.points)
        out[name] = float(np.sqrt(np.sum(rule.weights * (mine - theirs) ** 2)))
    out["total"] = out["u"] + out["v"] + out["theta"]
    return out


def load_reference(path) -> dict:
    data = np.load(path, allow_pickle=False)
    meta = json.loads(str(data["meta"]))
    meta.update({"u": data["u"], "v": data["v"], "theta": data["theta"]})
    return meta


# ----------------------------------------------------------------------
# Convergence study
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceRow:
    tau: float
    degree: int
    err_u: float
    err_v: float
    err_theta: float
    error: float
    order: float | None


@dataclass
class ConvergenceReport:
    mode: str
    rows: list[ConvergenceRow] = field(default_factory=list)

    @property
    def orders(self) -> list[float]:
        return [r.order for r in self.rows if r.order is not None]

    @property
    def errors(self) -> list[float]:
        return [r.error for r in self.rows]


def cmd_convergence(spec: RunSpec, taus, reference: str | None = None,
                    tau_ref: float | None = None, n_ref: int = 80,
                    out: str | None = None,
                    invocation: str = "api convergence") -> ConvergenceReport:
    """Temporal error table over a decreasing sequence of step sizes.

    The manufactured problem is compared with its exact solutions; the
    physical problem needs a stored reference run (``reference`` path, or
    the cached default named after ``tau_ref``, which itself defaults to
    an eighth of the smallest tau in the study).
    """
    taus = sorted(taus, reverse=True)
    if len(taus) < 2:
        raise UsageError("a convergence study needs at least two tau values")
    ref = None
    if spec.problem == "example2":
        if reference is None:
            t_final = spec.t_final if spec.t_final is not None else (
                spec.params.t_final if spec.params is not None else PhysicalParams().t_final)
            tr = tau_ref if tau_ref is not None else min(taus) / 8.0
            reference = reference_path(spec.out or ".", spec.problem, spec.gamma,
                                       spec.beta, n_ref, _steps_for(t_final, tr))
        if not Path(reference).exists():
            raise UsageError(
                f"no reference run at {reference}; create it first with the "
                f"'reference' subcommand (same problem, gamma, beta and output "
                f"directory, e.g. --tau-ref {tau_ref if tau_ref else min(taus) / 8.0:g})")
        ref = load_reference(reference)

    report = ConvergenceReport(mode=spec.mode)
    prev: ConvergenceRow | None = None
    for tau in taus:
        problem, config = resolve(replace(spec, tau=tau))
        solution = run(problem, config)
        if ref is not None:
            errs = _reference_errors(solution, ref, problem.length)
        else:
            errs = solution.errors
        order = None
        if prev is not None:
            order = math.log(prev.error / errs["total"]) / math.log(prev.tau / tau)
        row = ConvergenceRow(tau=tau, degree=spec.degree, err_u=errs["u"],
                             err_v=errs["v"], err_theta=errs["theta"],
                             error=errs["total"], order=order)
        report.rows.append(row)
        prev = row
    if out:
        _write_csv(Path(out), ["tau", "N", "err_u", "err_v", "err_theta", "error", "order"],
                   [[_fmt(r.tau), r.degree, _fmt(r.err_u), _fmt(r.err_v),
                     _fmt(r.err_theta), _fmt(r.error), _fmt(r.order)]
                    for r in report.rows], invocation)
    return report


# ----------------------------------------------------------------------
# Spatial accuracy study
# ----------------------------------------------------------------------

@dataclass
class SpatialReport:
    rows: list[tuple[int, float, float, float, float, bool]] = field(default_factory=list)
    plateau_degree: int | None = None


def cmd_spatial(spec: RunSpec, degrees, out: str | None = None,
                invocation: str = "api spatial") -> SpatialReport:
    """Error versus polynomial degree at fixed small tau.

    Rows are flagged as plateaued once the error stops improving by more
    than a factor relative to the finest degree, i.e. the spatial error
    has dipped below the temporal floor.
    """
    degrees = sorted(degrees)
    results = []
    for n in degrees:
        problem, config = resolve(replace(spec, degree=n))
        solution = run(problem, config)
        errs = solution.errors
        results.append((n, errs["u"], errs["v"], errs["theta"], errs["total"]))
    floor = results[-1][4]
    report = SpatialReport()
    for n, eu, ev, et, total in results:
        plateaued = total <= 3.0 * floor
        if plateaued and report.plateau_degree is None:
            report.plateau_degree = n
        report.rows.append((n, eu, ev, et, total, plateaued))
    if out:
        _write_csv(Path(out), ["N", "err_u", "err_v", "err_theta", "error", "plateau"],
                   [[n, _fmt(eu), _fmt(ev), _fmt(et), _fmt(tot), int(flag)]
                    for n, eu, ev, et, tot, flag in report.rows], invocation)
    return report


# ----------------------------------------------------------------------
# Benchmarks
# ----------------------------------------------------------------------

@dataclass
class BenchReport:
    rows: list[dict] = field(default_factory=list)
    slopes: dict = field(default_factory=dict)
    reliable: bool = True


def cmd_bench(spec: RunSpec, step_counts, reps: int = 3, out: str | None = None,
              invocation: str = "api bench") -> BenchReport:
    """Time the direct and fast time loops over a grid of step counts.

    The final time is held at the problem default, so tau = T/K per run.
    Loop seconds are the median of ``reps`` repetitions, setup excluded.
    Log-log slopes of loop time versus K are least-squares fits; they are
    marked unreliable when the grid is too small for timing noise.
    """
    step_counts = sorted(step_counts)
    if len(step_counts) < 2:
        raise UsageError("benchmark needs at least two step counts")
    t_final = spec.t_final
    if t_final is None:
        t_final = 1.0 if spec.problem == "example1" else (
            spec.params.t_final if spec.params is not None else PhysicalParams().t_final)
    report = BenchReport()
    times: dict[str, list[float]] = {"direct": [], "fast": []}
    for steps in step_counts:
        tau = t_final / steps
        for mode in ("direct", "fast"):
            runs = []
            last = None
            for _ in range(reps):
                problem, config = resolve(replace(
                    spec, tau=tau, mode=mode, t_final=t_final))
                last = run(problem, config)
                runs.append(last.loop_seconds)
            loop_s = statistics.median(runs)
            times[mode].append(loop_s)
            q = sum(d["Q"] for d in last.fast_diagnostics.values())
            report.rows.append({
                "K": steps, "mode": mode,
                "setup_s": last.setup_seconds, "loop_s": loop_s,
                "peak_history_vectors": last.peak_history_vectors,
                "Q": q,
            })
    logk = np.log(np.asarray(step_counts, dtype=np.float64))
    for mode in ("direct", "fast"):
        slope = float(np.polyfit(logk, np.log(np.asarray(times[mode])), 1)[0])
        report.slopes[mode] = slope
    report.reliable = (len(step_counts) >= 3 and min(step_counts) >= 1024
                       and min(min(v) for v in times.values()) >= 0.02)
    if out:
        _write_csv(Path(out), ["K", "mode", "setup_s", "loop_s"],
                   [[r["K"], r["mode"], _fmt(r["setup_s"]), _fmt(r["loop_s"])]
                    for r in report.rows], invocation)
    return report


# ----------------------------------------------------------------------
# Fast-vs-direct comparison
# ----------------------------------------------------------------------

@dataclass
class DiffReport:
    rows: list[tuple[str, float, float]] = field(default_factory=list)

    @property
    def max_l2(self) -> float:
        return max(r[1] for r in self.rows)

    @property
    def max_pointwise(self) -> float:
        return max(r[2] for r in self.rows)


def cmd_diff(spec: RunSpec, out: str | None = None,
             invocation: str = "api diff") -> DiffReport:
    """Final-time differences between the two history evaluations."""
    problem, _ = resolve(spec)
    sol_direct = run(*resolve(replace(spec, mode="direct")))
    sol_fast = run(*resolve(replace(spec, mode="fast")))
    z = np.linspace(0.0, problem.length, 1001)
    report = DiffReport()
    for name in ("u", "v", "theta"):
        dc = getattr(sol_fast, name) - getattr(sol_direct, name)
        l2 = l2_error(sol_direct.space, dc, lambda zz: np.zeros_like(zz))
        ptw = float(np.max(np.abs(eval_expansion(sol_direct.space, dc, z))))
        report.rows.append((name, l2, ptw))
    if out:
        _write_csv(Path(out), ["field", "l2_diff", "max_diff"],
                   [[name, _fmt(l2), _fmt(ptw)] for name, l2, ptw in report.rows],
                   invocation)
    return report


# ----------------------------------------------------------------------
# Parameter sweeps
# ----------------------------------------------------------------------

SWEEPABLE = ("gamma", "beta", "alpha", "lambda", "M", "m", "K_perm",
             "Gr", "R", "Pr", "H", "t")


@dataclass
class SweepReport:
    param: str
    values: list[float]
    metrics: list[dict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)


def _trend(name: str, series: list[float]) -> str:
    if all(b > a for a, b in zip(series, series[1:])):
        direction = "increasing"
    elif all(b < a for a, b in zip(series, series[1:])):
        direction = "decreasing"
    else:
        direction = "not monotone"
    return f"{name} {direction}"


def cmd_sweep(spec: RunSpec, param: str, values, out_dir: str | None = None,
              invocation: str = "api sweep") -> SweepReport:
    """One profile per parameter value plus a monotonicity summary.

    Profiles are written as ``sweep_<param>_<value>.csv`` next to a
    sidecar ``sweep_<param>_summary.txt`` with the max|u|, max|v| and
    max theta trends for eyeballing against the reference figures.
    """
    if param not in SWEEPABLE:
        raise UsageError(f"unknown sweep parameter {param!r}; choose from {SWEEPABLE}")
    report = SweepReport(param=param, values=list(values))
    base_params = spec.params if spec.params is not None else PhysicalParams(
        gamma=spec.gamma, beta=spec.beta)
    for value in values:
        if param == "t":
            sub = replace(spec, params=base_params, t_final=float(value))
        elif param in ("gamma", "beta"):
            orders = {"gamma": base_params.gamma, "beta": base_params.beta,
                      param: float(value)}
            sub = replace(spec, **orders)
            if spec.problem == "example2":
                sub = replace(sub, params=replace(base_params, **{param: float(value)}))
        else:
            key = "lam" if param == "lambda" else param
            sub = replace(spec, params=replace(base_params, **{key: float(value)}))
        problem, config = resolve(sub)
        solution = run(problem, config)
        t_final = config.steps * config.tau
        z = np.linspace(0.0, problem.length, spec.grid_points)
        u = eval_expansion(solution.space, solution.u, z)
        v = eval_expansion(solution.space, solution.v, z)
        th = eval_expansion(solution.space, solution.theta, z)
        u, v, th = reconstruct_fields(problem, u, v, th, z, t_final)
        report.metrics.append({"value": float(value),
                               "max_abs_u": float(np.max(np.abs(u))),
                               "max_abs_v": float(np.max(np.abs(v))),
                               "max_theta": float(np.max(th))})
        if out_dir:
            path = Path(out_dir) / f"sweep_{param}_{value:g}.csv"
            _write_csv(path, ["z", "u", "v", "theta"],
                       [[_fmt(zi), _fmt(ui), _fmt(vi), _fmt(ti)]
                        for zi, ui, vi, ti in zip(z, u, v, th)], invocation)
    for metric in ("max_abs_u", "max_abs_v", "max_theta"):
        report.notes.append(_trend(f"{metric} vs {param}",
                                   [m[metric] for m in report.metrics]))
    if out_dir:
        side = Path(out_dir) / f"sweep_{param}_summary.txt"
        side.parent.mkdir(parents=True, exist_ok=True)
        lines = [f"# frac-mhd {__version__} {invocation}"]
        for m in report.metrics:
            lines.append(f"{param}={m['value']:g}: max|u|={m['max_abs_u']:.6g} "
                         f"max|v|={m['max_abs_v']:.6g} max(theta)={m['max_theta']:.6g}")
        lines.extend(report.notes)
        side.write_text("\n".join(lines) + "\n")
    return report
