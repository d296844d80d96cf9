"""``orbit-bounce`` command line.

Exit codes: 0 success, 2 bad input, 3 integration/solver failure,
4 infeasible or violated, 5 missing certificates, 6 inconclusive,
7 partial result.  Errors are also written to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, analysis, files, penalty, solver, svg
from .integrator import IntegrationError, IntegratorOptions, integrate_bouncing
from .model import SCHEMA, RadialField, WindingSpec

logger = logging.getLogger("orbit_bounce")

EXIT_OK, EXIT_INPUT, EXIT_INTEGRATION, EXIT_INFEASIBLE = 0, 2, 3, 4
EXIT_CERTIFICATES, EXIT_INCONCLUSIVE, EXIT_PARTIAL = 5, 6, 7


class CliError(Exception):
    def __init__(self, code: int, message: str, **details):
        super().__init__(message)
        self.code, self.details = code, details


# --------------------------------------------------------------------------
# manifest
# --------------------------------------------------------------------------

def _manifest(args, outputs: list, started: float) -> dict:
    opts = {k: v for k, v in sorted(vars(args).items())
            if k not in ("func", "out", "problem", "trajectory")}
    body = {
        "schema": SCHEMA,
        "command": args.command,
        "problem_sha256": files.sha256_file(args.problem) if getattr(args, "problem", None) else None,
        "options": opts,
        "version": __version__,
        "outputs": sorted(outputs),
    }
    if getattr(args, "trajectory", None):
        body["trajectory_sha256"] = files.sha256_file(args.trajectory)
    digest = hashlib.sha256(json.dumps(body, sort_keys=True, default=str).encode()).hexdigest()
    body["manifest_hash"] = digest
    body["wall_clock"] = {"started": started, "elapsed_s": time.time() - started}
    return body


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _jobs(args) -> int:
    if args.jobs is not None:
        return args.jobs
    env = os.environ.get("ORBIT_BOUNCE_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise CliError(EXIT_INPUT, f"ORBIT_BOUNCE_JOBS must be an integer, got {env!r}")
    return 1


def _load(args):
    if not args.problem:
        raise CliError(EXIT_INPUT, "--problem is required")
    try:
        return files.load_problem(args.problem)
    except files.ProblemFileError as exc:
        raise CliError(EXIT_INPUT, str(exc))


def _shooting(args) -> solver.ShootingConfig:
    cfg = solver.ShootingConfig(jobs=_jobs(args))
    if args.tol is not None:
        cfg = solver.ShootingConfig(residual_tol=args.tol, jobs=cfg.jobs)
    return cfg


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_simulate(args) -> tuple[int, list, dict]:
    problem, _ = _load(args)
    out = _out(args)
    t1 = args.t0 + problem.T if args.t1 is None else args.t1
    opts = IntegratorOptions() if args.tol is None else \
        IntegratorOptions(rel_tol=args.tol, abs_tol=1e-2 * args.tol)
    if args.L < 0:
        raise CliError(EXIT_INPUT, "L must be non-negative")
    if t1 < args.t0:
        raise CliError(EXIT_INPUT, f"--t1 ({t1}) precedes --t0 ({args.t0})")
    try:
        traj = integrate_bouncing(RadialField(problem, args.L), (args.r0, args.v0),
                                  (args.t0, t1), opts, theta0=args.theta0)
    except IntegrationError as exc:
        raise CliError(EXIT_INTEGRATION, str(exc), last_t=exc.last_t)
    except ValueError as exc:
        raise CliError(EXIT_INPUT, str(exc))
    files.write_trajectory_csv(traj, out / "trajectory.csv", per_arc=args.per_arc)
    svg.write_plots(traj, out / "time.svg", out / "phase.svg")
    summary = {"schema": SCHEMA, "impacts": len(traj.impacts), "contacts": len(traj.contacts),
               "arcs": len(traj.arcs), "status": traj.status,
               "diagnostics": list(traj.diagnostics)}
    files.write_json(out / "summary.json", summary)
    return EXIT_OK, ["trajectory.csv", "time.svg", "phase.svg", "summary.json"], summary


def cmd_find_orbit(args):
    problem, raw = _load(args)
    out = _out(args)
    try:
        spec = WindingSpec(args.k, args.nu)
    except ValueError as exc:
        raise CliError(EXIT_INPUT, str(exc))
    if problem.rates is None:
        raise CliError(EXIT_INPUT, "problem file needs 'rates' [mu_check, mu_hat] to pick a solver")
    band = analysis.classify_band(*problem.rates, problem.T)
    cfg = _shooting(args)
    try:
        if band.kind == "nonresonant":
            res = solver.continue_in_L(problem, spec, "bouncing", cfg, R=args.R)
        elif band.kind == "resonant":
            if "ll" not in raw:
                raise CliError(EXIT_CERTIFICATES,
                               "resonant band: supply h_plus/h_minus certificates in an 'll' block",
                               band=band.as_dict())
            ll = files.ll_from_dict(raw["ll"], problem)
            res = solver.solve_resonant(problem, spec, ll, cfg, n_ladder=args.n_ladder)
        else:
            raise CliError(EXIT_INFEASIBLE, "growth band spans an asymptote", band=band.as_dict())
    except files.ProblemFileError as exc:
        raise CliError(EXIT_INPUT, str(exc))
    except solver.InfeasibleSpec as exc:
        raise CliError(EXIT_INFEASIBLE, str(exc), theta_range=list(exc.theta_range),
                       L_range=list(exc.L_range), target=spec.theta_target)
    except solver.LLRefusal as exc:
        code = EXIT_INCONCLUSIVE if any(r.verdict == "inconclusive" for r in exc.reports.values()) \
            and not any(r.verdict == "violated" for r in exc.reports.values()) else EXIT_INFEASIBLE
        raise CliError(code, str(exc), reports={k: r.as_dict() for k, r in exc.reports.items()})
    except (solver.ShootingFailure, IntegrationError) as exc:
        raise CliError(EXIT_INTEGRATION, str(exc))
    report = res.as_dict()
    report["band"] = band.as_dict()
    files.write_json(out / "orbit.json", report)
    files.write_trajectory_csv(res.trajectory, out / "profile.csv", per_arc=args.per_arc)
    svg.write_plots(res.trajectory, out / "time.svg", out / "phase.svg")
    return EXIT_OK, ["orbit.json", "profile.csv", "time.svg", "phase.svg"], report


def _parse_rates(args):
    if args.rates:
        rates = args.rates
        T = args.T
        if T is None:
            if not args.problem:
                raise CliError(EXIT_INPUT, "--T is required with --rates")
            T = _load(args)[0].T
    else:
        problem, _ = _load(args)
        if problem.rates is None:
            raise CliError(EXIT_INPUT, "problem file has no 'rates'")
        rates, T = list(problem.rates), problem.T
    if len(rates) not in (2, 4):
        raise CliError(EXIT_INPUT, "give two rates (mu_check mu_hat) or four (plus nu_check nu_hat)")
    if not all(math.isfinite(r) and r > 0 for r in rates):
        raise CliError(EXIT_INPUT, "rates must be positive and finite")
    if not (math.isfinite(T) and T > 0):
        raise CliError(EXIT_INPUT, "T must be positive")
    return rates, T


def cmd_classify(args):
    rates, T = _parse_rates(args)
    out = _out(args)
    try:
        if len(rates) == 2:
            cls = analysis.classify_band(rates[0], rates[1], T)
            report = {"schema": SCHEMA, "type": "band", "T": T, "rates": rates, **cls.as_dict()}
            if cls.kind == "nonresonant":
                report["asymptotes"] = [analysis.mu_asymptote(cls.N, T),
                                        analysis.mu_asymptote(cls.N + 1, T)]
        else:
            cls = analysis.classify_asymmetric(*rates, T)
            report = {"schema": SCHEMA, "type": "asymmetric", "T": T, "rates": rates,
                      **cls.as_dict()}
            if not cls.admissible:
                report["violated"] = ("no integer N >= 1 with T/((N+1) pi) < "
                                      "1/sqrt(mu_hat)+1/sqrt(nu_hat) <= "
                                      "1/sqrt(mu_check)+1/sqrt(nu_check) < T/(N pi)")
    except ValueError as exc:
        raise CliError(EXIT_INPUT, str(exc))
    files.write_json(out / "classify.json", report)
    return EXIT_OK, ["classify.json"], report


def cmd_ll_check(args):
    problem, raw = _load(args)
    out = _out(args)
    if "ll" not in raw:
        raise CliError(EXIT_CERTIFICATES, "problem file has no 'll' block with h_plus/h_minus")
    try:
        ll = files.ll_from_dict(raw["ll"], problem)
        if ll.band.N == 0:
            reps = {"LLcond2N0": analysis.ll_check_n0(ll, tau_grid=args.tau_grid)}
        else:
            reps = analysis.ll_check(ll, args.tau_grid)
    except files.ProblemFileError as exc:
        raise CliError(EXIT_INPUT, str(exc))
    except ValueError as exc:
        raise CliError(EXIT_CERTIFICATES, str(exc))
    report = [r.as_dict() for r in reps.values()]
    files.write_json(out / "ll_report.json", report)
    verdicts = [r.verdict for r in reps.values()]
    if "violated" in verdicts:
        code = EXIT_INFEASIBLE
    elif "inconclusive" in verdicts:
        code = EXIT_INCONCLUSIVE
    else:
        code = EXIT_OK
    return code, ["ll_report.json"], report


def cmd_penalty_converge(args):
    problem, raw = _load(args)
    out = _out(args)
    if args.L is None and args.k is None:
        raise CliError(EXIT_INPUT, "give --L for a fixed angular momentum or --k/--nu")
    spec = None
    if args.L is None:
        try:
            spec = WindingSpec(args.k, args.nu)
        except ValueError as exc:
            raise CliError(EXIT_INPUT, str(exc))
    band = None
    if args.resonant:
        if "ll" not in raw:
            raise CliError(EXIT_CERTIFICATES, "--resonant needs an 'll' block")
        N = int(raw["ll"].get("N", 0))
        band = (analysis.mu_asymptote(N, problem.T), analysis.mu_asymptote(N + 1, problem.T))
    try:
        res = penalty.convergence_ladder(
            problem, args.L, spec, args.ladder, delta=args.delta, band=band,
            cfg=_shooting(args), exact="auto" if (args.exact and args.L is not None) else None,
            allow_stiff=args.allow_stiff)
    except ValueError as exc:
        raise CliError(EXIT_INPUT, str(exc))
    except (solver.ShootingFailure, IntegrationError) as exc:
        raise CliError(EXIT_INTEGRATION, f"exact bouncing orbit: {exc}")
    outputs = ["ladder.json"]
    for r in res.rungs:
        name = f"rung_n{int(r.n)}.csv"
        files.write_trajectory_csv(r.solution.trajectory, out / name, per_arc=args.per_arc)
        outputs.append(name)
    report = {"schema": SCHEMA, "rungs": res.report(), "failure": res.failure}
    files.write_json(out / "ladder.json", report)
    if res.failure is not None:
        best = res.rungs[-1].as_dict() if res.rungs else None
        raise CliError(EXIT_PARTIAL, f"ladder stopped at n={res.failure['n']:g}: "
                       f"{res.failure['reason']}", best_rung=best, outputs=outputs)
    return EXIT_OK, outputs, report


def cmd_validate(args):
    problem, _ = _load(args)
    out = _out(args)
    if not args.trajectory:
        raise CliError(EXIT_INPUT, "--trajectory is required")
    try:
        traj = files.read_trajectory_csv(args.trajectory, problem.R0)
    except files.TrajectoryFileError as exc:
        raise CliError(EXIT_INPUT, str(exc))
    L = args.L if args.L is not None else files.estimate_L(traj)
    if L < 0:
        raise CliError(EXIT_INPUT, "L must be non-negative")
    tol = analysis.ValidationTolerances() if args.tol is None else analysis.ValidationTolerances(
        ode=args.tol, reflection=args.tol, wall=args.tol, contact=args.tol)
    rep = analysis.validate_bouncing(traj, RadialField(problem, L), tol)
    report = rep.as_dict()
    report["L"] = L
    files.write_json(out / "validation.json", report)
    return (EXIT_OK if rep.passed else EXIT_INFEASIBLE), ["validation.json"], report


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def _common(p):
    p.add_argument("--problem", metavar="FILE", help="problem JSON file")
    p.add_argument("--out", metavar="DIR", default=".", help="output directory")
    p.add_argument("--tol", type=float, default=None, help="main tolerance of the command")
    p.add_argument("--jobs", type=int, default=None,
                   help="worker threads (default: ORBIT_BOUNCE_JOBS or 1)")
    p.add_argument("--seed", type=int, default=0, help="seed recorded in the manifest")
    p.add_argument("--per-arc", type=int, default=64, help="CSV samples per smooth arc")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="orbit-bounce", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate a bouncing trajectory")
    _common(p)
    p.add_argument("--r0", type=float, default=0.0, help="initial rho - R0")
    p.add_argument("--v0", type=float, default=1.0, help="initial rho'")
    p.add_argument("--L", type=float, default=0.0, help="angular momentum")
    p.add_argument("--theta0", type=float, default=0.0)
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--t1", type=float, default=None, help="end time (default: one period)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("find-orbit", help="solve for a (k, nu)-rotating periodic orbit")
    _common(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--nu", type=int, default=1)
    p.add_argument("--R", type=float, default=None,
                   help="amplitude bound for the k_min feasibility check")
    p.add_argument("--n-ladder", type=float, nargs="+", default=[1_000, 10_000])
    p.set_defaults(func=cmd_find_orbit)

    p = sub.add_parser("classify", help="classify a growth band")
    _common(p)
    p.add_argument("--rates", type=float, nargs="+",
                   help="mu_check mu_hat [nu_check nu_hat]")
    p.add_argument("--T", type=float, default=None)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("ll-check", help="check Landesman-Lazer sign conditions")
    _common(p)
    p.add_argument("--tau-grid", type=int, default=512)
    p.set_defaults(func=cmd_ll_check)

    p = sub.add_parser("penalty-converge", help="stiff-spring ladder n -> infinity")
    _common(p)
    p.add_argument("--ladder", type=float, nargs="+", default=list(penalty.DEFAULT_LADDER))
    p.add_argument("--L", type=float, default=None, help="fixed angular momentum")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--nu", type=int, default=1)
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--resonant", action="store_true", help="use the kappa-rescaled fields")
    p.add_argument("--no-exact", dest="exact", action="store_false",
                   help="skip the exact bouncing orbit at fixed L")
    p.add_argument("--allow-stiff", action="store_true")
    p.set_defaults(func=cmd_penalty_converge)

    p = sub.add_parser("validate", help="check a trajectory CSV for the bouncing-solution properties")
    _common(p)
    p.add_argument("--trajectory", metavar="CSV")
    p.add_argument("--L", type=float, default=None,
                   help="angular momentum (default: estimated from the angle column)")
    p.set_defaults(func=cmd_validate)
    return ap


def _error(code, message, **details):
    payload = {"schema": SCHEMA, "error": message, "exit_code": code}
    payload.update(details)
    sys.stderr.write(json.dumps(payload, default=str) + "\n")
    return code


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            return 0
        return _error(EXIT_INPUT, "invalid command line")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.time()
    outputs: list = []
    try:
        code, outputs, result = args.func(args)
    except CliError as exc:
        code = exc.code
        outputs = exc.details.pop("outputs", [])
        _error(code, str(exc), **exc.details)
    except Exception as exc:       # unexpected numerical breakdown
        logger.debug("unhandled error", exc_info=True)
        code = EXIT_INTEGRATION
        _error(code, f"{type(exc).__name__}: {exc}")
    else:
        if args.command in ("classify", "ll-check", "validate", "find-orbit"):
            sys.stdout.write(json.dumps(result, indent=2, default=str) + "\n")
    if code != EXIT_INPUT or outputs:
        try:
            out = _out(args)
            files.write_json(out / "manifest.json", _manifest(args, outputs, started))
        except OSError as exc:
            return _error(EXIT_INPUT, f"cannot write manifest: {exc}")
    return code


if __name__ == "__main__":
    sys.exit(main())
