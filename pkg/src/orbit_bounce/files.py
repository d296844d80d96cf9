"""Problem files, trajectory CSV and JSON reports."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path
from typing import Optional

import numpy as np

from .analysis import AsymmetricBand, LLProblem, ResonanceBand
from .expr import ExpressionError, compile_expression
from .model import (SCHEMA, BounceEvent, BouncingTrajectory, CentralForceProblem, ContactInterval,
                    SampledArc, problem_from_force)

CSV_HEADER = ("t", "rho", "rho_prime", "theta", "event")
EVENTS = ("", "impact", "contact_start", "contact_end")


class ProblemFileError(ValueError):
    pass


class TrajectoryFileError(ValueError):
    pass


def _num(d, key, default=None, positive=False):
    if key not in d:
        if default is None:
            raise ProblemFileError(f"missing field {key!r}")
        return default
    val = d[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        raise ProblemFileError(f"field {key!r} must be a finite number")
    if positive and not val > 0:
        raise ProblemFileError(f"field {key!r} must be positive")
    return float(val)


def problem_from_dict(d: dict) -> CentralForceProblem:
    if not isinstance(d, dict):
        raise ProblemFileError("problem file must hold a JSON object")
    schema = d.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise ProblemFileError(f"unsupported schema {schema!r}; expected {SCHEMA!r}")
    T = _num(d, "T", positive=True)
    R0 = _num(d, "R0", positive=True)
    L0 = _num(d, "L0", 10.0, positive=True)
    force = d.get("force")
    if not isinstance(force, dict) or "kind" not in force:
        raise ProblemFileError("field 'force' must be an object with a 'kind'")
    params = dict(force.get("params", {}))
    if force["kind"] == "expression" and d.get("rates") is not None:
        params.setdefault("rates", d["rates"])
    try:
        prob = problem_from_force(force["kind"], params, T, R0, L0, name=str(d.get("name", "")))
    except (TypeError, KeyError, ExpressionError) as exc:
        raise ProblemFileError(f"bad force description: {exc}") from None
    except ValueError as exc:
        raise ProblemFileError(str(exc)) from None
    if d.get("rates") is not None:
        rates = d["rates"]
        if not (isinstance(rates, list) and len(rates) == 2 and
                all(isinstance(x, (int, float)) and x > 0 for x in rates)):
            raise ProblemFileError("field 'rates' must be [mu_check, mu_hat] with positive entries")
        prob = CentralForceProblem(prob.f, T, R0, L0, tuple(float(x) for x in rates),
                                   prob.force_spec, prob.name)
    return prob


def problem_to_dict(problem: CentralForceProblem) -> dict:
    if problem.force_spec is None:
        raise ValueError("only catalog problems can be serialised")
    d = {"schema": SCHEMA, "T": problem.T, "R0": problem.R0, "L0": problem.L0,
         "force": problem.force_spec}
    if problem.rates is not None:
        d["rates"] = list(problem.rates)
    if problem.name:
        d["name"] = problem.name
    return d


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"{path}: malformed JSON ({exc.msg} at line {exc.lineno})") from None
    except OSError as exc:
        raise ProblemFileError(f"{path}: {exc.strerror}") from None


def load_problem(path):
    """``(problem, raw_dict)`` from a problem file."""
    raw = read_json(path)
    return problem_from_dict(raw), raw


def _expr_t(src, T, what):
    if isinstance(src, (int, float)) and not isinstance(src, bool):
        val = float(src)
        return lambda t: val
    try:
        fn = compile_expression(str(src), ["t"], T=T)
    except ExpressionError as exc:
        raise ProblemFileError(f"{what}: {exc}") from None
    return lambda t: float(fn(t))


def ll_from_dict(d: dict, problem: CentralForceProblem) -> LLProblem:
    """The ``ll`` block: ``{N, h_plus, h_minus, eta_hat, eps_floor, mode}``."""
    if not isinstance(d, dict):
        raise ProblemFileError("field 'll' must be an object")
    N = d.get("N")
    if not isinstance(N, int) or isinstance(N, bool) or N < 0:
        raise ProblemFileError("ll.N must be a non-negative integer")
    mode = d.get("mode", "user-supplied")
    T = problem.T
    hp = _expr_t(d["h_plus"], T, "ll.h_plus") if "h_plus" in d else None
    hm = _expr_t(d["h_minus"], T, "ll.h_minus") if "h_minus" in d else None
    eps = d.get("eps_floor")
    try:
        return LLProblem(ResonanceBand(N, T), float(d.get("eta_hat", 0.0)), hp, hm, mode=mode,
                         problem=problem, eps_floor=None if eps is None else float(eps))
    except ValueError as exc:
        raise ProblemFileError(str(exc)) from None


def band_from_dict(d: dict, T: float) -> AsymmetricBand:
    try:
        return AsymmetricBand(float(d["mu_check"]), float(d["mu_hat"]), float(d["nu_check"]),
                              float(d["nu_hat"]), int(d.get("N", 1)), T)
    except (KeyError, TypeError, ValueError) as exc:
        raise ProblemFileError(f"bad transverse band: {exc}") from None


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=False, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


# --------------------------------------------------------------------------
# trajectory CSV
# --------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return "%.17g" % x


def trajectory_rows(traj: BouncingTrajectory, per_arc: int = 64) -> list:
    """Rows ``(t, rho, rho', theta, event)``.

    An ``impact`` row carries the incoming velocity and closes its arc; the
    next arc opens with a row at the same time carrying the outgoing one.
    """
    R0 = traj.R0
    impact_times = {e.t for e in traj.impacts}
    rows = []
    for p in traj.pieces:
        if isinstance(p, ContactInterval):
            th0, th1 = p(p.t0)[2], p(p.t1)[2]
            rows.append((p.t0, R0, 0.0, float(th0), "contact_start"))
            rows.append((p.t1, R0, 0.0, float(th1), "contact_end"))
            continue
        if p.t1 <= p.t0:
            continue
        ts = np.linspace(p.t0, p.t1, max(per_arc, 2))
        st = np.asarray(p(ts))
        for j, t in enumerate(ts):
            ev = "impact" if j == len(ts) - 1 and t in impact_times else ""
            rows.append((float(t), float(st[0, j] + R0), float(st[1, j]), float(st[2, j]), ev))
    return rows


def write_trajectory_csv(traj: BouncingTrajectory, path, per_arc: int = 64) -> int:
    rows = trajectory_rows(traj, per_arc)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for t, rho, v, th, ev in rows:
            w.writerow([_fmt(t), _fmt(rho), _fmt(v), _fmt(th), ev])
    return len(rows)


def read_trajectory_csv(path, R0: float, L: float = 0.0) -> BouncingTrajectory:
    """Rebuild a trajectory from the CSV format (arcs become spline pieces)."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise TrajectoryFileError(f"{path}: {exc.strerror}") from None
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise TrajectoryFileError("empty trajectory file") from None
    if tuple(h.strip() for h in header) != CSV_HEADER:
        raise TrajectoryFileError(f"bad header {header!r}; expected {','.join(CSV_HEADER)}")
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != 5:
            raise TrajectoryFileError(f"line {lineno}: expected 5 fields, got {len(rec)}")
        try:
            t, rho, v, th = (float(x) for x in rec[:4])
        except ValueError:
            raise TrajectoryFileError(f"line {lineno}: non-numeric field") from None
        if not all(math.isfinite(x) for x in (t, rho, v, th)):
            raise TrajectoryFileError(f"line {lineno}: non-finite value")
        ev = rec[4].strip()
        if ev not in EVENTS:
            raise TrajectoryFileError(f"line {lineno}: unknown event {ev!r}")
        if rows and t < rows[-1][0]:
            raise TrajectoryFileError(f"line {lineno}: times must be non-decreasing")
        rows.append((t, rho - R0, v, th, ev))

    arcs, impacts, contacts, cur = [], [], [], []
    open_contact = None

    def close():
        if len(cur) >= 2:
            a = np.array(cur)
            keep = np.concatenate([[True], np.diff(a[:, 0]) > 0])
            a = a[keep]
            if len(a) >= 2:
                arcs.append(SampledArc(a[:, 0], a[:, 1], a[:, 2], a[:, 3]))
        cur.clear()

    for t, r, v, th, ev in rows:
        if ev == "contact_start":
            close()
            open_contact = (t, th)
        elif ev == "contact_end":
            if open_contact is None:
                raise TrajectoryFileError(f"contact_end at t={t} without contact_start")
            t0, th0 = open_contact
            omega = (th - th0) / (t - t0) if t > t0 else 0.0
            contacts.append(ContactInterval(t0, t, th0, omega))
            open_contact = None
        elif ev == "impact":
            cur.append((t, r, v, th))
            impacts.append(BounceEvent.at(t, v))
            close()
        else:
            cur.append((t, r, v, th))
    if open_contact is not None:
        raise TrajectoryFileError("unterminated contact interval")
    close()
    t_span = (rows[0][0], rows[-1][0]) if rows else (0.0, 0.0)
    return BouncingTrajectory(tuple(arcs), tuple(impacts), tuple(contacts), t_span, L, R0)


def estimate_L(traj: BouncingTrajectory) -> float:
    """Median of ``rho**2 theta'`` over arc samples (angular momentum of imported data)."""
    vals = []
    for a in traj.arcs:
        ts = np.linspace(a.t0, a.t1, 9)
        st, d = a(ts), a.derivative(ts)
        vals.extend((st[0] + traj.R0) ** 2 * d[2])
    if not vals:
        for c in traj.contacts:
            vals.append(traj.R0 ** 2 * c.omega)
    return float(np.median(vals)) if vals else 0.0
