"""Static SVG plots: one polyline per smooth arc, one marker per bounce."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .model import BouncingTrajectory

WIDTH, HEIGHT, PAD = 640, 400, 48


class _Frame:
    def __init__(self, xs, ys):
        xs = np.concatenate([np.atleast_1d(x) for x in xs]) if xs else np.array([0.0, 1.0])
        ys = np.concatenate([np.atleast_1d(y) for y in ys]) if ys else np.array([0.0, 1.0])
        self.x0, self.x1 = _span(xs)
        self.y0, self.y1 = _span(ys)

    def px(self, x):
        return PAD + (np.asarray(x) - self.x0) / (self.x1 - self.x0) * (WIDTH - 2 * PAD)

    def py(self, y):
        return HEIGHT - PAD - (np.asarray(y) - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2 * PAD)


def _span(v):
    lo, hi = float(np.min(v)), float(np.max(v))
    if hi - lo < 1e-300:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _points(fr, x, y):
    return " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(fr.px(x), fr.py(y)))


def _document(title, xlabel, ylabel, body):
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}">\n'
            f'<title>{escape(title)}</title>\n'
            f'<rect x="{PAD}" y="{PAD}" width="{WIDTH - 2 * PAD}" height="{HEIGHT - 2 * PAD}" '
            'fill="none" stroke="#888"/>\n'
            f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>\n'
            f'<text x="14" y="{HEIGHT / 2}" transform="rotate(-90 14 {HEIGHT / 2})" '
            f'text-anchor="middle">{escape(ylabel)}</text>\n')
    return head + "\n".join(body) + "\n</svg>\n"


def _samples(traj, per_arc):
    out = []
    for a in traj.arcs:
        ts = np.linspace(a.t0, a.t1, per_arc)
        st = np.asarray(a(ts))
        out.append((ts, st))
    return out


def time_plot(traj: BouncingTrajectory, per_arc: int = 200) -> str:
    """``rho(t)`` with bounces marked on the wall line."""
    R0 = traj.R0
    arcs = _samples(traj, per_arc)
    xs = [ts for ts, _ in arcs] + [np.array([c.t0, c.t1]) for c in traj.contacts]
    ys = [st[0] + R0 for _, st in arcs] + [np.array([R0])]
    fr = _Frame(xs, ys)
    body = []
    for ts, st in arcs:
        body.append(f'<polyline class="arc" fill="none" stroke="#1f4e9c" '
                    f'points="{_points(fr, ts, st[0] + R0)}"/>')
    for c in traj.contacts:
        body.append(f'<line class="contact" x1="{fr.px(c.t0):.2f}" y1="{fr.py(R0):.2f}" '
                    f'x2="{fr.px(c.t1):.2f}" y2="{fr.py(R0):.2f}" stroke="#c47a00" '
                    'stroke-width="3"/>')
    for e in traj.impacts:
        body.append(f'<circle class="impact" cx="{fr.px(e.t):.2f}" cy="{fr.py(R0):.2f}" r="3" '
                    'fill="#b00"/>')
    return _document("radius against time", "t", "rho", body)


def phase_plot(traj: BouncingTrajectory, per_arc: int = 200) -> str:
    """Phase portrait ``(rho - R0, rho')``; bounces join ``(0, v-)`` to ``(0, v+)``."""
    arcs = _samples(traj, per_arc)
    xs = [st[0] for _, st in arcs] + [np.array([0.0])]
    ys = [st[1] for _, st in arcs] + [np.array([e.speed_in for e in traj.impacts] +
                                               [e.speed_out for e in traj.impacts] + [0.0])]
    fr = _Frame(xs, ys)
    body = []
    for _, st in arcs:
        body.append(f'<polyline class="arc" fill="none" stroke="#1f4e9c" '
                    f'points="{_points(fr, st[0], st[1])}"/>')
    for e in traj.impacts:
        body.append(f'<circle class="impact" cx="{fr.px(0.0):.2f}" cy="{fr.py(e.speed_in):.2f}" '
                    'r="3" fill="#b00"/>')
    return _document("phase portrait", "rho - R0", "rho'", body)


def write_plots(traj: BouncingTrajectory, time_path, phase_path) -> None:
    with open(time_path, "w") as fh:
        fh.write(time_plot(traj))
    with open(phase_path, "w") as fh:
        fh.write(phase_plot(traj))
