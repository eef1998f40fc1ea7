"""Small deterministic SVG writers for trajectories and mode maps."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from . import se2

OBJECT_COLOR = "#1f4fd1"
HAND_COLOR = "#d62728"
PIVOT_COLOR = "#17becf"
MODE_COLORS = {0: "#1f3a93", 1: "#f5b041", 2: "#e5e7e9"}


class _Canvas:
    """Maps world coordinates (y up) onto an SVG viewport."""

    def __init__(self, xmin, xmax, ymin, ymax, width=640, margin=20):
        span_x = max(xmax - xmin, 1e-9)
        span_y = max(ymax - ymin, 1e-9)
        self.s = (width - 2 * margin) / max(span_x, span_y)
        self.xmin, self.ymax, self.m = xmin, ymax, margin
        self.w = int(round(span_x * self.s + 2 * margin))
        self.h = int(round(span_y * self.s + 2 * margin))
        self.items: list[str] = []

    def pt(self, x, y) -> str:
        return f"{(x - self.xmin) * self.s + self.m:.2f},{(self.ymax - y) * self.s + self.m:.2f}"

    def polyline(self, P, color, width=1.5, dash=None):
        P = np.asarray(P, dtype=float)
        P = P[np.all(np.isfinite(P), axis=1)]
        if len(P) < 2:
            return
        d = f' stroke-dasharray="{dash}"' if dash else ""
        pts = " ".join(self.pt(x, y) for x, y in P)
        self.items.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                          f'stroke-width="{width}"{d}/>')

    def polygon(self, P, stroke, fill="none", width=1.0, opacity=1.0):
        pts = " ".join(self.pt(x, y) for x, y in P)
        self.items.append(f'<polygon points="{pts}" fill="{fill}" stroke="{stroke}" '
                          f'stroke-width="{width}" opacity="{opacity}"/>')

    def rect(self, x, y, w, h, fill):
        self.items.append(f'<rect x="{(x - self.xmin) * self.s + self.m:.2f}" '
                          f'y="{(self.ymax - y - h) * self.s + self.m:.2f}" '
                          f'width="{w * self.s:.2f}" height="{h * self.s:.2f}" fill="{fill}"/>')

    def text(self, x, y, s):
        self.items.append(f'<text x="{x}" y="{y}" font-family="sans-serif" font-size="12">{s}</text>')

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}" '
                f'viewBox="0 0 {self.w} {self.h}">')
        return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *self.items, "</svg>"]) + "\n"


def _box(q, half_extents):
    hx, hy = half_extents
    corners = np.array([[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]])
    R = se2.rot(q[2])[:2, :2]
    return corners @ R.T + q[:2]


def trajectory_svg(traj, half_extents, snapshots: int = 6) -> str:
    """Object outlines, object path (blue), hand path (red) and pivot path (cyan)."""
    if len(traj) == 0:
        return _Canvas(-1, 1, -1, 1).render()
    boxes = [_box(q, half_extents) for q in traj.q_o]
    allp = np.vstack([*boxes, traj.q_h[:, :2]])
    lo, hi = allp.min(0), allp.max(0)
    c = _Canvas(lo[0], hi[0], lo[1], hi[1])
    idx = np.unique(np.linspace(0, len(traj) - 1, max(snapshots, 2)).round().astype(int))
    for i in idx:
        c.polygon(boxes[i], OBJECT_COLOR, opacity=0.35 + 0.65 * (i == idx[-1]))
    c.polyline(traj.q_o[:, :2], OBJECT_COLOR)
    c.polyline(traj.q_h[:, :2], HAND_COLOR)
    c.polyline(traj.pivot_world(), PIVOT_COLOR)
    return c.render()


def mode_map_svg(v, labels, stick_boundary=None, slip_boundary=None) -> str:
    """Mode labels on a square velocity grid with optional boundary points."""
    v = np.asarray(v, dtype=float)
    step = v[1] - v[0] if len(v) > 1 else 1.0
    c = _Canvas(v[0] - step / 2, v[-1] + step / 2, v[0] - step / 2, v[-1] + step / 2)
    for i, vy in enumerate(v):
        for j, vx in enumerate(v):
            c.rect(vx - step / 2, vy - step / 2, step, step, MODE_COLORS[int(labels[i, j])])
    for pts, color in ((stick_boundary, "#000000"), (slip_boundary, "#7f8c8d")):
        if pts is None:
            continue
        for x, y in np.asarray(pts).reshape(-1, 2):
            if math.isfinite(x) and v[0] <= x <= v[-1] and v[0] <= y <= v[-1]:
                c.items.append(f'<circle cx="{c.pt(x, y).split(",")[0]}" cy="{c.pt(x, y).split(",")[1]}" '
                               f'r="1.2" fill="{color}"/>')
    return c.render()


def write(path, text: str) -> None:
    Path(path).write_text(text)
