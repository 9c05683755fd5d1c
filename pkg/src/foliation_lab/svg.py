"""Write-only SVG plots: level curves, traced curves, hRc geometry, regions."""

from __future__ import annotations

import numpy as np

from .expr import Expr, lambdify

PALETTE = {"level": "#9aa5b1", "edge": "#c0392b", "leaf": "#2c7fb8", "fan": "#31a354",
           "curve": "#54278f", "Q": "#2c7fb8", "L": "#c0392b", "cut": "#e6550d",
           "degenerate": "#636363", "seam": "#636363", "point": "#000000"}


class Canvas:
    """World box -> pixel coordinates with y pointing up."""

    def __init__(self, box, size: int = 600, margin: int = 20):
        (self.x0, self.x1), (self.y0, self.y1) = box[0], box[1]
        span = max(self.x1 - self.x0, self.y1 - self.y0)
        self.scale = (size - 2 * margin) / span
        self.margin = margin
        self.w = int(round((self.x1 - self.x0) * self.scale + 2 * margin))
        self.h = int(round((self.y1 - self.y0) * self.scale + 2 * margin))
        self.items: list[str] = []

    def px(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))[:, :2]
        X = self.margin + (pts[:, 0] - self.x0) * self.scale
        Y = self.h - self.margin - (pts[:, 1] - self.y0) * self.scale
        return np.stack([X, Y], axis=-1)

    def polyline(self, pts, color, width=1.5, dash=None, title=None):
        P = self.px(pts)
        P = P[np.all(np.isfinite(P), axis=1)]
        if len(P) < 2:
            return
        coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in P)
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        body = f"<title>{title}</title>" if title else ""
        self.items.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                          f'stroke-width="{width}"{extra}>{body}</polyline>')

    def segments(self, segs, color, width=1.0):
        if len(segs) == 0:
            return
        a = self.px(segs[:, 0])
        b = self.px(segs[:, 1])
        d = " ".join(f"M{x0:.2f} {y0:.2f}L{x1:.2f} {y1:.2f}" for (x0, y0), (x1, y1) in zip(a, b))
        self.items.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="{width}"/>')

    def point(self, p, color=PALETTE["point"], r=3.0, label=None):
        (x, y), = self.px(p)
        self.items.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r}" fill="{color}"/>')
        if label:
            self.items.append(f'<text x="{x + 5:.2f}" y="{y - 5:.2f}" font-size="12" '
                              f'font-family="sans-serif">{label}</text>')

    def caption(self, text):
        self.items.append(f'<text x="{self.margin}" y="{self.margin - 6}" font-size="12" '
                          f'font-family="sans-serif">{text}</text>')

    def render(self) -> str:
        frame = self.px([[self.x0, self.y0], [self.x1, self.y1]])
        (fx0, fy1), (fx1, fy0) = frame
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}" '
                f'viewBox="0 0 {self.w} {self.h}">\n'
                f'<rect x="{fx0:.2f}" y="{fy0:.2f}" width="{fx1 - fx0:.2f}" height="{fy1 - fy0:.2f}" '
                f'fill="white" stroke="#333" stroke-width="0.8"/>')
        return head + "\n" + "\n".join(self.items) + "\n</svg>\n"


def contour_segments(f: Expr, c: float, box, resolution: int = 200) -> np.ndarray:
    """Marching-squares segments of {f = c}, shape (m, 2, 2)."""
    fn = lambdify(f, 2)
    xs = np.linspace(box[0][0], box[0][1], resolution + 1)
    ys = np.linspace(box[1][0], box[1][1], resolution + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    with np.errstate(all="ignore"):
        V = np.broadcast_to(np.asarray(fn(X, Y), float), X.shape) - c
    segs = []
    v00, v10, v01, v11 = V[:-1, :-1], V[1:, :-1], V[:-1, 1:], V[1:, 1:]
    x0, x1 = X[:-1, :-1], X[1:, :-1]
    y0, y1 = Y[:-1, :-1], Y[:-1, 1:]

    def cut(va, vb):
        with np.errstate(all="ignore"):
            return np.where(va != vb, va / (va - vb), 0.5)

    # crossing points on the four edges (bottom, right, top, left)
    pts = [
        (x0 + cut(v00, v10) * (x1 - x0), y0, (v00 >= 0) != (v10 >= 0)),
        (x1, y0 + cut(v10, v11) * (y1 - y0), (v10 >= 0) != (v11 >= 0)),
        (x0 + cut(v01, v11) * (x1 - x0), y1, (v01 >= 0) != (v11 >= 0)),
        (x0, y0 + cut(v00, v01) * (y1 - y0), (v00 >= 0) != (v01 >= 0)),
    ]
    flags = np.stack([p[2] for p in pts], axis=-1)
    count = flags.sum(axis=-1)
    PX = np.stack([np.broadcast_to(p[0], V[:-1, :-1].shape) for p in pts], axis=-1)
    PY = np.stack([np.broadcast_to(p[1], V[:-1, :-1].shape) for p in pts], axis=-1)
    two = (count == 2) & np.all(np.isfinite(PX), axis=-1)
    if two.any():
        fx = PX[two][flags[two]].reshape(-1, 2)
        fy = PY[two][flags[two]].reshape(-1, 2)
        segs.append(np.stack([np.stack([fx[:, 0], fy[:, 0]], -1), np.stack([fx[:, 1], fy[:, 1]], -1)], 1))
    four = count == 4
    if four.any():
        # saddle cells: pair edges (bottom, left) + (right, top); good enough for a picture
        bx, by = PX[four], PY[four]
        for a, b in ((0, 3), (1, 2)):
            segs.append(np.stack([np.stack([bx[:, a], by[:, a]], -1), np.stack([bx[:, b], by[:, b]], -1)], 1))
    return np.concatenate(segs) if segs else np.zeros((0, 2, 2))


def level_layer(cv: Canvas, f: Expr, levels, box, resolution: int = 200):
    for c in levels:
        cv.segments(contour_segments(f, float(c), box, resolution), PALETTE["level"], 0.8)


def _levels_around(f: Expr, box, center: float, count: int = 9) -> list:
    fn = lambdify(f, 2)
    g = np.linspace(0, 1, 41)
    X, Y = np.meshgrid(box[0][0] + g * (box[0][1] - box[0][0]), box[1][0] + g * (box[1][1] - box[1][0]))
    with np.errstate(all="ignore"):
        V = np.asarray(fn(X, Y), float)
    V = V[np.isfinite(V)]
    lo, hi = np.percentile(V, [10, 90]) if V.size else (center - 1, center + 1)
    return sorted(set([float(center)] + [float(v) for v in np.linspace(lo, hi, count)]))


def hrc_svg(h, resolution: int = 200) -> str:
    box = h.box
    cv = Canvas(box)
    level_layer(cv, h.f, _levels_around(h.f, box, h.level), box, resolution)
    for a in h.fan:
        cv.polyline(a, PALETTE["fan"], 1.0)
    for c in h.non_compact:
        cv.polyline(c.points, PALETTE["leaf"], 2.2, title="non-compact edge")
    cv.polyline(h.edge, PALETTE["edge"], 2.5, title="compact edge")
    cv.point(h.p, label="p")
    cv.point(h.q, label="q")
    cv.point(h.w, PALETTE["edge"], 2.5, label="w")
    cv.caption(f"half-Reeb component, level {h.level:.6g}")
    return cv.render()


def curves_svg(curves, box, f: Expr | None = None, level: float | None = None, axes=(0, 1)) -> str:
    """Traced curves projected on two coordinates; optional level curves of a planar f."""
    b2 = (box[axes[0]], box[axes[1]])
    cv = Canvas(b2)
    if f is not None and len(box) == 2:
        level_layer(cv, f, _levels_around(f, b2, level if level is not None else 0.0), b2)
    for c in curves:
        P = np.asarray(c.points)[:, list(axes)]
        cv.polyline(P, PALETTE["curve"], 1.6)
        cv.point(P[0], PALETTE["curve"], 2.0)
    return cv.render()


def region_svg(mesh, box=None) -> str:
    """2D region mesh with boundary pieces coloured by tag."""
    pts = mesh.grid.reshape(-1, 2)
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    if box is None:
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        pad = 0.05 * max(hi - lo)
        box = ((lo[0] - pad, hi[0] + pad), (lo[1] - pad, hi[1] + pad))
    cv = Canvas(box)
    g = mesh.grid
    step = max(1, g.shape[0] // 16)
    for i in range(0, g.shape[0], step):
        cv.polyline(g[i, :], PALETTE["level"], 0.5)
        cv.polyline(g[:, i], PALETTE["level"], 0.5)
    for tag, faces in sorted(mesh.boundary.items()):
        for F in faces:
            cv.polyline(F, PALETTE.get(tag, "#000"), 2.0, title=tag)
    cv.caption(f"P_k at k = {mesh.k}")
    return cv.render()
