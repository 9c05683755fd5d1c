"""Half-Reeb components of planar foliations.

For a submersion f of the plane the leaves of F(f) are the orbits of the
Hamiltonian field H_f = (-d2 f, d1 f). Given p, q on two distinct components
of one level {f = c}, the construction joins them by an arc lambda (a
straight segment, bent if it grazes a leaf), finds the extremum w of f along
lambda, and uses the leaves through lambda(t) whose two ends leave the box on
the same side of lambda. Those leaves form the fan; the half-leaves from p
and q towards the fan side are the non-compact edges.

The set T of such t is located by bisection from the extremum outwards,
the finite analogue of t1 = inf T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .expr import Expr, lambdify, to_text
from .fibers import level_set_grid
from .fields import hamiltonian_field
from .flow import CurveSegment, TraceOptions, trace, trace_both
from .maps import box_diameter, make_box, scale_box


class SubmersionViolation(ValueError):
    """|grad f| fell below the submersion threshold at a probe point."""


class ConstructionFailed(RuntimeError):
    """The bisection or the validity checks did not separate within budget."""


GRAD_MIN = 1e-8


@dataclass
class HRC2D:
    f: Expr
    level: float
    p: np.ndarray
    q: np.ndarray
    w: np.ndarray
    t_w: float
    t1: float
    t2: float
    edge: np.ndarray  # polyline of the compact edge, from p to q
    non_compact: tuple  # (CurveSegment from p, CurveSegment from q)
    fan: list  # polylines of leaf intervals from the edge back to the edge
    fan_params: list
    box: tuple
    bend: float = 0.0
    validity: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        def pl(a):
            return [[float(x), float(y)] for x, y in a]

        return {
            "f": to_text(self.f),
            "level": self.level,
            "p": [float(v) for v in self.p],
            "q": [float(v) for v in self.q],
            "w": [float(v) for v in self.w],
            "t_w": self.t_w,
            "t1": self.t1,
            "t2": self.t2,
            "bend": self.bend,
            "compact_edge": pl(self.edge[:: max(1, len(self.edge) // 64)]),
            "non_compact_edges": [pl(c.points) for c in self.non_compact],
            "fan_params": [float(t) for t in self.fan_params],
            "fan": [pl(a[:: max(1, len(a) // 64)]) for a in self.fan],
            "box": [list(b) for b in self.box],
            "validity": self.validity,
        }


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def polyline_crossings(P: np.ndarray, E: np.ndarray):
    """Proper crossings of polyline P with polyline E.

    Returns a list of (k, j, u, side) sorted along P: segment k of P meets
    segment j of E at parameter u on P's segment, and ``side`` is the side of
    E (sign of cross(E', P')) that P moves into.
    """
    if len(P) < 2 or len(E) < 2:
        return []
    a, d = P[:-1, None, :], (P[1:] - P[:-1])[:, None, :]
    b, e = E[None, :-1, :], (E[1:] - E[:-1])[None, :, :]
    den = _cross(d, e)
    ba = b - a
    with np.errstate(divide="ignore", invalid="ignore"):
        u = _cross(ba, e) / den
        v = _cross(ba, d) / den
    hit = (den != 0) & (u > 0) & (u <= 1) & (v >= 0) & (v <= 1)
    ks, js = np.nonzero(hit)
    out = [(int(k), int(j), float(u[k, j]), int(np.sign(-den[k, j]))) for k, j in zip(ks, js)]
    out.sort(key=lambda r: (r[0], r[2]))
    return out


class _Arc:
    """lambda(t) = p + t (q - p) + bend * 4 t (1 - t) * n, n the unit left normal."""

    def __init__(self, p, q, bend=0.0, samples=801):
        self.p, self.q = np.asarray(p, float), np.asarray(q, float)
        d = self.q - self.p
        self.length = float(np.linalg.norm(d))
        self.n = np.array([-d[1], d[0]]) / self.length
        self.bend = bend
        self.ts = np.linspace(0.0, 1.0, samples)
        self.pts = self(self.ts)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        b = self.bend * self.length * 4.0 * t * (1.0 - t)
        return self.p + t[..., None] * (self.q - self.p) + b[..., None] * self.n

    def tangent(self, t):
        db = self.bend * self.length * 4.0 * (1.0 - 2.0 * t)
        v = (self.q - self.p) + db * self.n
        return v / np.linalg.norm(v)


class _Builder:
    def __init__(self, f: Expr, box, opts: TraceOptions | None):
        self.f = f
        self.box = make_box(box)
        self.H = hamiltonian_field(f)
        self.fn = lambdify([f], 2)
        self.grad = lambdify([self.H.components[1], self.H.components[0]], 2)  # (d1 f, -d2 f)
        self.opts = opts or TraceOptions(box=self.box, max_step=0.02 * box_diameter(self.box))
        self.excl = 1e-4 * box_diameter(self.box)

    def fvals(self, pts):
        with np.errstate(all="ignore"):
            return np.broadcast_to(np.asarray(self.fn(pts[..., 0], pts[..., 1])[0], float), pts.shape[:-1])

    def gradient(self, pts):
        g = self.grad(pts[..., 0], pts[..., 1])
        gx = np.broadcast_to(np.asarray(g[0], float), pts.shape[:-1])
        gy = -np.broadcast_to(np.asarray(g[1], float), pts.shape[:-1])
        return np.stack([gx, gy], axis=-1)

    def _crossings_after_seed(self, c: CurveSegment, arc: _Arc):
        cr = polyline_crossings(c.points, arc.pts)
        out = []
        for k, j, u, side in cr:
            x = c.points[k] + u * (c.points[k + 1] - c.points[k])
            if np.linalg.norm(x - c.points[0]) > self.excl:
                out.append((k, j, u, side, x))
        return out

    def end_sides(self, arc: _Arc, t: float):
        """Side of the arc (+1 left, -1 right) holding each end of the leaf through arc(t)."""
        x0 = arc(t)
        sides = []
        for direction in ("forward", "backward"):
            c = trace(self.H, x0, self.opts, direction)
            cr = self._crossings_after_seed(c, arc)
            if cr:
                sides.append(cr[-1][3])
            else:
                step = c.points[min(1, len(c.points) - 1)] - c.points[0]
                sides.append(int(np.sign(_cross(arc.tangent(t), step))))
        return tuple(sides)

    def in_T(self, arc, t):
        s = self.end_sides(arc, t)
        return s[0] == s[1] and s[0] != 0, s


def _unimodal(phi: np.ndarray) -> bool:
    d = np.diff(phi)
    sgn = np.sign(d[np.abs(d) > 1e-14 * (1 + np.abs(phi[:-1]))])
    return int(np.sum(sgn[1:] != sgn[:-1])) == 1


def construct_hrc_edges(f: Expr, p, q, box, opts: TraceOptions | None = None, fan_size: int = 8,
                        bisect_budget: int = 60, resolution: int = 512, check_components: bool = True) -> HRC2D:
    """Build a half-Reeb component from p, q on distinct components of one level of f."""
    B = _Builder(f, box, opts)
    p, q = np.asarray(p, float), np.asarray(q, float)
    fp, fq = float(B.fvals(p)), float(B.fvals(q))
    c = 0.5 * (fp + fq)
    if abs(fp - fq) > 1e-9 * (1 + abs(c)):
        raise ValueError(f"p and q are on different levels ({fp} vs {fq})")
    if check_components:
        grid = level_set_grid(f, c, B.box, resolution)
        lp, lq = grid.label_of([p, q])
        if lp == lq:
            raise ValueError("p and q lie on the same component of the level set")

    arc = None
    for bend in (0.0, 0.1, -0.1, 0.2, -0.2, 0.3, -0.3):
        cand = _Arc(p, q, bend)
        phi = B.fvals(cand.pts) - c
        inner = phi[1:-1]
        if np.any(inner == 0) or (inner.min() < 0 < inner.max()):
            continue  # the arc meets the level again
        if _unimodal(phi):
            arc = cand
            break
    if arc is None:
        raise ConstructionFailed("no admissible arc: every candidate meets the level or grazes a leaf")

    phi = B.fvals(arc.pts) - c
    k_m = int(np.argmax(np.abs(phi)))
    t_m = float(arc.ts[k_m])
    # refine the extremum with a few golden-section steps
    lo, hi = arc.ts[max(k_m - 1, 0)], arc.ts[min(k_m + 1, len(arc.ts) - 1)]
    gr = (math.sqrt(5) - 1) / 2
    sgn = math.copysign(1.0, phi[k_m])
    for _ in range(60):
        a = hi - gr * (hi - lo)
        b = lo + gr * (hi - lo)
        if sgn * float(B.fvals(arc(a))) > sgn * float(B.fvals(arc(b))):
            hi = b
        else:
            lo = a
    t_m = 0.5 * (lo + hi)

    ok_m, sides_m = B.in_T(arc, t_m)
    if not ok_m:
        raise ConstructionFailed("the leaf through the extremum does not have both ends on one side")
    # the leaf ends lie on one side; the fan arcs and the non-compact edges on the other
    fan_side = -sides_m[0]

    def boundary(inside, outside):
        it = 0
        while abs(inside - outside) > 1e-9 and it < bisect_budget:
            mid = 0.5 * (inside + outside)
            if B.in_T(arc, mid)[0]:
                inside = mid
            else:
                outside = mid
            it += 1
        if abs(inside - outside) > 1e-6:
            raise ConstructionFailed(f"bisection did not separate within {bisect_budget} steps")
        return inside

    t1 = 0.0 if B.in_T(arc, 0.0)[0] else boundary(t_m, 0.0)
    t2 = 1.0 if B.in_T(arc, 1.0)[0] else boundary(t_m, 1.0)

    # fan: leaves through arc(t), t between t1 and t_m, followed to their return
    fan, fan_params = [], []
    for k in range(1, fan_size + 1):
        t = t1 + (t_m - t1) * k / (fan_size + 1)
        x0 = arc(t)
        for direction in ("forward", "backward"):
            cseg = trace(B.H, x0, B.opts, direction)
            step = cseg.points[1] - cseg.points[0]
            if int(np.sign(_cross(arc.tangent(t), step))) == fan_side:
                break
        cr = B._crossings_after_seed(cseg, arc)
        if not cr:
            raise ConstructionFailed(f"fan leaf through t={t:.6g} does not return to the edge")
        kk, _, u, _, x = cr[0]
        fan.append(np.vstack([cseg.points[:kk + 1], x]))
        fan_params.append(t)

    def half_leaf(x0, t):
        for direction in ("forward", "backward"):
            cseg = trace(B.H, x0, B.opts, direction)
            step = cseg.points[1] - cseg.points[0]
            if int(np.sign(_cross(arc.tangent(t), step))) == fan_side:
                return cseg
        return cseg

    h = HRC2D(f, c, p, q, arc(t_m), t_m, t1, t2, arc.pts.copy(),
              (half_leaf(p, 0.0), half_leaf(q, 1.0)), fan, fan_params, B.box, arc.bend)
    h.validity = validate_hrc(h, resolution=resolution, check_components=check_components, _builder=B, _arc=arc)
    return h


def validate_hrc(h: HRC2D, resolution: int = 512, w_radius: float = 0.05, check_components: bool = True,
                 _builder=None, _arc=None) -> dict:
    """The four structural checks (a)-(d) on a constructed component."""
    B = _builder or _Builder(h.f, h.box, None)
    arc = _arc or _Arc(h.p, h.q, h.bend)
    out = {}
    # (a) same level, distinct components
    fp, fq = float(B.fvals(h.p)), float(B.fvals(h.q))
    same = abs(fp - fq) <= 1e-9 * (1 + abs(h.level))
    distinct = None
    if check_components:
        grid = level_set_grid(h.f, h.level, h.box, resolution)
        lp, lq = grid.label_of([h.p, h.q])
        distinct = bool(lp != lq)
    out["a_same_level_distinct_components"] = {
        "level_gap": abs(fp - fq), "distinct": distinct,
        "pass": bool(same and (distinct is not False))}
    # (b) transversality away from w
    ts = arc.ts
    far = np.abs(ts - h.t_w) > w_radius
    tang = np.array([arc.tangent(t) for t in ts[far]])
    g = B.gradient(arc.pts[far])
    ratio = np.abs(np.einsum("ij,ij->i", g, tang)) / np.linalg.norm(g, axis=1)
    out["b_transversality"] = {"min_ratio": float(ratio.min()), "threshold": 0.05,
                               "w_radius": w_radius, "pass": bool(ratio.min() >= 0.05)}
    # (c) every full fan leaf meets the edge exactly twice
    counts = []
    for t in h.fan_params:
        x0 = arc(t)
        n = 1
        for direction in ("forward", "backward"):
            cseg = trace(B.H, x0, B.opts, direction)
            n += len(B._crossings_after_seed(cseg, arc))
        counts.append(n)
    out["c_fan_crossings"] = {"counts": counts, "pass": bool(len(counts) >= 8 and all(k == 2 for k in counts))}
    # (d) non-compact edges never re-cross the edge inside the 4x box
    big = scale_box(h.box, 4.0)
    opts4 = TraceOptions(box=big, max_step=0.02 * box_diameter(big))
    recross = []
    for x0, seg in zip((h.p, h.q), h.non_compact):
        direction = seg.direction
        cseg = trace(B.H, x0, opts4, direction)
        recross.append(len(B._crossings_after_seed(cseg, arc)))
    out["d_non_compact_no_recross"] = {"recrossings": recross, "pass": bool(all(r == 0 for r in recross))}
    out["verdict"] = "PASS" if all(v["pass"] for v in out.values() if isinstance(v, dict)) else "FAIL"
    return out


def check_submersion(f: Expr, box, probes: int = 64) -> float:
    """Smallest |grad f| over a probe grid; raises SubmersionViolation below 1e-8."""
    B = _Builder(f, box, None)
    (x0, x1), (y0, y1) = B.box
    X, Y = np.meshgrid(np.linspace(x0, x1, probes), np.linspace(y0, y1, probes), indexing="ij")
    g = B.gradient(np.stack([X, Y], axis=-1))
    m = np.linalg.norm(g, axis=-1)
    # critical points usually sit between probes: polish the smallest few
    lo, hi = [x0, y0], [x1, y1]
    best, at = math.inf, None
    for k in np.argsort(m, axis=None)[:5]:
        i, j = np.unravel_index(int(k), m.shape)
        start = np.clip([X[i, j], Y[i, j]], lo, hi)
        try:
            r = least_squares(lambda x: B.gradient(np.asarray(x)), start, bounds=(lo, hi),
                              xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=100)
            cand = [(float(np.linalg.norm(r.fun)), r.x), (float(m[i, j]), start)]
        except ValueError:
            cand = [(float(m[i, j]), start)]
        for v, x in cand:
            if np.isfinite(v) and v < best:
                best, at = v, x
    if best < GRAD_MIN:
        raise SubmersionViolation(f"|grad f| = {best:.3g} < {GRAD_MIN} at ({at[0]:.6g}, {at[1]:.6g})")
    return best


def _refine_onto_level(B: _Builder, x, c):
    x = np.array(x, float)
    for _ in range(30):
        r = float(B.fvals(x)) - c
        if abs(r) <= 1e-12 * (1 + abs(c)):
            break
        g = B.gradient(x)
        x = x - r * g / float(g @ g)
    return x


def _candidate_pairs(B: _Builder, grid, margin=0.1):
    inner = scale_box(B.box, 1.0 - 2 * margin)
    lo = np.array([b[0] for b in inner])
    hi = np.array([b[1] for b in inner])
    clouds = []
    for cp in grid.components:
        m = np.all((cp >= lo) & (cp <= hi), axis=1)
        clouds.append(cp[m])
    pairs = []
    from scipy.spatial import cKDTree
    for a in range(len(clouds)):
        for b in range(a + 1, len(clouds)):
            if len(clouds[a]) == 0 or len(clouds[b]) == 0:
                continue
            d, idx = cKDTree(clouds[b]).query(clouds[a])
            k = int(np.argmin(d))
            pairs.append((float(d[k]), a, b, clouds[a][k], clouds[b][idx[k]]))
    # widest admissible pair first: its fan has the most room inside the box
    pairs.sort(key=lambda r: (-r[0], r[1], r[2]))
    return pairs


def detect_hrc_2d(f: Expr, box, resolution: int = 512, budget: int = 64, seed: int = 0,
                  opts: TraceOptions | None = None):
    """Look for a disconnected level of f and build a half-Reeb component on it.

    Returns ``None`` when no disconnected level is found within ``budget``
    sampled values (the levels through the origin, the box center, then
    random box points).
    """
    box = make_box(box)
    check_submersion(f, box)
    B = _Builder(f, box, opts)
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    probes = [np.zeros(2)] if np.all((lo <= 0) & (0 <= hi)) else []
    probes.append(0.5 * (lo + hi))
    failures = []
    for k in range(budget):
        x = probes[k] if k < len(probes) else lo + (hi - lo) * rng.random(2)
        c = float(B.fvals(x))
        grid = level_set_grid(f, c, box, resolution)
        if len(grid.components) < 2:
            continue
        for _, a, b, pa, pb in _candidate_pairs(B, grid):
            p = _refine_onto_level(B, pa, c)
            q = _refine_onto_level(B, pb, c)
            try:
                h = construct_hrc_edges(f, p, q, box, opts, resolution=resolution)
            except (ConstructionFailed, ValueError) as exc:
                failures.append(str(exc))
                continue
            if h.validity.get("verdict") == "PASS":
                return h
            failures.append(f"validity failed for level {c:.6g}")
        if failures:
            raise ConstructionFailed(f"disconnected level {c:.6g} found but construction failed: {failures[:3]}")
    return None
