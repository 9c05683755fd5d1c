"""Connectivity of level sets and fibers inside a box.

Two methods:

* ``GRID2D``: marching squares on a grid, crossing edges joined through the
  cells they bound (saddle cells resolved by the value at the cell center),
  components = connected classes of crossing edges.
* ``CURVE_ID``: points of the fiber are found by damped Newton, the fiber
  through each is traced as an integral curve of V_i, and seeds lying on an
  already traced curve are merged into its class.

Both count components of the fiber *inside the box*; pieces that join outside
the window are reported separately. Every report carries that caveat.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .expr import Expr, lambdify
from .fields import cofactor_field, jacobian
from .flow import Termination, TraceOptions, ZeroFieldError, trace_both
from .maps import SmoothMap, box_contains, box_diameter

TRUNCATION_CAVEAT = "components counted inside the box only; pieces may join outside it"


@dataclass
class FiberSpec:
    map_name: str
    i: int
    values: dict  # j -> c_j for every j != i
    box: tuple
    resolution: int = 512

    def __post_init__(self):
        if self.resolution < 16:
            raise ValueError("resolution must be at least 16 per axis")
        for v in self.values.values():
            if not np.isfinite(v):
                raise ValueError("fiber values must be finite")

    def to_json(self) -> dict:
        return {"map": self.map_name, "i": self.i,
                "values": {str(j): float(c) for j, c in sorted(self.values.items())},
                "box": [list(b) for b in self.box], "resolution": self.resolution}


@dataclass
class FiberReport:
    count: int
    representatives: list
    method: str
    box: tuple
    caveats: list = field(default_factory=list)
    spec: FiberSpec | None = None

    def to_json(self) -> dict:
        return {
            "spec": self.spec.to_json() if self.spec else None,
            "count": self.count,
            "representatives": [[float(v) for v in p] for p in self.representatives],
            "method": self.method,
            "box": [list(b) for b in self.box],
            "caveats": list(self.caveats),
        }


# ---------------------------------------------------------------- grid method

def _grid_values(f: Expr, c: float, box, res: int):
    (x0, x1), (y0, y1) = box
    xs = np.linspace(x0, x1, res + 1)
    ys = np.linspace(y0, y1, res + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    fn = lambdify([f], 2)
    with np.errstate(all="ignore"):
        V = np.broadcast_to(np.asarray(fn(X, Y)[0], dtype=float), X.shape) - c
        cx = 0.5 * (xs[:-1] + xs[1:])
        cy = 0.5 * (ys[:-1] + ys[1:])
        CX, CY = np.meshgrid(cx, cy, indexing="ij")
        C = np.broadcast_to(np.asarray(fn(CX, CY)[0], dtype=float), CX.shape) - c
    return xs, ys, V, C


def _bisect_edge(fn, c, a, b, tol=1e-9):
    fa = fn(*a)[0] - c
    if abs(fa) <= tol:
        return np.array(a)
    fb = fn(*b)[0] - c
    if abs(fb) <= tol:
        return np.array(b)
    a, b = np.array(a, dtype=float), np.array(b, dtype=float)
    m = 0.5 * (a + b)
    for _ in range(200):
        m = 0.5 * (a + b)
        fm = fn(*m)[0] - c
        if abs(fm) <= tol or np.linalg.norm(b - a) < 1e-15:
            break
        if (fm >= 0) == (fa >= 0):
            a, fa = m, fm
        else:
            b = m
    return m


@dataclass
class LevelGrid:
    """Crossing-edge labelling of {f = c} on a grid."""

    box: tuple
    level: float
    components: list  # per component: (m, 2) array of linearly interpolated crossing points
    edges: list  # per component: list of (a, b) grid-edge endpoints, scan order
    cells: list  # per component: number of grid cells it passes through

    def label_of(self, pts) -> np.ndarray:
        """Index of the component whose crossing points are nearest to each point."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        best = np.full(len(pts), np.inf)
        lab = np.full(len(pts), -1)
        for k, cp in enumerate(self.components):
            d, _ = cKDTree(cp).query(pts)
            better = d < best
            best[better] = d[better]
            lab[better] = k
        return lab


def level_set_grid(f: Expr, c: float, box, resolution: int = 512) -> LevelGrid:
    """Marching squares on a (resolution x resolution) cell grid."""
    if resolution < 16:
        raise ValueError("resolution must be at least 16 per axis")
    R = resolution
    xs, ys, V, C = _grid_values(f, c, box, R)
    if not (np.all(np.isfinite(V)) and np.all(np.isfinite(C))):
        raise ValueError("f is undefined somewhere on the grid")
    P = V >= 0.0
    nx_edges = R * (R + 1)
    # x-edges join (ix,iy)-(ix+1,iy); y-edges join (ix,iy)-(ix,iy+1)
    xe = P[:-1, :] != P[1:, :]
    ye = P[:, :-1] != P[:, 1:]

    def xid(ix, iy):
        return ix * (R + 1) + iy

    def yid(ix, iy):
        return nx_edges + ix * R + iy

    ix, iy = np.meshgrid(np.arange(R), np.arange(R), indexing="ij")
    bottom, top = xe[:, :-1], xe[:, 1:]
    left, right = ye[:-1, :], ye[1:, :]
    nb = bottom.astype(int) + top + left + right
    eb, et = xid(ix, iy), xid(ix, iy + 1)
    el, er = yid(ix, iy), yid(ix + 1, iy)

    ids = np.stack([eb, er, et, el], axis=-1)
    flags = np.stack([bottom, right, top, left], axis=-1)
    two = nb == 2
    sel = ids[two][flags[two]].reshape(-1, 2)
    rows, cols = [sel[:, 0]], [sel[:, 1]]
    four = nb == 4
    if four.any():
        s0 = P[:-1, :-1][four]
        sc = (C >= 0.0)[four]
        b4, r4, t4, l4 = eb[four], er[four], et[four], el[four]
        diag = sc == s0  # bottom-left and top-right corners joined through the center
        rows += [b4, np.where(diag, t4, r4)]
        cols += [np.where(diag, r4, l4), np.where(diag, l4, t4)]
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)

    crossing = np.concatenate([xe.ravel(), ye.ravel()])
    n_edges = len(crossing)
    g = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_edges, n_edges))
    _, labels = connected_components(g, directed=False)
    comp: dict[int, list] = {}
    for e in np.nonzero(crossing)[0]:
        comp.setdefault(int(labels[e]), []).append(int(e))

    cell_counts: dict[int, int] = {}
    busy = nb > 0
    for row, fl in zip(ids[busy], flags[busy]):
        for lab in {int(labels[e]) for e in row[fl]}:
            cell_counts[lab] = cell_counts.get(lab, 0) + 1

    comps, edges, cells = [], [], []
    for lab, es in comp.items():
        ends, pts = [], []
        for e in es:
            if e < nx_edges:
                a_ix, a_iy = divmod(e, R + 1)
                i0, i1 = (a_ix, a_iy), (a_ix + 1, a_iy)
            else:
                a_ix, a_iy = divmod(e - nx_edges, R)
                i0, i1 = (a_ix, a_iy), (a_ix, a_iy + 1)
            a = np.array([xs[i0[0]], ys[i0[1]]])
            b = np.array([xs[i1[0]], ys[i1[1]]])
            va, vb = V[i0], V[i1]
            s = va / (va - vb) if va != vb else 0.5
            ends.append((a, b))
            pts.append(a + s * (b - a))
        comps.append(np.array(pts))
        edges.append(ends)
        cells.append(cell_counts.get(lab, 0))
    return LevelGrid(tuple(box), float(c), comps, edges, cells)


def level_set_components_2d(f: Expr, c: float, box, resolution: int = 512) -> FiberReport:
    """Components of {f = c} inside a planar box, by marching squares."""
    grid = level_set_grid(f, c, box, resolution)
    fn = lambdify([f], 2, backend="math")
    reps = []
    for ends in grid.edges:
        a, b = ends[len(ends) // 2]
        reps.append(_bisect_edge(fn, c, a, b))
    caveats = [TRUNCATION_CAVEAT]
    if any(n < 3 for n in grid.cells):
        caveats.append("RESOLUTION_TOO_COARSE: a component touches fewer than 3 cells")
    return FiberReport(len(reps), reps, "GRID2D", tuple(box), caveats)


# --------------------------------------------------------------- curve method

class _FiberSystem:
    def __init__(self, F: SmoothMap, i: int, values: dict):
        self.n = F.n
        self.idx = [j for j in range(1, F.n + 1) if j != i]
        self.c = np.array([values[j] for j in self.idx], dtype=float)
        jac = jacobian(F)
        self.f = lambdify([F.components[j - 1] for j in self.idx], F.n, backend="math")
        self.grad = lambdify([e for j in self.idx for e in jac.matrix[j - 1]], F.n, backend="math")

    def residual(self, x):
        return np.array(self.f(*x), dtype=float) - self.c

    def jac(self, x):
        return np.array(self.grad(*x), dtype=float).reshape(len(self.idx), self.n)


def _newton_on_fiber(sys: _FiberSystem, x0, slice_dir, tol=1e-10, max_iter=60):
    """Damped Newton on (f_j - c_j, slice) from x0; returns the root or None."""
    x = np.array(x0, dtype=float)
    b = float(slice_dir @ x)

    def G(y):
        return np.append(sys.residual(y), slice_dir @ y - b)

    try:
        g = G(x)
    except (ValueError, ZeroDivisionError, OverflowError):
        return None
    for _ in range(max_iter):
        if np.max(np.abs(g[:-1])) <= tol * (1.0 + np.max(np.abs(sys.c))):
            return x
        J = np.vstack([sys.jac(x), slice_dir])
        try:
            step = np.linalg.solve(J, -g)
        except np.linalg.LinAlgError:
            return None
        lam = 1.0
        ng = np.linalg.norm(g)
        while lam > 1e-6:
            y = x + lam * step
            try:
                gy = G(y)
            except (ValueError, ZeroDivisionError, OverflowError):
                gy = None
            if gy is not None and np.all(np.isfinite(gy)) and np.linalg.norm(gy) < (1 - 1e-4 * lam) * ng:
                x, g = y, gy
                break
            lam *= 0.5
        else:
            return None
    if np.max(np.abs(g[:-1])) <= tol * (1.0 + np.max(np.abs(sys.c))):
        return x
    return None


def fiber_seeds(F: SmoothMap, spec: FiberSpec, n_seeds: int = 50, seed: int = 0) -> list:
    """Points of the fiber inside the box found from ``n_seeds`` random starts."""
    rng = np.random.default_rng(seed)
    sys = _FiberSystem(F, spec.i, spec.values)
    lo = np.array([b[0] for b in spec.box])
    hi = np.array([b[1] for b in spec.box])
    roots = []
    for _ in range(n_seeds):
        x0 = lo + (hi - lo) * rng.random(F.n)
        d = rng.normal(size=F.n)
        d /= np.linalg.norm(d)
        r = _newton_on_fiber(sys, x0, d)
        if r is not None and box_contains(spec.box, r):
            roots.append(r)
    return roots


def fiber_components(F: SmoothMap, spec: FiberSpec, n_seeds: int = 50, seed: int = 0,
                     eps_merge: float | None = None, opts: TraceOptions | None = None) -> FiberReport:
    """Count the pieces of the fiber of index ``spec.i`` inside ``spec.box``."""
    if F.n < 2:
        raise ValueError("fibers need n >= 2")
    box = tuple(spec.box)
    if eps_merge is None:
        if F.n == 2:
            eps_merge = 2.0 * max(hi - lo for lo, hi in box) / spec.resolution
        else:
            eps_merge = 1e-3 * box_diameter(box)
    roots = fiber_seeds(F, spec, n_seeds, seed)
    caveats = [TRUNCATION_CAVEAT]
    if not roots:
        caveats.append("NO_POINT_FOUND: no root located; the fiber may be empty")
        return FiberReport(0, [], "CURVE_ID", box, caveats, spec)
    V = cofactor_field(F, spec.i)
    opts = opts or TraceOptions(box=box, max_step=max(eps_merge * 20, 1e-3))
    spacing = 0.5 * eps_merge
    classes: list[int] = []  # union-find parent per traced class
    reps, trees = [], []

    def find(a):
        while classes[a] != a:
            classes[a] = classes[classes[a]]
            a = classes[a]
        return a

    for r in roots:
        if any(t.query(r)[0] <= eps_merge for t in trees):
            continue
        try:
            curve = trace_both(V, r, opts)
        except ZeroFieldError:
            caveats.append(f"ZERO_FIELD at seed {r.tolist()}")
            continue
        if (curve.termination is Termination.BUDGET and curve.termination_backward is Termination.BUDGET):
            caveats.append("INTEGRATOR_ANOMALY: a trace stayed in the box in both directions")
        pts = curve.densified(spacing)
        k = len(classes)
        classes.append(k)
        reps.append(r)
        tree = cKDTree(pts)
        for j, t in enumerate(trees):
            if tree.sparse_distance_matrix(t, eps_merge).nnz:
                classes[find(k)] = find(j)
        trees.append(tree)
    roots_by_class = {}
    for k in range(len(classes)):
        roots_by_class.setdefault(find(k), reps[k])
    out = list(roots_by_class.values())
    return FiberReport(len(out), out, "CURVE_ID", box, caveats, spec)


def fiber_report(F: SmoothMap, spec: FiberSpec, method: str = "auto", n_seeds: int = 50,
                 seed: int = 0) -> FiberReport:
    """Dispatch to the grid method for planar maps, the curve method otherwise."""
    if method == "auto":
        method = "GRID2D" if F.n == 2 else "CURVE_ID"
    if method == "GRID2D":
        if F.n != 2:
            raise ValueError("GRID2D needs a planar map")
        (j, c), = spec.values.items()
        rep = level_set_components_2d(F.components[j - 1], c, spec.box, spec.resolution)
        rep.spec = spec
        return rep
    if method == "CURVE_ID":
        return fiber_components(F, spec, n_seeds, seed)
    raise ValueError(f"unknown method {method!r}")


def find_disconnected_fiber(F: SmoothMap, i: int, budget: int = 200, seed: int = 0, box=None,
                            resolution: int = 512, method: str = "auto", n_seeds: int = 50):
    """First sampled fiber of index ``i`` with two or more pieces in the box.

    Target values are images F(x) of sample points (so fibers are nonempty):
    the origin first if it is in the box, then the box center, then uniform
    random points. Returns ``(spec, report)`` or ``None``; ``None`` is not a
    proof that every fiber is connected.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    box = tuple(box or F.box)
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    probes = []
    if box_contains(box, np.zeros(F.n)):
        probes.append(np.zeros(F.n))
    probes.append(0.5 * (lo + hi))
    for k in range(budget):
        p = probes[k] if k < len(probes) else lo + (hi - lo) * rng.random(F.n)
        try:
            val = F(p)
        except (ValueError, ZeroDivisionError):
            continue
        if not np.all(np.isfinite(val)):
            continue
        spec = FiberSpec(F.name, i, {j: float(val[j - 1]) for j in range(1, F.n + 1) if j != i},
                         box, resolution)
        rep = fiber_report(F, spec, method, n_seeds, seed + k)
        if rep.count >= 2:
            return spec, rep
    return None
