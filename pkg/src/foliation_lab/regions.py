"""Mild half-Reeb regions, given parametrically, and the integral obstruction.

A region file describes the exhaustion P_k as the image of the unit cube
under a map Phi_k(t1..tn) written in the expression language (with the extra
symbol ``k``). Each face t_j = 0 or 1 of the cube carries a tag:

* ``Q``: a leaf patch of the foliation function (f constant on it),
* ``L``: a piece of the fixed bounded hypersurface L,
* ``cut``: a moving face that is neither (the region is then not strict),
* ``degenerate``: collapsed to lower dimension (no flux),
* ``seam``: identified with the opposite face (fluxes cancel).

L itself is a list of patches psi(s1..s_{n-1}) over the unit cube.

Volume integrals use |det DPhi|; boundary fluxes use the Piola form
G(Phi) . cof(DPhi) e_j on face j, oriented outwards by sign(det DPhi).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from .expr import Expr, ZERO, diff, lambdify, parse, to_text
from .fields import VectorFieldExpr, cofactor, cofactor_field, determinant, jacobian
from .maps import SmoothMap
from .quadrature import integrate_cube

TAGS = ("Q", "L", "cut", "degenerate", "seam")


class RegionInvalid(ValueError):
    """A region violates one of its structural invariants."""


class NegativeH(ValueError):
    """The density of the obstruction integral is negative somewhere."""


class TangencyViolation(ValueError):
    """A Q face is not tangent to V_n, so it is not a leaf patch."""


@dataclass(frozen=True)
class Face:
    axis: int  # 1-based parameter index
    end: int  # 0 or 1
    tag: str


@dataclass(eq=False)
class MHRCRegion:
    name: str
    dim: int
    foliation: Expr
    patch: tuple  # Phi components over t1..tn and k (variable n+1)
    faces: tuple
    L: tuple  # patches over s1..s_{n-1}
    k_min: int = 1
    corners: tuple = ()
    anchor: str = ""
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.dim
        if len(self.patch) != n:
            raise RegionInvalid(f"patch has {len(self.patch)} components, expected {n}")
        seen = {(f.axis, f.end) for f in self.faces}
        if seen != {(a, e) for a in range(1, n + 1) for e in (0, 1)}:
            raise RegionInvalid("every face t_j = 0, 1 needs exactly one tag")
        for f in self.faces:
            if f.tag not in TAGS:
                raise RegionInvalid(f"unknown face tag {f.tag!r}")
        tn = n + 1
        self._phi = lambdify(list(self.patch), tn)
        D = [[diff(c, j) for j in range(1, n + 1)] for c in self.patch]
        self._D = D
        self.det_expr = determinant(D)
        self._det = lambdify(self.det_expr, tn)
        self._cof = {}
        for j in range(n):
            col = [cofactor(D, i, j) for i in range(n)]
            self._cof[j + 1] = lambdify(col, tn)
        self._f = lambdify(self.foliation, n)
        self._L = []
        for comps in self.L:
            m = [[diff(c, j) for j in range(1, n)] + [ZERO] for c in comps]
            normal = [cofactor(m, i, n - 1) for i in range(n)]
            self._L.append((lambdify(list(comps), max(n - 1, 1)), lambdify(normal, max(n - 1, 1))))

    @property
    def strict(self) -> bool:
        return not any(f.tag == "cut" for f in self.faces)

    # numeric helpers -------------------------------------------------------
    def _with_k(self, T, k):
        T = np.atleast_2d(np.asarray(T, dtype=float))
        return [T[:, j] for j in range(self.dim)] + [np.full(len(T), float(k))]

    def phi(self, T, k) -> np.ndarray:
        cols = self._with_k(T, k)
        with np.errstate(all="ignore"):
            out = self._phi(*cols)
        return np.stack([np.broadcast_to(np.asarray(v, float), cols[0].shape) for v in out], axis=-1)

    def jac_det(self, T, k) -> np.ndarray:
        cols = self._with_k(T, k)
        with np.errstate(all="ignore"):
            return np.broadcast_to(np.asarray(self._det(*cols), float), cols[0].shape)

    def face_normal(self, T, k, face: Face) -> np.ndarray:
        """Area-weighted outward normal on a face, in x-space."""
        cols = self._with_k(T, k)
        with np.errstate(all="ignore"):
            out = self._cof[face.axis](*cols)
        N = np.stack([np.broadcast_to(np.asarray(v, float), cols[0].shape) for v in out], axis=-1)
        sgn = self.orientation(k)
        return N * (1.0 if face.end == 1 else -1.0) * sgn

    def orientation(self, k) -> float:
        d = self.jac_det(np.full((1, self.dim), 0.5), k)[0]
        return 1.0 if d > 0 else -1.0

    def f_values(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        with np.errstate(all="ignore"):
            return np.broadcast_to(np.asarray(self._f(*[X[:, j] for j in range(self.dim)]), float), (len(X),))

    def L_points(self, S, patch: int) -> np.ndarray:
        S = np.atleast_2d(S)
        fn, _ = self._L[patch]
        out = fn(*[S[:, j] for j in range(S.shape[1])])
        return np.stack([np.broadcast_to(np.asarray(v, float), (len(S),)) for v in out], axis=-1)

    def L_normals(self, S, patch: int) -> np.ndarray:
        S = np.atleast_2d(S)
        _, fn = self._L[patch]
        out = fn(*[S[:, j] for j in range(S.shape[1])])
        return np.stack([np.broadcast_to(np.asarray(v, float), (len(S),)) for v in out], axis=-1)

    def face_points(self, face: Face, S) -> np.ndarray:
        """Parameter points on ``face`` from (m, n-1) face coordinates."""
        S = np.atleast_2d(S)
        cols = []
        s = 0
        for j in range(1, self.dim + 1):
            if j == face.axis:
                cols.append(np.full(len(S), float(face.end)))
            else:
                cols.append(S[:, s])
                s += 1
        return np.stack(cols, axis=-1)

    def to_json(self) -> dict:
        return dict(self.source) if self.source else {"name": self.name}


def _names(n, k=True):
    d = {f"t{j}": j for j in range(1, n + 1)}
    if k:
        d["k"] = n + 1
    return d


def region_from_dict(d: dict) -> MHRCRegion:
    try:
        n = int(d["dim"])
        fol = parse(d["foliation"], n)
        patch = tuple(parse(s, n + 1, _names(n)) for s in d["patch"])
        faces = tuple(Face(int(f["axis"]), int(f["end"]), f["tag"]) for f in d["faces"])
        s_names = {f"s{j}": j for j in range(1, max(n - 1, 1) + 1)}
        L = tuple(tuple(parse(s, max(n - 1, 1), s_names) for s in p["patch"]) for p in d.get("L", []))
    except KeyError as exc:
        raise RegionInvalid(f"region file misses key {exc}") from exc
    except (ValueError, TypeError) as exc:
        raise RegionInvalid(f"malformed region: {exc}") from exc
    if len(patch) != n:
        raise RegionInvalid(f"patch has {len(patch)} components, expected {n}")
    for f in faces:
        if not (1 <= f.axis <= n and f.end in (0, 1)):
            raise RegionInvalid(f"face axis {f.axis} end {f.end} out of range")
        if f.tag not in ("Q", "L", "cut", "degenerate", "seam"):
            raise RegionInvalid(f"unknown face tag {f.tag!r}")
    return MHRCRegion(d.get("name", "region"), n, fol, patch, faces, L, int(d.get("k_min", 1)),
                      tuple(tuple(c) for c in d.get("corners", [])), d.get("anchor", ""), d)


def load_region(path) -> MHRCRegion:
    path = Path(path)
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RegionInvalid(f"{path}: not valid JSON ({exc})") from exc
    d.setdefault("name", path.stem)
    return region_from_dict(d)


# ---------------------------------------------------------------- exhaustion

@dataclass
class RegionMesh:
    k: int
    grid: np.ndarray  # (res, ..., res, n) images of a parameter grid
    boundary: dict  # tag -> list of (m, n) point arrays, one per face
    checks: dict

    def polygon(self) -> np.ndarray:
        """2D only: boundary loop of the region (counter-clockwise in t)."""
        g = self.grid
        return np.concatenate([g[:, 0], g[-1, 1:], g[::-1, -1][1:], g[0, ::-1][1:]])


def _rng(seed):
    return np.random.default_rng(seed)


def _inside(R: MHRCRegion, X, k, T0) -> np.ndarray:
    """Whether each X is Phi_k(t) for some t in the closed unit cube."""
    out = np.zeros(len(X), dtype=bool)
    for i, (x, t0) in enumerate(zip(X, T0)):
        res = least_squares(lambda t: R.phi(t[None, :], k)[0] - x, t0, bounds=(0.0, 1.0),
                            xtol=1e-14, ftol=1e-14, gtol=1e-14)
        out[i] = np.max(np.abs(res.fun)) <= 1e-8 * (1 + np.max(np.abs(x)))
    return out


def _L_distance(R: MHRCRegion, x) -> float:
    best = np.inf
    m = max(R.dim - 1, 1)
    starts = np.array(np.meshgrid(*[np.linspace(0.1, 0.9, 3)] * m, indexing="ij")).reshape(m, -1).T
    for p in range(len(R.L)):
        pts = R.L_points(starts, p)
        s0 = starts[int(np.argmin(np.linalg.norm(pts - x, axis=1)))]
        res = least_squares(lambda s: R.L_points(s[None, :], p)[0] - x, s0, bounds=(0.0, 1.0),
                            xtol=1e-15, ftol=1e-15, gtol=1e-15)
        best = min(best, float(np.linalg.norm(res.fun)))
    return best


def _face_samples(R: MHRCRegion, face: Face, m: int, rng) -> np.ndarray:
    S = rng.random((m, max(R.dim - 1, 1)))[:, : R.dim - 1]
    return R.face_points(face, S)


def check_region(R: MHRCRegion, k: int, samples: int = 40, seed: int = 0) -> dict:
    """Structural checks for one k; raises RegionInvalid on the first failure."""
    rng = _rng(seed + k)
    checks = {}
    # Q faces lie in leaves
    for face in R.faces:
        if face.tag != "Q":
            continue
        X = R.phi(_face_samples(R, face, samples, rng), k)
        fv = R.f_values(X)
        spread = float(fv.max() - fv.min())
        ok = spread <= 1e-8 * (1 + float(np.abs(fv).max()))
        checks[f"Q_leaf_t{face.axis}={face.end}"] = {"spread": spread, "pass": ok}
        if not ok:
            raise RegionInvalid(f"{R.name}: Q face t{face.axis}={face.end} is not in a leaf at k={k} "
                                f"(f varies by {spread:.3g})")
    # L faces lie in L
    if any(f.tag == "L" for f in R.faces) and not R.L:
        raise RegionInvalid(f"{R.name}: L faces declared but no L patches")
    for face in R.faces:
        if face.tag != "L":
            continue
        X = R.phi(_face_samples(R, face, max(8, samples // 4), rng), k)
        dist = max(_L_distance(R, x) for x in X)
        ok = dist <= 1e-7
        checks[f"L_in_L_t{face.axis}={face.end}"] = {"max_distance": dist, "pass": ok}
        if not ok:
            raise RegionInvalid(f"{R.name}: face t{face.axis}={face.end} leaves L at k={k} (distance {dist:.3g})")
    # L bounded
    if R.L:
        m = max(R.dim - 1, 1)
        S = rng.random((200, m))
        P = np.concatenate([R.L_points(S, p) for p in range(len(R.L))])
        diam = float(np.max(np.linalg.norm(P - P.mean(axis=0), axis=1))) * 2
        checks["L_bounded"] = {"diameter_estimate": diam, "pass": bool(np.isfinite(diam))}
        if not np.isfinite(diam):
            raise RegionInvalid(f"{R.name}: L is unbounded")
    # nesting P_{k-1} inside P_k
    if k > R.k_min:
        T = 0.05 + 0.9 * rng.random((samples // 2, R.dim))
        X = R.phi(T, k - 1)
        good = np.all(np.isfinite(X), axis=1)
        inside = _inside(R, X[good], k, T[good])
        checks["nested"] = {"points": int(good.sum()), "outside": int((~inside).sum()), "pass": bool(inside.all())}
        if not inside.all():
            raise RegionInvalid(f"{R.name}: P_{k - 1} is not contained in P_{k}")
    # one orientation throughout
    T = rng.random((samples, R.dim))
    d = R.jac_det(T, k)
    d = d[np.isfinite(d)]
    ok = bool(np.all(d > 0) or np.all(d < 0))
    checks["orientation"] = {"pass": ok}
    if not ok:
        raise RegionInvalid(f"{R.name}: the parametrization folds (det DPhi changes sign) at k={k}")
    return checks


def exhaustion(R: MHRCRegion, k: int, resolution: int = 33, seed: int = 0) -> RegionMesh:
    """Sampled P_k with its boundary split by tag, after the structural checks."""
    if k < 1:
        raise ValueError("k must be >= 1")
    checks = check_region(R, k, seed=seed)
    ax = np.linspace(0.0, 1.0, resolution)
    T = np.stack(np.meshgrid(*[ax] * R.dim, indexing="ij"), axis=-1)
    grid = R.phi(T.reshape(-1, R.dim), k).reshape(T.shape)
    boundary = {}
    fax = np.stack(np.meshgrid(*[ax] * (R.dim - 1), indexing="ij"), axis=-1).reshape(-1, R.dim - 1)
    for face in R.faces:
        boundary.setdefault(face.tag, []).append(R.phi(R.face_points(face, fax), k))
    return RegionMesh(k, grid, boundary, checks)


# ---------------------------------------------------------------- integrals

def _eval_expr(e: Expr, n: int, X) -> np.ndarray:
    fn = lambdify(e, n)
    with np.errstate(all="ignore"):
        return np.broadcast_to(np.asarray(fn(*[X[:, j] for j in range(n)]), float), (len(X),))


def volume_integral(R: MHRCRegion, h: Expr, k: int, rtol: float = 1e-6):
    fn = lambdify(h, R.dim)

    def integrand(T):
        X = R.phi(T, k)
        with np.errstate(all="ignore"):
            hv = np.broadcast_to(np.asarray(fn(*[X[:, j] for j in range(R.dim)]), float), (len(T),))
        return hv * np.abs(R.jac_det(T, k))

    return integrate_cube(integrand, R.dim, rtol=rtol)


def face_flux(R: MHRCRegion, G: VectorFieldExpr, k: int, face: Face, absolute: bool = False, rtol: float = 1e-7):
    if face.tag == "degenerate":
        return None

    def integrand(S):
        T = R.face_points(face, S)
        X = R.phi(T, k)
        g = G(X)
        N = R.face_normal(T, k, face)
        v = np.einsum("ij,ij->i", g, N)
        return np.abs(v) if absolute else v

    return integrate_cube(integrand, R.dim - 1, rtol=rtol, atol=1e-13)


def L_flux_bound(R: MHRCRegion, G: VectorFieldExpr, rtol: float = 1e-7) -> float:
    """M = sum over the L patches of the integral of |<G, N>|."""
    total = 0.0
    for p in range(len(R.L)):
        def integrand(S, p=p):
            X = R.L_points(S, p)
            return np.abs(np.einsum("ij,ij->i", G(X), R.L_normals(S, p)))

        total += integrate_cube(integrand, R.dim - 1, rtol=rtol, atol=1e-13).value
    return total


@dataclass
class ObstructionReport:
    region: str
    h: str
    ks: list
    values: list
    verdict: str
    fit: dict
    increments: list
    limit: float | None

    def to_json(self) -> dict:
        return {"region": self.region, "h": self.h, "k": self.ks, "s_k": self.values,
                "verdict": self.verdict, "fit": self.fit, "dyadic_increments": self.increments,
                "extrapolated_limit": self.limit,
                "note": "trend heuristic on finitely many k, not a proof of divergence"}


def trend_verdict(ks, values):
    """DIVERGENT_TREND when s_k ~ a log k fits (R^2 >= 0.99, a > 0) and does not slow down."""
    ks = np.asarray(ks, float)
    s = np.asarray(values, float)
    # the fit ignores k < 4, where O(1/k) transients dominate
    tail = ks >= 4 if np.count_nonzero(ks >= 4) >= 3 else np.ones(len(ks), dtype=bool)
    x = np.log(ks[tail])
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, s[tail], rcond=None)
    ss_tot = float(np.sum((s[tail] - s[tail].mean()) ** 2))
    ss_res = float(np.sum((A @ coef - s[tail]) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    dy = [int(k) for k in ks if int(k) & (int(k) - 1) == 0]
    sv = {int(k): v for k, v in zip(ks, s)}
    dvals = [sv[k] for k in dy]
    inc = [b - a for a, b in zip(dvals, dvals[1:])]
    fit = {"model": "s_k = a*log(k) + b", "a": float(coef[0]), "b": float(coef[1]), "r2": r2,
           "k_fitted": [int(k) for k in ks[tail]], "residuals": [float(v) for v in s[tail] - A @ coef]}
    growing = bool(inc) and inc[-1] >= 0.5 * float(np.mean(inc)) and inc[-1] > 0
    if r2 >= 0.99 and coef[0] > 0 and growing:
        return "DIVERGENT_TREND", fit, inc, None
    limit = float(s[-1])
    if len(dvals) >= 3:
        s0, s1, s2 = dvals[-3:]
        den = (s2 - s1) - (s1 - s0)
        if den != 0:
            limit = float(s2 - (s2 - s1) ** 2 / den)
    return "BOUNDED_TREND", fit, inc, limit


def obstruction_integral(R: MHRCRegion, h: Expr, k_max: int, ks=None, check: bool = True,
                         samples: int = 200, seed: int = 0) -> ObstructionReport:
    """s_k = integral of h over P_k for k = k_min..k_max (or ``ks``) and the trend verdict."""
    ks = list(ks) if ks is not None else list(range(max(R.k_min, 1), k_max + 1))
    rng = _rng(seed)
    vals = []
    for k in ks:
        if check:
            T = rng.random((samples, R.dim))
            X = R.phi(T, k)
            hv = _eval_expr(h, R.dim, X)
            bad = np.nonzero(hv < 0)[0]
            if bad.size:
                raise NegativeH(f"h = {hv[bad[0]]:.3g} < 0 at {X[bad[0]].tolist()} (k={k})")
        vals.append(volume_integral(R, h, k).value)
    verdict, fit, inc, limit = trend_verdict(ks, vals)
    return ObstructionReport(R.name, to_text(h), [int(k) for k in ks], [float(v) for v in vals],
                             verdict, fit, [float(v) for v in inc], limit)


def flux_field(F: SmoothMap) -> VectorFieldExpr:
    """f_n V_n, whose divergence is det DF."""
    return cofactor_field(F, F.n).scaled(F.components[-1])


def _agree(F: SmoothMap, R: MHRCRegion, seed=0):
    rng = _rng(seed)
    X = -2 + 4 * rng.random((50, F.n))
    a = F(X)[:, 0]
    b = R.f_values(X)
    good = np.isfinite(a) & np.isfinite(b)
    if not np.allclose(a[good], b[good], rtol=1e-10, atol=1e-10):
        raise ValueError("the map's first component is not the region's foliation function")


def tangency_residual(F: SmoothMap, R: MHRCRegion, k: int, samples: int = 100, seed: int = 0) -> float:
    """max <V_n, N_Q> / (|V_n| |N_Q|) over Q-face samples (degenerate normals skipped)."""
    V = cofactor_field(F, F.n)
    rng = _rng(seed + 17 * k)
    worst = 0.0
    for face in R.faces:
        if face.tag != "Q":
            continue
        T = _face_samples(R, face, samples, rng)
        X = R.phi(T, k)
        N = R.face_normal(T, k, face)
        v = V(X)
        nn = np.linalg.norm(N, axis=1)
        nv = np.linalg.norm(v, axis=1)
        ok = (nn > 1e-12 * max(1.0, nn.max())) & (nv > 0)
        if ok.any():
            r = np.abs(np.einsum("ij,ij->i", v[ok], N[ok])) / (nn[ok] * nv[ok])
            worst = max(worst, float(r.max()))
    return worst


@dataclass
class FluxReport:
    region: str
    map: str
    M: float
    ks: list
    det_integrals: list
    holds: list
    tangency: list
    verdict: str

    def to_json(self) -> dict:
        return {"region": self.region, "map": self.map, "M": self.M, "k": self.ks,
                "det_integrals": self.det_integrals, "bound_holds": self.holds,
                "tangency_residuals": self.tangency, "verdict": self.verdict}


def flux_bound(F: SmoothMap, R: MHRCRegion, k_max: int = 8, ks=None, tol: float = 1e-3) -> FluxReport:
    """M over L and the check int_{P_k} det DF <= M (1 + tol) for each k."""
    if F.n != R.dim:
        raise ValueError("map and region dimensions differ")
    _agree(F, R)
    G = flux_field(F)
    M = L_flux_bound(R, G)
    det = jacobian(F).det
    ks = list(ks) if ks is not None else list(range(max(R.k_min, 1), k_max + 1))
    dets, holds, tang = [], [], []
    for k in ks:
        r = tangency_residual(F, R, k)
        if r > 1e-6:
            raise TangencyViolation(f"{R.name}: Q face not tangent to V_{F.n} at k={k} (residual {r:.3g})")
        tang.append(r)
        v = volume_integral(R, det, k).value
        dets.append(v)
        holds.append(bool(v <= M * (1 + tol)))
    return FluxReport(R.name, F.name, M, [int(k) for k in ks], dets, holds, tang,
                      "PASS" if all(holds) else "FAIL")


def divergence_closure(F: SmoothMap, R: MHRCRegion, k: int) -> dict:
    """Compare the volume integral of det DF with the flux of f_n V_n through all of dP_k."""
    G = flux_field(F)
    vol = volume_integral(R, jacobian(F).det, k, rtol=1e-8).value
    parts = {}
    total = 0.0
    for face in R.faces:
        r = face_flux(R, G, k, face, rtol=1e-8)
        v = 0.0 if r is None else r.value
        parts[f"t{face.axis}={face.end}:{face.tag}"] = v
        total += v
    rel = abs(vol - total) / (1 + abs(vol))
    return {"k": k, "volume": vol, "boundary_flux": total, "faces": parts, "relative_residual": rel,
            "tangency_residual": tangency_residual(F, R, k), "pass": bool(rel <= 1e-4)}


def interior_extent(R: MHRCRegion, ks, samples: int = 2000, seed: int = 0) -> list:
    """max |x| over sampled points of P_k, for each k."""
    rng = _rng(seed)
    out = []
    for k in ks:
        T = rng.random((samples, R.dim))
        T = np.concatenate([T, np.eye(R.dim), np.zeros((1, R.dim))])
        X = R.phi(T, k)
        out.append(float(np.nanmax(np.linalg.norm(X, axis=1))))
    return out
