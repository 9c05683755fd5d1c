"""Search for obstructions to global solvability of a vector field.

A field is not globally solvable when some compact K admits integral-curve
intervals with both ends in K that leave every larger compact. At finite
scale that is a *witness*: one curve interval with ends a', b' in K and an
interior point z with |z| >= escape_radius.

Seeds come from a scrambled Sobol sample of K. Later rounds zoom (by a
factor 4) around the seed whose curve made the largest excursion between two
visits of K, since witnesses tend to sit on thin families of curves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .fields import VectorFieldExpr, cofactor_field
from .flow import CurveSegment, TraceOptions, hermite, trace, trace_both
from .maps import SmoothMap, box_contains, box_radius, make_box

K_SLACK = 1e-9
REPLAY_TOL = 1e-4
# witnesses are re-traced at this tolerance before they are emitted; replay
# uses ten times finer
POLISH_RTOL = 1e-12
POLISH_ATOL = 1e-14


@dataclass
class SolvabilityWitness:
    K: tuple
    a_prime: np.ndarray
    b_prime: np.ndarray
    z: np.ndarray
    escape_radius: float
    curve: CurveSegment
    seed_point: np.ndarray
    t_a: float
    t_b: float

    def to_json(self, curve_csv_path: str | None = None) -> dict:
        return {
            "K": [list(b) for b in self.K],
            "escape_radius": self.escape_radius,
            "a_prime": [float(v) for v in self.a_prime],
            "b_prime": [float(v) for v in self.b_prime],
            "z": [float(v) for v in self.z],
            "z_norm": float(np.linalg.norm(self.z)),
            "seed_point": [float(v) for v in self.seed_point],
            "curve_csv_path": curve_csv_path,
            "replay_tolerance": REPLAY_TOL,
        }


@dataclass
class SolvabilityVerdict:
    field_id: tuple
    verdict: str  # NOT_SOLVABLE | NO_OBSTRUCTION_FOUND
    witness: SolvabilityWitness | None = None
    stages: list = field(default_factory=list)
    budget: int = 0
    seed: int = 0

    def to_json(self, curve_csv_path: str | None = None) -> dict:
        out = {
            "field": {"map": self.field_id[0], "i": self.field_id[1]},
            "verdict": self.verdict,
            "budget": self.budget,
            "seed": self.seed,
            "stages": [{"K": [list(b) for b in K], "escape_radius": r} for K, r in self.stages],
            "witness": self.witness.to_json(curve_csv_path) if self.witness else None,
        }
        if self.verdict == "NO_OBSTRUCTION_FOUND":
            out["note"] = "semi-decision: no witness within the tested stages; not a proof of solvability"
        return out


def _chord_hits_box(p, q, box, slack=K_SLACK):
    """Liang-Barsky test for all chords p[k] -> q[k] at once."""
    lo = np.array([b[0] for b in box]) - slack
    hi = np.array([b[1] for b in box]) + slack
    d = q - p
    u0 = np.zeros(len(p))
    u1 = np.ones(len(p))
    ok = np.ones(len(p), dtype=bool)
    for j in range(p.shape[1]):
        dj = d[:, j]
        par = dj == 0
        ok &= ~(par & ((p[:, j] < lo[j]) | (p[:, j] > hi[j])))
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (lo[j] - p[:, j]) / dj
            tb = (hi[j] - p[:, j]) / dj
        tmin = np.where(par, -np.inf, np.minimum(ta, tb))
        tmax = np.where(par, np.inf, np.maximum(ta, tb))
        u0 = np.maximum(u0, tmin)
        u1 = np.minimum(u1, tmax)
    return ok & (u0 <= u1)


def _visits(curve: CurveSegment, K):
    """Chords of the curve that meet K, each with a curve point inside K."""
    P = curve.points
    hits = _chord_hits_box(P[:-1], P[1:], K)
    out = []
    for k in np.nonzero(hits)[0]:
        pt = None
        for idx in (k, k + 1):
            if box_contains(K, P[idx], K_SLACK):
                pt, t = P[idx], curve.times[idx]
                break
        if pt is None:
            t0, t1 = curve.times[k], curve.times[k + 1]
            for s in np.linspace(0.0, 1.0, 65)[1:-1]:
                t = t0 + s * (t1 - t0)
                y = hermite(t0, t1, P[k], P[k + 1], curve.velocities[k], curve.velocities[k + 1], t)
                if box_contains(K, y, K_SLACK):
                    pt = y
                    break
        if pt is not None:
            out.append((int(k), np.array(pt), float(t)))
    return out


def _scan(curve: CurveSegment, K, radius):
    """Return (witness parts or None, excursion score)."""
    vis = _visits(curve, K)
    if len(vis) < 2:
        return None, -np.inf
    norms = np.linalg.norm(curve.points, axis=1)
    first, last = vis[0][0], vis[-1][0]
    score = float(norms[first:last + 2].max()) if last > first else -np.inf
    for (ka, pa, ta), (kb, pb, tb) in zip(vis[:-1], vis[1:]):
        if kb <= ka:
            continue
        seg = norms[ka + 1:kb + 1]
        if seg.size and seg.max() >= radius:
            iz = ka + 1 + int(np.argmax(seg))
            return (pa, pb, curve.points[iz].copy(), ta, tb), score
    return None, score


def _tracing_box(K, radius):
    n = len(K)
    half = 2.0 * radius
    return make_box([(min(-half, K[j][0]), max(half, K[j][1])) for j in range(n)])


def dh_witness_search(V: VectorFieldExpr, K, escape_radius: float, budget: int = 256, seed: int = 0,
                      seeds=None, opts: TraceOptions | None = None, zoom_rounds: bool = True):
    """First witness of non-solvability for ``V`` relative to ``K``, or ``None``."""
    K = make_box(K)
    if escape_radius <= box_radius(K):
        raise ValueError("escape_radius must exceed the circumscribed radius of K")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    box = _tracing_box(K, escape_radius)
    if opts is None:
        opts = TraceOptions(box=box, max_step=0.25 * escape_radius)
    lo = np.array([b[0] for b in K])
    hi = np.array([b[1] for b in K])

    def attempt(x0):
        curve = trace_both(V, x0, opts)
        parts, score = _scan(curve, K, escape_radius)
        if parts is None:
            return None, score
        return _polish(V, K, escape_radius, parts[0], box, np.array(x0, float)), score

    used = 0
    for x0 in (seeds or []):
        if used >= budget:
            return None
        used += 1
        w, _ = attempt(x0)
        if w is not None:
            return w

    n = len(K)
    first = min(64, budget - used) if zoom_rounds else budget - used
    per_round = 16
    c_lo, c_hi = lo, hi
    round_no = 0
    while used < budget:
        m = first if round_no == 0 else min(per_round, budget - used)
        if m <= 0:
            break
        sob = qmc.Sobol(n, scramble=True, seed=seed + 7919 * round_no)
        pts = c_lo + (c_hi - c_lo) * sob.random(m)
        best, best_score = None, -np.inf
        for x0 in pts:
            used += 1
            w, score = attempt(x0)
            if w is not None:
                return w
            if score > best_score:
                best, best_score = x0, score
            if used >= budget:
                break
        round_no += 1
        if not zoom_rounds or best is None or not np.isfinite(best_score):
            c_lo, c_hi = lo, hi
            continue
        half = (c_hi - c_lo) / 8.0
        c_lo = np.maximum(lo, best - half)
        c_hi = np.minimum(hi, best + half)
    return None


def _polish(V, K, radius, a, box, x0):
    """Re-trace forward from a' at tight tolerance and rebuild the witness on that curve."""
    opts = TraceOptions(box=box, rtol=POLISH_RTOL, atol=POLISH_ATOL, max_step=0.05 * radius,
                        max_steps=200000)
    curve = trace(V, a, opts, "forward")
    parts, _ = _scan(curve, K, radius)
    if parts is None:
        return None
    a, b, z, ta, tb = parts
    return SolvabilityWitness(K, a, b, z, radius, curve, x0, ta, tb)


def polyline_distance(pts: np.ndarray, q) -> tuple:
    """Distance from ``q`` to the polyline through ``pts`` and the nearest vertex index."""
    q = np.asarray(q, dtype=float)
    if len(pts) == 1:
        return float(np.linalg.norm(pts[0] - q)), 0
    a, b = pts[:-1], pts[1:]
    d = b - a
    dd = np.einsum("ij,ij->i", d, d)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.clip(np.where(dd > 0, np.einsum("ij,ij->i", q - a, d) / dd, 0.0), 0.0, 1.0)
    dist = np.linalg.norm(a + u[:, None] * d - q, axis=1)
    k = int(np.argmin(dist))
    return float(dist[k]), k


def replay_witness(V: VectorFieldExpr, w: SolvabilityWitness, tol: float = REPLAY_TOL) -> dict:
    """Re-trace from a' at 10x finer tolerance and check it reaches z and b'."""
    opts = TraceOptions(box=_tracing_box(w.K, w.escape_radius), rtol=POLISH_RTOL / 10,
                        atol=POLISH_ATOL / 10,
                        max_step=0.05 * w.escape_radius, max_steps=200000)
    c = trace(V, w.a_prime, opts, "forward")
    pts = c.densified(1e-3 * w.escape_radius)
    dz, iz = polyline_distance(pts, w.z)
    db, _ = polyline_distance(pts[iz:], w.b_prime)
    ok = (box_contains(w.K, w.a_prime, K_SLACK) and box_contains(w.K, w.b_prime, K_SLACK)
          and float(np.linalg.norm(w.z)) >= w.escape_radius
          and dz <= tol and db <= tol)
    return {"z_distance": dz, "b_distance": db, "tolerance": tol,
            "verdict": "PASS" if ok else "FAIL"}


def default_policy(n: int, K=None) -> list:
    K = make_box(K or [(-1.0, 1.0)] * n)
    r = box_radius(K)
    return [(K, f * r) for f in (4.0, 8.0, 16.0)]


def classify(F: SmoothMap, i: int, policy=None, budget: int = 256, seed: int = 0,
             seeds=None) -> SolvabilityVerdict:
    """Staged witness search; the first witness settles NOT_SOLVABLE."""
    policy = list(policy) if policy is not None else default_policy(F.n)
    if not policy:
        raise ValueError("policy needs at least one stage")
    radii = [r for _, r in policy]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("stage radii must increase")
    V = cofactor_field(F, i)
    stages = [(make_box(K), float(r)) for K, r in policy]
    for s, (K, r) in enumerate(stages):
        w = dh_witness_search(V, K, r, budget, seed + 1000 * s, seeds=seeds)
        if w is not None:
            return SolvabilityVerdict((F.name, i), "NOT_SOLVABLE", w, stages[:s + 1], budget, seed)
    return SolvabilityVerdict((F.name, i), "NO_OBSTRUCTION_FOUND", None, stages, budget, seed)
