"""Integral curves of vector fields inside a box.

The integrator is the Dormand-Prince 5(4) embedded pair with cubic Hermite
dense output. Curves stop when they leave the box (the exit point is refined
onto the boundary), when the step or arclength budget runs out, or when the
step size underflows.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .expr import lambdify
from .fields import VectorFieldExpr, cofactor_field, jacobian
from .maps import SmoothMap, box_contains, box_diameter


class Termination(str, Enum):
    LEFT_BOX = "LEFT_BOX"
    BUDGET = "BUDGET"
    STEP_UNDERFLOW = "STEP_UNDERFLOW"


class ZeroFieldError(ValueError):
    """The field (numerically) vanishes at the starting point."""


@dataclass
class TraceOptions:
    box: tuple
    rtol: float = 1e-9
    atol: float = 1e-12
    max_steps: int = 20000
    max_arclength: float = math.inf
    arclength: bool = True
    max_step: float = math.inf

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("rtol and atol must be positive")
        for lo, hi in self.box:
            if not lo < hi:
                raise ValueError("empty box")


@dataclass
class CurveSegment:
    times: np.ndarray
    points: np.ndarray
    velocities: np.ndarray  # dx/dt at each point, in the curve's own time
    termination: Termination
    direction: str
    provenance: tuple = ("", 0)
    loop_flag: bool = False
    # termination of the backward half when two traces are glued
    termination_backward: Termination | None = None

    def __len__(self):
        return len(self.times)

    @property
    def arclength(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.points, axis=0), axis=1)))

    def at(self, t: float) -> np.ndarray:
        """Cubic Hermite interpolation of the curve at time ``t``."""
        ts = self.times
        asc = ts[-1] >= ts[0]
        if not asc:
            ts = ts[::-1]
        k = int(np.clip(np.searchsorted(ts, t) - 1, 0, len(ts) - 2))
        if not asc:
            k = len(ts) - 2 - k
            i0, i1 = k + 1, k
        else:
            i0, i1 = k, k + 1
        return hermite(self.times[i0], self.times[i1], self.points[i0], self.points[i1],
                       self.velocities[i0], self.velocities[i1], t)

    def densified(self, spacing: float) -> np.ndarray:
        """Points along the curve no farther than ``spacing`` apart (approx.)."""
        out = [self.points[:1]]
        for k in range(len(self.times) - 1):
            seg = np.linalg.norm(self.points[k + 1] - self.points[k])
            m = max(1, int(math.ceil(seg / spacing)))
            if m > 1:
                ts = self.times[k] + (self.times[k + 1] - self.times[k]) * np.arange(1, m) / m
                out.append(np.array([hermite(self.times[k], self.times[k + 1], self.points[k],
                                             self.points[k + 1], self.velocities[k],
                                             self.velocities[k + 1], t) for t in ts]))
            out.append(self.points[k + 1:k + 2])
        return np.concatenate(out)

    def to_csv(self, path) -> None:
        n = self.points.shape[1]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{j}" for j in range(1, n + 1)])
            for t, p in zip(self.times, self.points):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in p])


def hermite(t0, t1, y0, y1, f0, f1, t):
    h = t1 - t0
    if h == 0:
        return np.array(y0, dtype=float)
    s = (t - t0) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = _B - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


class _Rhs:
    """Right-hand side x' = sign * V(x) (optionally normalized to unit speed)."""

    def __init__(self, V: VectorFieldExpr, sign: float, unit: bool):
        self.f = lambdify(V.components, V.n, backend="math")
        self.sign = sign
        self.unit = unit
        self.raw_norm = 0.0

    def __call__(self, y: np.ndarray) -> np.ndarray:
        try:
            v = np.array(self.f(*y.tolist()), dtype=float)
        except (ValueError, ZeroDivisionError, OverflowError):
            return np.full(len(y), np.nan)
        if self.unit:
            nv = math.sqrt(float(v @ v))
            self.raw_norm = nv
            if nv == 0.0:
                return np.full(len(y), np.nan)
            v = v / nv
        return self.sign * v


def _dopri_step(rhs, y, f0, h):
    k = [f0]
    for s in range(1, 7):
        yi = y + h * sum(a * kk for a, kk in zip(_A[s], k))
        k.append(rhs(yi))
    K = np.array(k)
    y_new = y + h * (_B @ K)
    err = h * (_E @ K)
    return y_new, err, k[6]


def _outside(box, y) -> bool:
    return not box_contains(box, y)


def trace(V: VectorFieldExpr, x0, opts: TraceOptions, direction: str = "forward") -> CurveSegment:
    """Integrate x' = V(x) from ``x0`` until the curve leaves ``opts.box``."""
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be forward or backward, not {direction!r}")
    y = np.asarray(x0, dtype=float).copy()
    n = len(y)
    if not box_contains(opts.box, y, 1e-9):
        raise ValueError(f"start point {y.tolist()} lies outside the tracing box")
    try:
        v0 = np.array(lambdify(V.components, n, backend="math")(*y.tolist()), dtype=float)
    except (ValueError, ZeroDivisionError, OverflowError) as exc:
        raise ZeroFieldError(f"field undefined at {y.tolist()}: {exc}") from exc
    if not np.all(np.isfinite(v0)) or float(np.linalg.norm(v0)) < opts.atol:
        raise ZeroFieldError(f"|V(x0)| < {opts.atol} at {y.tolist()} (det DF ~ 0?)")
    sign = 1.0 if direction == "forward" else -1.0
    rhs = _Rhs(V, sign, opts.arclength)
    box = opts.box
    diam = box_diameter(box)
    f = rhs(y)
    speed = float(np.linalg.norm(f))
    h = min(1e-2 * diam / max(speed, 1e-300), opts.max_step)
    h0 = h
    s = 0.0
    arclen = 0.0
    ss, ys, fs = [0.0], [y.copy()], [f.copy()]
    loop_flag = False
    loop_tol = 1e-6 * (1.0 + float(np.linalg.norm(y)))
    termination = Termination.BUDGET
    tiny = 0  # consecutive accepted steps that make no real progress
    for _ in range(opts.max_steps):
        if h < 1e-12:
            termination = Termination.STEP_UNDERFLOW
            break
        y_new, err, f_new = _dopri_step(rhs, y, f, h)
        if not (np.all(np.isfinite(y_new)) and np.all(np.isfinite(err)) and np.all(np.isfinite(f_new))):
            h *= 0.25
            continue
        scale = opts.atol + opts.rtol * np.maximum(np.abs(y), np.abs(y_new))
        e = float(np.sqrt(np.mean((err / scale) ** 2)))
        if e > 1.0:
            h *= max(0.2, 0.9 * e ** -0.2)
            continue
        if _outside(box, y_new):
            y_new, f_new, h = _refine_exit(rhs, box, y, f, y_new, f_new, h)
            s += h
            arclen += float(np.linalg.norm(y_new - y))
            ss.append(s); ys.append(y_new); fs.append(f_new)
            termination = Termination.LEFT_BOX
            break
        s += h
        moved = float(np.linalg.norm(y_new - y))
        arclen += moved
        tiny = tiny + 1 if moved < 1e-10 * diam else 0
        if tiny >= 50:
            termination = Termination.STEP_UNDERFLOW
            break
        if not loop_flag and arclen > 10 * h0 and _passes_near(ys[0], s - h, s, y, y_new, f, f_new, loop_tol):
            loop_flag = True
        y, f = y_new, f_new
        ss.append(s); ys.append(y.copy()); fs.append(f.copy())
        if arclen >= opts.max_arclength:
            termination = Termination.BUDGET
            break
        fac = 5.0 if e == 0.0 else min(5.0, max(0.2, 0.9 * e ** -0.2))
        h = min(h * fac, opts.max_step)
    times = np.array(ss) * sign
    pts = np.array(ys)
    # velocities as dx/dt in the curve's signed time
    vel = np.array(fs) * sign
    return CurveSegment(times, pts, vel, termination, direction, V.provenance, loop_flag)


def _passes_near(x0, t0, t1, y0, y1, f0, f1, tol) -> bool:
    """Whether the dense-output arc of one step comes within ``tol`` of x0."""
    d = y1 - y0
    L = float(d @ d)
    u = 0.0 if L == 0.0 else min(1.0, max(0.0, float((x0 - y0) @ d) / L))
    chord = float(np.linalg.norm(y0 + u * d - x0))
    if chord > tol + math.sqrt(L):
        return False
    res = minimize_scalar(lambda t: float(np.linalg.norm(hermite(t0, t1, y0, y1, f0, f1, t) - x0)),
                          bounds=(t0, t1), method="bounded", options={"xatol": 1e-12 * max(1.0, abs(t1))})
    return min(res.fun, float(np.linalg.norm(y1 - x0))) < tol


def _exit_excess(box, y) -> float:
    return max(max(lo - v, v - hi) for (lo, hi), v in zip(box, y))


def _refine_exit(rhs, box, y, f, y_new, f_new, h):
    """Shrink the last step so the end point lands on the box boundary."""
    lo_h, hi_h = 0.0, h
    y_hi, f_hi = y_new, f_new
    for _ in range(80):
        if hi_h - lo_h <= 1e-15 * max(h, 1e-300):
            break
        mid = 0.5 * (lo_h + hi_h)
        y_mid, _, f_mid = _dopri_step(rhs, y, f, mid)
        if not np.all(np.isfinite(y_mid)):
            hi_h = mid
            continue
        ex = _exit_excess(box, y_mid)
        if ex > 0:
            hi_h, y_hi, f_hi = mid, y_mid, f_mid
            if ex <= 1e-10:
                break
        else:
            lo_h = mid
            if -ex <= 1e-10:
                hi_h, y_hi, f_hi = mid, y_mid, f_mid
                break
    return y_hi, f_hi, hi_h


def trace_both(V: VectorFieldExpr, x0, opts: TraceOptions) -> CurveSegment:
    """Backward and forward traces glued at the seed; times increase along the curve."""
    fw = trace(V, x0, opts, "forward")
    bw = trace(V, x0, opts, "backward")
    times = np.concatenate([bw.times[::-1], fw.times[1:]])
    pts = np.concatenate([bw.points[::-1], fw.points[1:]])
    vel = np.concatenate([bw.velocities[::-1], fw.velocities[1:]])
    return CurveSegment(times, pts, vel, fw.termination, "both", V.provenance,
                        fw.loop_flag or bw.loop_flag, bw.termination)


def _values(exprs, n, pts) -> np.ndarray:
    f = lambdify(list(exprs), n)
    with np.errstate(all="ignore"):
        vals = f(*[pts[:, j] for j in range(n)])
    return np.stack([np.broadcast_to(np.asarray(v, dtype=float), (len(pts),)) for v in vals], axis=-1)


def monotonicity_diagnostics(c: CurveSegment, F: SmoothMap, i: int, drift_tol: float = 1e-6) -> dict:
    """Check that f_i is monotone and the other components constant along ``c``.

    Increments of f_i (in increasing time) must carry the sign of det DF; on
    increments where det DF changes sign the expected sign is undefined and
    the increment is only counted.
    """
    order = np.argsort(c.times)
    pts = c.points[order]
    vals = _values(F.components, F.n, pts)
    det = jacobian(F).det_at(pts)
    x0_idx = int(np.argmin(np.abs(c.times[order])))
    drifts = {}
    worst_drift = 0.0
    first_bad = None
    for j in range(1, F.n + 1):
        if j == i:
            continue
        ref = vals[x0_idx, j - 1]
        d = np.abs(vals[:, j - 1] - ref)
        drifts[j] = float(d.max())
        scaled = d / (1.0 + abs(ref))
        worst_drift = max(worst_drift, float(scaled.max()))
        bad = np.nonzero(scaled > drift_tol)[0]
        if bad.size and (first_bad is None or bad[0] < first_bad):
            first_bad = int(bad[0])
    fi = vals[:, i - 1]
    inc = np.diff(fi)
    sgn = np.sign(det)
    same = sgn[:-1] == sgn[1:]
    expected = sgn[:-1]
    noise = 1e-13 * (1.0 + np.abs(fi[:-1]))
    wrong = same & (inc * expected < -noise)
    flat = same & (np.abs(inc) <= noise)
    if wrong.any():
        k = int(np.nonzero(wrong)[0][0])
        first_bad = k if first_bad is None else min(first_bad, k)
    monotone_ok = not wrong.any()
    verdict = "PASS" if monotone_ok and worst_drift <= drift_tol else "FAIL"
    return {
        "index": i,
        "direction": int(np.sign(det[x0_idx])),
        "det_sign_changes": int((~same).sum()),
        "flat_increments": int(flat.sum()),
        "max_drift": drifts,
        "max_scaled_drift": worst_drift,
        "monotone": monotone_ok,
        "first_violation": first_bad,
        "verdict": verdict,
    }


def boundary_exit_check(V: VectorFieldExpr, x0, box, opts: TraceOptions | None = None) -> dict:
    """Both directions must leave ``box`` within the step budget."""
    opts = opts or TraceOptions(box=box)
    if opts.box != box:
        opts = TraceOptions(box=box, rtol=opts.rtol, atol=opts.atol, max_steps=opts.max_steps,
                            max_arclength=opts.max_arclength, arclength=opts.arclength,
                            max_step=opts.max_step)
    fw = trace(V, x0, opts, "forward")
    bw = trace(V, x0, opts, "backward")
    reasons = {"forward": fw.termination.value, "backward": bw.termination.value}
    if fw.termination is Termination.LEFT_BOX and bw.termination is Termination.LEFT_BOX:
        verdict = "PASS"
    elif Termination.STEP_UNDERFLOW in (fw.termination, bw.termination):
        verdict = "INCONCLUSIVE(STEP_UNDERFLOW)"
    else:
        verdict = "INCONCLUSIVE(BUDGET)"
    return {"x0": [float(v) for v in x0], "terminations": reasons,
            "loop_flag": fw.loop_flag or bw.loop_flag, "verdict": verdict}


def field_for(F: SmoothMap, i: int) -> VectorFieldExpr:
    return cofactor_field(F, i)
