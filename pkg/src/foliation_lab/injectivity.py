"""Injectivity: collision search (a falsifier) and connected-fiber evidence.

A map whose fibers F_i^{-1}(c) are all connected for some i is injective.
Sampling can only support that hypothesis, so the positive outcome is called
evidence. A disconnected fiber makes the criterion inapplicable and says
nothing about injectivity either way.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares
from scipy.spatial import cKDTree

from .expr import lambdify
from .fibers import find_disconnected_fiber
from .fields import jacobian
from .maps import SmoothMap, box_contains, box_diameter, make_box

MIN_SEPARATION = 1e-3
IMAGE_TOL = 1e-9


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("FOLIATION_LAB_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class CollisionPair:
    a: np.ndarray
    b: np.ndarray
    discrepancy: float
    separation: float

    def to_json(self) -> dict:
        return {"a": [float(v) for v in self.a], "b": [float(v) for v in self.b],
                "image_discrepancy": self.discrepancy, "separation": self.separation}


def _jac_fn(F: SmoothMap):
    m = jacobian(F).matrix
    fn = lambdify([e for row in m for e in row], F.n)
    n = F.n

    def J(X):
        X = np.atleast_2d(X)
        vals = fn(*[X[:, j] for j in range(n)])
        out = np.stack([np.broadcast_to(np.asarray(v, float), (len(X),)) for v in vals], axis=-1)
        return out.reshape(len(X), n, n)

    return J


def _is_collision(F: SmoothMap, a, b) -> CollisionPair | None:
    fa, fb = F(a), F(b)
    disc = float(np.linalg.norm(fa - fb))
    sep = float(np.linalg.norm(a - b))
    if np.isfinite(disc) and disc <= IMAGE_TOL * (1 + float(np.linalg.norm(fa))) and sep >= MIN_SEPARATION:
        return CollisionPair(np.array(a, float), np.array(b, float), disc, sep)
    return None


def refine_pair(F: SmoothMap, a, b0, J=None) -> CollisionPair | None:
    """Solve F(b) = F(a) for b by Gauss-Newton from b0, with a held fixed."""
    J = J or _jac_fn(F)
    a = np.asarray(a, float)
    target = F(a)
    try:
        res = least_squares(lambda b: F(b) - target, np.asarray(b0, float), jac=lambda b: J(b)[0],
                            method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=200)
    except (ValueError, FloatingPointError):
        return None
    return _is_collision(F, a, res.x)


def collision_search(F: SmoothMap, box=None, n_samples: int = 20000, seed: int = 0,
                     max_refine: int = 400, anchor_neighbours: int = 16) -> CollisionPair | None:
    """First refined pair a != b with F(a) = F(b), or ``None``.

    Samples are hashed by F-value with cell size diam / (Lip * sqrt(N)), where
    Lip is the largest sampled operator norm of DF. The origin (if in the box)
    and the box center come first as anchors and are also matched with their
    nearest F-neighbours, so a collision through an anchor is found whenever
    one exists near a sample. Pairs are skipped when the local inverse bound
    |a - b| <= 2 |F(a) - F(b)| / sigma_min(DF(a)) already explains their
    closeness.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    box = make_box(box or F.box)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    rng = np.random.default_rng(seed)
    anchors = []
    if box_contains(box, np.zeros(F.n)):
        anchors.append(np.zeros(F.n))
    anchors.append(0.5 * (lo + hi))
    X = np.concatenate([np.array(anchors), lo + (hi - lo) * rng.random((n_samples - len(anchors), F.n))])
    with np.errstate(all="ignore"):
        Y = F(X)
    ok = np.all(np.isfinite(Y), axis=1)
    idx = np.nonzero(ok)[0]
    X, Y = X[idx], Y[idx]
    J = _jac_fn(F)
    with np.errstate(all="ignore"):
        sv = np.linalg.svd(J(X), compute_uv=False)
    lip = float(np.nanmax(sv[:, 0])) if len(sv) else 1.0
    smin = sv[:, -1]
    cell = box_diameter(box) / (max(lip, 1e-12) * np.sqrt(len(X)))

    tree = cKDTree(Y)
    cand = []
    for k in range(len(anchors)):
        m = min(anchor_neighbours + 1, len(X))
        _, nb = tree.query(Y[k], k=m, workers=_workers())
        cand.extend((k, int(j)) for j in np.atleast_1d(nb) if j != k)
    pairs = tree.query_pairs(np.sqrt(F.n) * cell, output_type="ndarray")
    if len(pairs):
        pairs = np.sort(pairs, axis=1)
        sep = np.linalg.norm(X[pairs[:, 0]] - X[pairs[:, 1]], axis=1)
        dY = np.linalg.norm(Y[pairs[:, 0]] - Y[pairs[:, 1]], axis=1)
        s0 = smin[pairs[:, 0]]
        keep = (sep >= MIN_SEPARATION) & ~((s0 > 0) & (sep <= 2 * dY / np.where(s0 > 0, s0, 1.0)))
        pairs = pairs[keep]
        pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
        cand.extend(map(tuple, pairs.tolist()))

    tried = set()
    attempts = 0
    for i, j in cand:
        if (i, j) in tried:
            continue
        tried.add((i, j))
        sep = float(np.linalg.norm(X[i] - X[j]))
        dY = float(np.linalg.norm(Y[i] - Y[j]))
        if sep < MIN_SEPARATION:
            continue
        if smin[i] > 0 and sep <= 2 * dY / smin[i]:
            continue
        attempts += 1
        hit = refine_pair(F, X[i], X[j], J)
        if hit is not None:
            return hit
        if attempts >= max_refine:
            break
    return None


def collision_report(F: SmoothMap, box=None, n_samples: int = 20000, seed: int = 0) -> dict:
    box = make_box(box or F.box)
    hit = collision_search(F, box, n_samples, seed)
    return {"map": F.name, "mode": "collision", "verdict": "COLLISION_FOUND" if hit else "NONE",
            "witness": hit.to_json() if hit else None, "samples": n_samples,
            "box": [list(b) for b in box], "seed": seed,
            "note": ("F(a) = F(b) with a != b: the map is not injective" if hit else
                     "no collision among the samples; this is not a proof of injectivity")}


PASS_NOTE = ("every sampled fiber is connected inside the box; this supports injectivity "
             "only within the sampled scope and is not a proof")
FAIL_NOTE = ("a sampled fiber is disconnected, so the connected-fiber criterion does not "
             "apply; this says nothing about whether the map is injective")


def connected_fiber_injectivity_evidence(F: SmoothMap, i: int, c_samples: int = 200, box=None,
                                         seed: int = 0, resolution: int = 512, n_seeds: int = 50,
                                         collision: CollisionPair | None | str = "skip") -> dict:
    """EVIDENCE_PASS if no sampled fiber of index ``i`` has two pieces, else HYPOTHESIS_FAILS."""
    if not 1 <= i <= F.n:
        raise ValueError(f"index {i} out of range 1..{F.n}")
    box = make_box(box or F.box)
    found = find_disconnected_fiber(F, i, budget=c_samples, seed=seed, box=box,
                                    resolution=resolution, n_seeds=n_seeds)
    out = {"map": F.name, "mode": "fiber_evidence", "i": i, "samples": c_samples,
           "box": [list(b) for b in box], "seed": seed}
    if found is None:
        out.update(verdict="EVIDENCE_PASS", witness=None, note=PASS_NOTE)
    else:
        spec, rep = found
        out.update(verdict="HYPOTHESIS_FAILS", witness={"fiber": spec.to_json(), "components": rep.count},
                   note=FAIL_NOTE)
    if collision != "skip":
        out["collision"] = collision.to_json() if collision is not None else None
        out["consistent"] = not (out["verdict"] == "EVIDENCE_PASS" and collision is not None)
    return out
