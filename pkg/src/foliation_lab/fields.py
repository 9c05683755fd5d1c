"""Jacobian matrices, cofactor vector fields and the two identities they satisfy.

For F = (f1, ..., fn) the i-th cofactor field acts on a function phi as the
Jacobian determinant of F with fi replaced by phi. Its coefficients are the
cofactors of row i of DF, so ``V_i(f_j) = delta_ij * det DF`` and
``div(f_i V_i) = det DF``.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .expr import ZERO, Expr, diff, is_const, lambdify, simplify, to_text
from .maps import SmoothMap


def _det(m: list[list[Expr]]) -> Expr:
    n = len(m)
    if n == 1:
        return m[0][0]
    if n == 2:
        return simplify(m[0][0] * m[1][1] - m[0][1] * m[1][0])
    terms = []
    for j in range(n):
        if is_const(m[0][j], 0.0):
            continue
        minor = [row[:j] + row[j + 1:] for row in m[1:]]
        sub = _det(minor)
        if is_const(sub, 0.0):
            continue
        t = m[0][j] * sub
        terms.append(t if j % 2 == 0 else -t)
    if not terms:
        return ZERO
    return simplify(Expr("sum", tuple(terms)) if len(terms) > 1 else terms[0])


def determinant(m: list[list[Expr]]) -> Expr:
    """Symbolic determinant by Laplace expansion along the first row."""
    return _det([list(r) for r in m])


def cofactor(m: list[list[Expr]], i: int, j: int) -> Expr:
    """Signed cofactor of entry (i, j), 0-based indices."""
    minor = [row[:j] + row[j + 1:] for k, row in enumerate(m) if k != i]
    d = _det(minor) if minor else Expr("const", (), 1.0)
    return d if (i + j) % 2 == 0 else simplify(-d)


@dataclass(frozen=True, eq=False)
class VectorFieldExpr:
    """A vector field sum_j components[j] * d/dx_{j+1}."""

    components: tuple
    provenance: tuple = ("", 0)

    @property
    def n(self) -> int:
        return len(self.components)

    @cached_property
    def _numeric(self):
        return lambdify(self.components, self.n)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        vals = self._numeric(*[x[..., j] for j in range(self.n)])
        return np.stack([np.broadcast_to(np.asarray(v, dtype=float), x.shape[:-1]) for v in vals], axis=-1)

    def apply(self, phi: Expr) -> Expr:
        """The derivative of ``phi`` along the field, as an expression."""
        terms = [c * diff(phi, j + 1) for j, c in enumerate(self.components)]
        return simplify(Expr("sum", tuple(terms)))

    def scaled(self, g: Expr) -> "VectorFieldExpr":
        return VectorFieldExpr(tuple(simplify(g * c) for c in self.components), self.provenance)

    def divergence(self) -> Expr:
        return simplify(Expr("sum", tuple(diff(c, j + 1) for j, c in enumerate(self.components))))

    def __str__(self):
        return "(" + ", ".join(to_text(c) for c in self.components) + ")"


@dataclass(frozen=True, eq=False)
class JacobianBundle:
    matrix: tuple  # matrix[i][j] = d f_{i+1} / d x_{j+1}
    det: Expr

    @cached_property
    def _det_numeric(self):
        return lambdify(self.det, len(self.matrix))

    def det_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v = self._det_numeric(*[x[..., j] for j in range(len(self.matrix))])
        return np.broadcast_to(np.asarray(v, dtype=float), x.shape[:-1])


_JACOBIANS: "weakref.WeakKeyDictionary[SmoothMap, JacobianBundle]" = weakref.WeakKeyDictionary()


def jacobian(F: SmoothMap) -> JacobianBundle:
    """DF with entry (i, j) = d f_i / d x_j, and det DF by Laplace expansion."""
    bundle = _JACOBIANS.get(F)
    if bundle is None:
        m = [[diff(f, j) for j in range(1, F.n + 1)] for f in F.components]
        bundle = JacobianBundle(tuple(tuple(r) for r in m), determinant(m))
        _JACOBIANS[F] = bundle
    return bundle


def cofactor_field(F: SmoothMap, i: int) -> VectorFieldExpr:
    """The field V_i with coefficients coff(a_ij) of DF (1-based ``i``)."""
    if not 1 <= i <= F.n:
        raise ValueError(f"index {i} out of range 1..{F.n}")
    m = [list(r) for r in jacobian(F).matrix]
    comps = tuple(cofactor(m, i - 1, j) for j in range(F.n))
    return VectorFieldExpr(comps, (F.name, i))


def hamiltonian_field(f: Expr) -> VectorFieldExpr:
    """H_f = -d2 f d1 + d1 f d2 for a function of two variables."""
    return VectorFieldExpr((simplify(-diff(f, 2)), diff(f, 1)), ("hamiltonian", 0))


def constant_field(n: int, j: int) -> VectorFieldExpr:
    comps = tuple(Expr("const", (), 1.0 if k == j else 0.0) for k in range(1, n + 1))
    return VectorFieldExpr(comps, ("coordinate", j))


def _sample_points(box, samples: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    return lo + (hi - lo) * rng.random((samples, len(box)))


def _evaluate_many(exprs, n, pts) -> np.ndarray:
    f = lambdify(list(exprs), n)
    with np.errstate(all="ignore"):
        vals = f(*[pts[:, j] for j in range(n)])
    return np.stack([np.broadcast_to(np.asarray(v, dtype=float), (len(pts),)) for v in vals], axis=-1)


def verify_duality(F: SmoothMap, samples: int = 500, seed: int = 0, tol: float = 1e-8, box=None) -> dict:
    """Check V_i(f_j) = delta_ij det DF at random points of the box.

    Residuals are scaled by ``1 + |det DF|``; points where any expression is
    undefined are skipped and counted.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    n = F.n
    jac = jacobian(F)
    pts = _sample_points(box or F.box, samples, seed)
    a = _evaluate_many([e for row in jac.matrix for e in row], n, pts).reshape(len(pts), n, n)
    det = _evaluate_many([jac.det], n, pts)[:, 0]
    cof = []
    for i in range(1, n + 1):
        cof.append(_evaluate_many(cofactor_field(F, i).components, n, pts))
    cof = np.stack(cof, axis=1)  # (points, i, k)
    good = np.isfinite(a).all(axis=(1, 2)) & np.isfinite(det) & np.isfinite(cof).all(axis=(1, 2))
    pairs = []
    worst = 0.0
    for i in range(n):
        for j in range(n):
            val = np.einsum("pk,pk->p", cof[good, i, :], a[good, j, :])
            target = det[good] if i == j else 0.0
            res = np.abs(val - target) / (1.0 + np.abs(det[good]))
            mr = float(res.max()) if res.size else 0.0
            worst = max(worst, mr)
            pairs.append({"i": i + 1, "j": j + 1, "max_residual": mr, "points": int(good.sum())})
    return {
        "map": F.name,
        "identity": "kronecker",
        "pairs": pairs,
        "skipped": int((~good).sum()),
        "tolerance": tol,
        "verdict": "PASS" if worst <= tol and good.any() else "FAIL",
    }


def divergence_expr(F: SmoothMap, i: int) -> Expr:
    """div(f_i V_i) built symbolically."""
    V = cofactor_field(F, i)
    return V.scaled(F.components[i - 1]).divergence()


def verify_divergence_identity(F: SmoothMap, i: int, mode: str = "numeric", samples: int = 500,
                               seed: int = 0, box=None) -> dict:
    """Check div(f_i V_i) = det DF.

    ``numeric`` compares the two evaluated expressions (tolerance 1e-6);
    ``symbolic`` evaluates the simplified difference expression (1e-10).
    """
    if not 1 <= i <= F.n:
        raise ValueError(f"index {i} out of range 1..{F.n}")
    n = F.n
    det = jacobian(F).det
    div = divergence_expr(F, i)
    pts = _sample_points(box or F.box, samples, seed)
    if mode == "numeric":
        tol = 1e-6
        vals = _evaluate_many([div, det], n, pts)
        d, dv = vals[:, 0], vals[:, 1]
        good = np.isfinite(d) & np.isfinite(dv)
        res = np.abs(d[good] - dv[good]) / (1.0 + np.abs(dv[good]))
    elif mode == "symbolic":
        tol = 1e-10
        diff_expr = simplify(div - det)
        vals = _evaluate_many([diff_expr, det], n, pts)
        r, dv = vals[:, 0], vals[:, 1]
        good = np.isfinite(r) & np.isfinite(dv)
        res = np.abs(r[good]) / (1.0 + np.abs(dv[good]))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    mr = float(res.max()) if res.size else 0.0
    return {
        "map": F.name,
        "identity": "divergence",
        "mode": mode,
        "pairs": [{"i": i, "j": i, "max_residual": mr, "points": int(good.sum())}],
        "skipped": int((~good).sum()),
        "tolerance": tol,
        "verdict": "PASS" if mr <= tol and good.any() else "FAIL",
    }
