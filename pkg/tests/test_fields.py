import numpy as np
import pytest

from foliation_lab.expr import evaluate, lambdify, parse, simplify
from foliation_lab.fields import (cofactor_field, constant_field, divergence_expr, hamiltonian_field, jacobian,
                                  verify_divergence_identity, verify_duality)
from foliation_lab.maps import SmoothMap

from conftest import fd_gradient, random_poly_map


def _numeric_jacobian(F, x):
    return np.array([fd_gradient(lambda y, k=k: F(y)[k], x, 1e-6) for k in range(F.n)])


@pytest.mark.parametrize("n", [2, 3, 4])
def test_jacobian_and_cofactors_against_linear_algebra(n):
    rng = np.random.default_rng(n)
    F = random_poly_map(rng, n)
    J = jacobian(F)
    Jfn = lambdify([e for row in J.matrix for e in row], n)
    for x in rng.uniform(-1, 1, (10, n)):
        A = np.array([float(v) for v in Jfn(*x)]).reshape(n, n)
        assert np.allclose(A, _numeric_jacobian(F, x), atol=1e-6)
        assert J.det_at(x) == pytest.approx(np.linalg.det(A), rel=1e-9, abs=1e-9)
        if abs(np.linalg.det(A)) > 1e-3:
            # the cofactor matrix is det(A) * inv(A)^T; V_i is its row i
            C = np.linalg.det(A) * np.linalg.inv(A).T
            for i in range(1, n + 1):
                assert np.allclose(cofactor_field(F, i)(x), C[i - 1], rtol=1e-8, atol=1e-8)


def test_kronecker_identity_on_random_maps():
    rng = np.random.default_rng(7)
    for _ in range(5):
        F = random_poly_map(rng, int(rng.choice([2, 3])))
        assert verify_duality(F, samples=200, seed=1)["verdict"] == "PASS"


def test_divergence_identity_both_modes(spiral3):
    for i in (1, 2, 3):
        for mode in ("numeric", "symbolic"):
            r = verify_divergence_identity(spiral3, i, mode, samples=200)
            assert r["verdict"] == "PASS", r


def test_divergence_expression_is_det_for_spiral(spiral2):
    d = simplify(divergence_expr(spiral2, 1) - jacobian(spiral2).det)
    for x in ([0.1, 0.2], [-0.7, 3.0]):
        assert abs(evaluate(d, x)) < 1e-12


def test_duality_reports_a_broken_identity():
    # a hand-made field that is not the cofactor field fails the check
    F = SmoothMap.from_strings(["x1 + x2^2", "x2"], "toy", [(-1, 1), (-1, 1)])
    r = verify_duality(F, samples=50, tol=1e-8)
    assert r["verdict"] == "PASS"
    assert len(r["pairs"]) == 4
    assert verify_duality(F, samples=50, tol=-1.0)["verdict"] == "FAIL"


def test_hamiltonian_field_is_the_paired_cofactor_field():
    f = parse("x1*(1 - x1*x2^2)", 2)
    F = SmoothMap((f, parse("x2", 2)), "g_pair", ((-2, 2), (-2, 2)))
    H = hamiltonian_field(f)
    V2 = cofactor_field(F, 2)
    pts = np.random.default_rng(0).uniform(-2, 2, (50, 2))
    assert np.allclose(H(pts), V2(pts))
    # H_f(f) = 0
    assert np.allclose([evaluate(H.apply(f), p) for p in pts], 0.0, atol=1e-12)


def test_constant_field_and_index_checks(spiral2):
    assert np.allclose(constant_field(3, 2)([0.0, 0.0, 0.0]), [0, 1, 0])
    with pytest.raises(ValueError):
        cofactor_field(spiral2, 3)
    with pytest.raises(ValueError):
        verify_divergence_identity(spiral2, 0)
    with pytest.raises(ValueError):
        verify_divergence_identity(spiral2, 1, mode="fuzzy")
