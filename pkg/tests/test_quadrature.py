import math

import numpy as np
import pytest

from foliation_lab.quadrature import integrate_cube


@pytest.mark.parametrize("d", [1, 2, 3])
def test_polynomials_are_exact(d):
    r = integrate_cube(lambda X: np.prod(X ** 3, axis=1) + 1.0, d)
    assert r.value == pytest.approx(0.25 ** d + 1.0, rel=1e-14)
    assert r.converged


def test_smooth_integrand():
    r = integrate_cube(lambda X: np.exp(X.sum(axis=1)), 3, rtol=1e-10)
    assert r.value == pytest.approx((math.e - 1) ** 3, rel=1e-10)


def test_endpoint_singularity_refines():
    r = integrate_cube(lambda X: 1 / np.sqrt(X[:, 0]), 1, rtol=1e-6, max_cells=20000)
    assert r.value == pytest.approx(2.0, rel=1e-4)
    assert r.cells > 1


def test_zero_dimensional_cube():
    assert integrate_cube(lambda X: np.full(len(X), 3.5), 0).value == 3.5
