import numpy as np
import pytest

from foliation_lab.expr import evaluate, parse
from foliation_lab.fibers import (TRUNCATION_CAVEAT, FiberSpec, fiber_report, find_disconnected_fiber,
                                  level_set_components_2d, level_set_grid)
from foliation_lab.maps import SmoothMap

BOX = ((-2.0, 2.0), (-2.0, 2.0))


@pytest.mark.parametrize("f,c,count", [
    ("x1*x2", 1.0, 2),                # two hyperbola branches
    ("x2 - x1^2", 0.0, 1),
    ("x1^2 + x2^2", 1.0, 1),          # a circle is one component
    ("x1*(1 - x1*x2^2)", 0.0, 3),     # the line x1 = 0 and x1 = 1/x2^2 for |x2| >= 1/sqrt 2
    ("x1*(1 + x1*x2)", 0.0, 3),       # the line x1 = 0 and x2 = -1/x1 for |x1| >= 1/2
    ("x1", 5.0, 0),
])
def test_planar_level_set_counts(f, c, count):
    rep = level_set_components_2d(parse(f, 2), c, BOX, 256)
    assert rep.count == count
    assert rep.method == "GRID2D"
    assert TRUNCATION_CAVEAT in rep.caveats
    fn = parse(f, 2)
    for p in rep.representatives:
        assert abs(evaluate(fn, p) - c) < 1e-8


def test_count_is_stable_under_refinement():
    f = parse("x1*(1 - x1*x2^2)", 2)
    assert {level_set_components_2d(f, 0.0, BOX, r).count for r in (128, 256, 512)} == {3}
    # above zero the two branches and the line merge into one curve through (c, 0)
    assert {level_set_components_2d(f, 0.1, BOX, r).count for r in (128, 256, 512)} == {1}


def test_grid_labels_separate_components():
    grid = level_set_grid(parse("x1*x2", 2), 1.0, BOX, 128)
    a, b = grid.label_of([[1.0, 1.0], [-1.0, -1.0]])
    assert a != b and a >= 0 and b >= 0


def test_spiral_fiber_has_three_pieces(spiral3):
    # e^{x1} (cos x2, sin x2) = (1, 0) at x2 = 2 pi m; x2 in [-7, 7] admits m = -1, 0, 1
    rep = fiber_report(spiral3, FiberSpec("spiral3", 3, {1: 1.0, 2: 0.0}, spiral3.box))
    assert rep.method == "CURVE_ID"
    assert rep.count == 3
    got = sorted(round(p[1] / (2 * np.pi)) for p in rep.representatives)
    assert got == [-1, 0, 1]
    for p in rep.representatives:
        assert np.allclose(spiral3(p)[:2], [1.0, 0.0], atol=1e-9)


def test_curve_method_agrees_with_grid_in_the_plane(braun):
    spec = FiberSpec("braun", 2, {1: 0.0}, braun.box, 256)
    assert fiber_report(braun, spec, "GRID2D").count == fiber_report(braun, spec, "CURVE_ID").count == 3


def test_empty_fiber_and_identity(spiral3):
    rep = fiber_report(spiral3, FiberSpec("spiral3", 3, {1: 0.0, 2: 0.0}, spiral3.box))
    assert rep.count == 0
    F = SmoothMap.from_strings(["x1", "x2", "x3"], "id3")
    assert fiber_report(F, FiberSpec("id3", 2, {1: 0.2, 3: -0.4}, F.box)).count == 1


def test_disconnected_search():
    ident = SmoothMap.from_strings(["x1", "x2"], "id", BOX)
    assert find_disconnected_fiber(ident, 1, budget=20) is None
    g = SmoothMap.from_strings(["x1*(1 - x1*x2^2)", "x2"], "g", BOX)
    spec, rep = find_disconnected_fiber(g, 2, budget=20)
    assert rep.count >= 2 and spec.i == 2


def test_spec_validation():
    with pytest.raises(ValueError):
        FiberSpec("m", 1, {2: 0.0}, BOX, resolution=8)
    with pytest.raises(ValueError):
        FiberSpec("m", 1, {2: float("nan")}, BOX)
    with pytest.raises(ValueError):
        find_disconnected_fiber(SmoothMap.from_strings(["x1", "x2"]), 1, budget=0)
