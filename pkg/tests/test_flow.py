import math

import numpy as np
import pytest

from foliation_lab.expr import parse
from foliation_lab.fields import VectorFieldExpr, cofactor_field
from foliation_lab.flow import (Termination, TraceOptions, ZeroFieldError, boundary_exit_check, hermite,
                                monotonicity_diagnostics, trace, trace_both)
from foliation_lab.maps import make_box


def _field(*texts):
    n = len(texts)
    return VectorFieldExpr(tuple(parse(t, n) for t in texts))


BOX = make_box([(-2, 2), (-2, 2)])


def test_rotation_stays_on_circle_and_flags_loop():
    V = _field("-x2", "x1")
    c = trace(V, [1.0, 0.0], TraceOptions(box=BOX, max_arclength=4 * math.pi))
    r = np.linalg.norm(c.points, axis=1)
    assert np.max(np.abs(r - 1)) < 1e-8
    assert c.loop_flag
    assert c.termination is Termination.BUDGET
    # unit speed: time is arclength, so the point at t is (cos t, sin t)
    for t in (0.3, 1.7, 5.0):
        assert np.allclose(c.at(t), [math.cos(t), math.sin(t)], atol=1e-7)


def test_linear_growth_matches_exponential_without_normalisation():
    V = _field("x1", "0")
    c = trace(V, [0.1, 0.0], TraceOptions(box=BOX, arclength=False))
    assert c.termination is Termination.LEFT_BOX
    assert np.allclose(c.points[:, 0], 0.1 * np.exp(c.times), rtol=1e-8)
    # the exit step is refined onto the boundary
    assert abs(c.points[-1, 0] - 2.0) < 1e-9


def test_backward_direction_and_glued_trace():
    V = _field("1", "0")
    c = trace_both(V, [0.5, 0.25], TraceOptions(box=BOX))
    assert c.termination is Termination.LEFT_BOX
    assert c.termination_backward is Termination.LEFT_BOX
    assert np.all(np.diff(c.times) > 0)
    assert c.points[0, 0] == pytest.approx(-2.0, abs=1e-9)
    assert c.points[-1, 0] == pytest.approx(2.0, abs=1e-9)
    assert c.arclength == pytest.approx(4.0, abs=1e-8)


def test_zero_field_and_bad_inputs():
    V = _field("x1", "x2")
    with pytest.raises(ZeroFieldError):
        trace(V, [0.0, 0.0], TraceOptions(box=BOX))
    with pytest.raises(ValueError):
        trace(V, [3.0, 0.0], TraceOptions(box=BOX))
    with pytest.raises(ValueError):
        trace(V, [1.0, 0.0], TraceOptions(box=BOX), direction="sideways")
    with pytest.raises(ValueError):
        TraceOptions(box=BOX, rtol=0)
    with pytest.raises(ValueError):
        TraceOptions(box=((1, 1), (0, 1)))


def test_hermite_reproduces_cubics():
    y = lambda t: t ** 3 - 2 * t
    dy = lambda t: 3 * t ** 2 - 2
    for t in (0.1, 0.5, 0.9):
        assert hermite(0.0, 1.0, y(0.0), y(1.0), dy(0.0), dy(1.0), t) == pytest.approx(y(t), abs=1e-14)


def test_spiral_fields_follow_fibers(spiral2, spiral3):
    # V1 of the planar spiral moves along e^{x1} sin x2 = const with f1 monotone
    V = cofactor_field(spiral2, 1)
    c = trace_both(V, [0.0, 1.0], TraceOptions(box=spiral2.box))
    d = monotonicity_diagnostics(c, spiral2, 1)
    assert d["verdict"] == "PASS" and d["monotone"] and d["direction"] == 1
    assert d["max_scaled_drift"] < 1e-8
    # V3 of the 3D spiral is e^{2 x1} d/dx3: straight vertical lines
    c3 = trace_both(cofactor_field(spiral3, 3), [0.3, 1.0, 0.0], TraceOptions(box=spiral3.box))
    assert np.allclose(c3.points[:, :2], [0.3, 1.0], atol=1e-12)
    assert c3.points[-1, 2] == pytest.approx(2.0, abs=1e-9)


def test_drift_is_detected(spiral2):
    c = trace_both(cofactor_field(spiral2, 1), [0.0, 1.0], TraceOptions(box=spiral2.box))
    c.points = c.points + np.linspace(0, 1e-3, len(c.points))[:, None]
    assert monotonicity_diagnostics(c, spiral2, 1)["verdict"] == "FAIL"


def test_boundary_exit_check():
    assert boundary_exit_check(_field("1", "x1"), [0.0, 0.0], BOX)["verdict"] == "PASS"
    r = boundary_exit_check(_field("-x2", "x1"), [1.0, 0.0], BOX,
                            TraceOptions(box=BOX, max_steps=300))
    assert r["verdict"] == "INCONCLUSIVE(BUDGET)" and r["loop_flag"]


def test_curve_csv(tmp_path):
    c = trace(_field("1", "0"), [0.0, 0.0], TraceOptions(box=BOX))
    p = tmp_path / "c.csv"
    c.to_csv(p)
    rows = p.read_text().splitlines()
    assert rows[0] == "t,x1,x2"
    assert len(rows) == len(c) + 1
