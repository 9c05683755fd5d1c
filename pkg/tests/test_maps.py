import numpy as np
import pytest

from foliation_lab.maps import (MapFormatError, SmoothMap, box_contains, box_diameter, box_radius, make_box,
                                parse_box, parse_map_text, scale_box)


def test_map_text_roundtrip():
    F = parse_map_text("name = shear\ndim = 2\nf2 = x2\nf1 = x1 + x2^2\nbox = -1,1,-3,3\n")
    assert F.name == "shear" and F.n == 2
    assert F.box == ((-1.0, 1.0), (-3.0, 3.0))
    assert np.allclose(F([1.0, 2.0]), [5.0, 2.0])
    G = parse_map_text(F.to_text())
    assert G.components == F.components


@pytest.mark.parametrize("text", [
    "f1 = x1\nf2 = x2\n",                 # no dim
    "dim = 1\nf1 = x1\n",
    "dim = 2\nf1 = x1\n",                 # missing f2
    "dim = 2\nf1 = x1\nf2 = x3\n",        # variable out of range
    "dim = 2\nf1 = x1\nf2 = x2\ncolour = red\n",
    "dim = 2\nf1 x1\nf2 = x2\n",
])
def test_map_text_errors(text):
    with pytest.raises((MapFormatError, ValueError)):
        parse_map_text(text)


def test_boxes():
    b = parse_box("-1,1,0,2", 2)
    assert b == ((-1.0, 1.0), (0.0, 2.0))
    assert box_contains(b, [0.0, 1.0]) and not box_contains(b, [0.0, 2.5])
    assert box_radius(make_box([(-1, 1), (-1, 1)])) == pytest.approx(np.sqrt(2))
    assert box_diameter(b) == pytest.approx(np.sqrt(8))
    assert scale_box(b, 2.0) == ((-2.0, 2.0), (-1.0, 3.0))
    for bad in ("1,0", "0,1,2", "a,b"):
        with pytest.raises((ValueError, MapFormatError)):
            parse_box(bad)
    with pytest.raises(ValueError):
        parse_box("0,1", 2)


def test_smooth_map_validation():
    with pytest.raises(ValueError):
        SmoothMap.from_strings(["x1"])
    with pytest.raises(ValueError):
        SmoothMap.from_strings(["x1", "x2"], box=[(0, 1)])
