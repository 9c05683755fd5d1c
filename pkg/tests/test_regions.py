import json
import math
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from foliation_lab import gallery
from foliation_lab.expr import parse
from foliation_lab.regions import (NegativeH, RegionInvalid, TangencyViolation, check_region, divergence_closure,
                                   exhaustion, flux_bound, interior_extent, load_region, obstruction_integral,
                                   region_from_dict, trend_verdict, volume_integral)
from foliation_lab.svg import region_svg

DATA = Path(__file__).parent / "data"


def region(name):
    return load_region(gallery.region_path(name))


@pytest.mark.parametrize("name", ["braun", "braun_strip", "identity_square", "paraboloid3"])
def test_shipped_regions_pass_their_checks(name):
    R = region(name)
    for k in (R.k_min, 4, 8):
        checks = check_region(R, k)
        assert all(v["pass"] for v in checks.values()), checks


def test_strip_integral_is_log_k():
    # P_k = {1/k <= x1 <= 1, -1/x1 <= x2 <= 0}: the area is int_{1/k}^1 dx/x = log k
    R = region("braun_strip")
    for k in (2, 4, 8, 16, 32):
        assert volume_integral(R, parse("1", 2), k).value == pytest.approx(math.log(k), rel=1e-9)
    # with h = x1^2 the area integrand is x1, giving (1 - 1/k^2) / 2
    for k in (2, 8):
        assert volume_integral(R, parse("x1^2", 2), k).value == pytest.approx((1 - k ** -2) / 2, rel=1e-9)


def test_capped_region_det_integral(braun):
    # det DF = 1 + 2 x1 x2 integrates to (1 - 1/k)^2 / 2 over the leaf-capped P_k
    R = region("braun")
    rep = flux_bound(braun, R, ks=[2, 8, 32])
    for k, v in zip(rep.ks, rep.det_integrals):
        assert v == pytest.approx((1 - 1 / k) ** 2 / 2, rel=1e-8)
    assert rep.M == pytest.approx(0.5, rel=1e-9)
    assert rep.verdict == "PASS"


def test_paraboloid_volume_and_flux_bound():
    # P_k is the solid {e^{-k} <= |x'|^2 + e^{-k}... }: volume pi (1 - e^{-k} - k e^{-k})
    R = region("paraboloid3")
    for k in (1, 3, 6):
        want = math.pi * (1 - math.exp(-k) - k * math.exp(-k))
        assert volume_integral(R, parse("1", 3), k).value == pytest.approx(want, rel=1e-9)
    rep = flux_bound(gallery.gallery("paraboloid3").map(), R, ks=[1, 2, 4])
    assert rep.M == pytest.approx(math.pi / 2, rel=1e-8)
    assert all(v <= 0 for v in rep.det_integrals)


def test_degenerate_first_piece_is_rejected():
    # at k = 1 the braun pieces collapse onto the segment x1 = 1
    with pytest.raises(RegionInvalid):
        check_region(region("braun"), 1)


def test_identity_square():
    R = region("identity_square")
    F = gallery.gallery("identity2").map()
    for k in (1, 3, 7):
        assert volume_integral(R, parse("1", 2), k).value == pytest.approx(1 - 1 / (k + 1), rel=1e-12)
    assert flux_bound(F, R, ks=[1, 2]).M == pytest.approx(1.0)


@pytest.mark.parametrize("name,map_name", [("braun", "braun"), ("braun_strip", "braun"),
                                           ("identity_square", "identity2"), ("paraboloid3", "paraboloid3")])
def test_divergence_closure(name, map_name):
    d = divergence_closure(gallery.gallery(map_name).map(), region(name), 4)
    assert d["pass"] and d["relative_residual"] <= 1e-4
    assert d["tangency_residual"] <= 1e-6


def test_trend_verdicts():
    ks = [1, 2, 4, 8, 16, 32]
    v, fit, inc, limit = trend_verdict(ks, [math.log(k) for k in ks])
    assert v == "DIVERGENT_TREND" and fit["r2"] > 0.999
    v, fit, inc, limit = trend_verdict(ks, [1 - 1 / k for k in ks])
    assert v == "BOUNDED_TREND" and limit == pytest.approx(1.0)
    rep = obstruction_integral(region("braun_strip"), parse("1", 2), 16, ks=[1, 2, 4, 8, 16])
    assert rep.verdict == "DIVERGENT_TREND"
    assert "not a proof" in rep.to_json()["note"]


def test_negative_density_is_refused():
    with pytest.raises(NegativeH):
        obstruction_integral(region("braun_strip"), parse("x2", 2), 4)


def test_bad_square_is_invalid():
    R = load_region(DATA / "bad_square.json")
    with pytest.raises(RegionInvalid, match="not in a leaf"):
        check_region(R, 3)
    with pytest.raises(TangencyViolation):
        flux_bound(gallery.gallery("identity2").map(), R, ks=[2])


def test_mismatched_foliation_is_refused(braun):
    with pytest.raises(ValueError):
        flux_bound(braun, region("identity_square"), ks=[1])


@pytest.mark.parametrize("mutate", [
    lambda d: d.pop("patch"),
    lambda d: d.__setitem__("patch", ["t1"]),
    lambda d: d.__setitem__("foliation", "x1 +"),
    lambda d: d["faces"].append({"axis": 3, "end": 0, "tag": "Q"}),
    lambda d: d["faces"].append({"axis": 1, "end": 0, "tag": "lid"}),
])
def test_malformed_region_files(mutate):
    d = json.loads(gallery.region_path("identity_square").read_text())
    mutate(d)
    with pytest.raises(RegionInvalid):
        region_from_dict(d)


def test_unparseable_json(tmp_path):
    p = tmp_path / "r.json"
    p.write_text("{not json")
    with pytest.raises(RegionInvalid):
        load_region(p)


def test_interior_extent_grows_for_the_paraboloid():
    ext = interior_extent(region("paraboloid3"), [1, 2, 4, 8])
    assert all(b > a for a, b in zip(ext, ext[1:]))


def test_exhaustion_mesh_and_svg():
    m = exhaustion(region("braun"), 4)
    assert set(m.boundary) >= {"Q", "L"}
    poly = m.polygon()
    assert poly.shape[1] == 2 and np.all(np.isfinite(poly))
    ET.fromstring(region_svg(m))
