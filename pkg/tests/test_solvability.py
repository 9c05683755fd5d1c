import math

import numpy as np
import pytest

from foliation_lab import gallery
from foliation_lab.fields import cofactor_field
from foliation_lab.maps import box_contains
from foliation_lab.solvability import (classify, default_policy, dh_witness_search, polyline_distance,
                                       replay_witness)


def test_polyline_distance_against_dense_sampling():
    rng = np.random.default_rng(0)
    pts = np.cumsum(rng.normal(size=(20, 2)), axis=0)
    dense = np.concatenate([a + np.linspace(0, 1, 2001)[:, None] * (b - a) for a, b in zip(pts[:-1], pts[1:])])
    for q in rng.normal(size=(10, 2)) * 3:
        d, _ = polyline_distance(pts, q)
        assert d == pytest.approx(np.min(np.linalg.norm(dense - q, axis=1)), abs=5e-3)
        assert d <= np.min(np.linalg.norm(dense - q, axis=1)) + 1e-12
    assert polyline_distance(pts[:1], [0.0, 0.0])[1] == 0


def test_spiral_witness_is_replayable():
    e = gallery.gallery("spiral2")
    F = e.map()
    v = classify(F, 1, default_policy(2, e.K), seed=0)
    assert v.verdict == "NOT_SOLVABLE"
    w = v.witness
    assert box_contains(w.K, w.a_prime, 1e-6) and box_contains(w.K, w.b_prime, 1e-6)
    assert np.linalg.norm(w.z) >= w.escape_radius
    assert replay_witness(cofactor_field(F, 1), w)["verdict"] == "PASS"
    # the witness curve lies in a fiber e^{x1} sin x2 = const
    c = np.exp(w.curve.points[:, 0]) * np.sin(w.curve.points[:, 1])
    assert np.ptp(c) < 1e-7 * (1 + abs(c[0]))
    out = v.to_json("curve.csv")
    assert out["verdict"] == "NOT_SOLVABLE" and out["witness"]["curve_csv_path"] == "curve.csv"


def test_deep_witness_tracks_the_closed_form_minimum():
    F = gallery.gallery("spiral3").map()
    V = cofactor_field(F, 1)
    c = 1e-3
    w = dh_witness_search(V, [(-.1, .1), (0.0, math.pi), (-.1, .1)], 6.5, budget=8,
                          seeds=[np.array([0.0, math.asin(c), 0.0])])
    # along e^{x1} sin x2 = c the smallest x1 is log c
    assert math.log(c) - 1e-6 <= w.z[0] <= -6.5
    assert w.curve.points[:, 0].min() == pytest.approx(math.log(c), abs=1e-4)


def test_no_obstruction_for_the_identity():
    F = gallery.gallery("identity2").map()
    v = classify(F, 1, budget=16)
    assert v.verdict == "NO_OBSTRUCTION_FOUND" and v.witness is None


def test_a_poor_tampered_witness_fails_replay():
    e = gallery.gallery("spiral2")
    F = e.map()
    w = classify(F, 1, default_policy(2, e.K), seed=0).witness
    w.z = w.z + np.array([0.0, 0.5])
    assert replay_witness(cofactor_field(F, 1), w)["verdict"] == "FAIL"


def test_argument_validation():
    F = gallery.gallery("identity2").map()
    V = cofactor_field(F, 1)
    with pytest.raises(ValueError):
        dh_witness_search(V, [(-1, 1), (-1, 1)], 1.0)
    with pytest.raises(ValueError):
        dh_witness_search(V, [(-1, 1), (-1, 1)], 10.0, budget=0)
    with pytest.raises(ValueError):
        classify(F, 1, policy=[])
    with pytest.raises(ValueError):
        classify(F, 1, policy=[([(-1, 1), (-1, 1)], 8.0), ([(-1, 1), (-1, 1)], 4.0)])
    assert [r for _, r in default_policy(2)] == pytest.approx([4 * math.sqrt(2), 8 * math.sqrt(2), 16 * math.sqrt(2)])
