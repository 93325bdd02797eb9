import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import FRAME, latlng, rect
from oracles import brute_hull_vertices
from poiforge.geometry import (LocalFrame, alpha_shape, contains_point, convex_hull, diameter_m,
                               discard_embedded, merge_substantial, overlap_stats, polygon_area_m2,
                               polygon_buffer, polygon_difference, polygon_intersection,
                               polygon_union, split_by_polyline)
from poiforge.model import validate_polygon


# --- projection -------------------------------------------------------------------

@settings(max_examples=200, deadline=None)
@given(st.floats(-5000, 5000), st.floats(-5000, 5000))
def test_projection_round_trip(x, y):
    lat, lng = FRAME.to_latlng(x, y)
    bx, by = FRAME.to_xy(lat, lng)
    blat, blng = FRAME.to_latlng(bx, by)
    assert abs(blat - lat) < 1e-9 and abs(blng - lng) < 1e-9


def test_projection_scale():
    # one degree of latitude is about 111.2 km
    f = LocalFrame(0.0, 0.0)
    assert f.to_xy(1.0, 0.0)[1] == pytest.approx(111_195, rel=1e-3)


# --- convex hull ------------------------------------------------------------------------

def test_square_with_center():
    pts = [(0, 0), (0, 1), (1, 1), (1, 0), (0.5, 0.5)]
    h = convex_hull(pts)
    assert len(h.ring) == 5
    assert set(h.ring[:-1]) == {(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0)}


def test_collinear_gives_none():
    assert convex_hull([(0, 0), (1, 1), (2, 2)]) is None
    assert convex_hull([(0, 0), (0, 0), (0, 0)]) is None


@pytest.mark.parametrize("seed", range(20))
def test_hull_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    pts = [tuple(p) for p in rng.uniform(12.9, 12.91, size=(50, 2))]
    h = convex_hull(pts)
    verts = set(h.ring[:-1])
    assert verts == brute_hull_vertices(pts)
    assert verts <= set(pts)
    assert all(contains_point(h, p) for p in pts)
    ring = np.array(h.ring[:-1])[:, ::-1]  # x = lng, y = lat
    e1 = np.roll(ring, -1, axis=0) - ring
    e2 = np.roll(e1, -1, axis=0)
    assert (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0] > 0).all()
    assert validate_polygon(h.ring)


# --- overlap ----------------------------------------------------------------------------

def test_overlap_closed_forms():
    # fixtures are drawn in one frame and measured in another: areas agree to ~1e-6
    a = rect(0, 0, 1, 1)
    sa, sb, inter = overlap_stats(a, a)
    assert sa == sb == inter == pytest.approx(1, rel=1e-6)
    aa, ab, inter = overlap_stats(a, rect(0.5, 0, 1.5, 1))
    assert inter == pytest.approx(0.5, rel=1e-6)
    assert inter / aa == pytest.approx(0.5, rel=1e-9)
    assert overlap_stats(a, rect(3, 3, 4, 4))[2] == 0


def test_overlap_rejects_invalid():
    bad = ((0, 0), (1, 1), (1, 0), (0, 1), (0, 0))
    with pytest.raises(ValueError):
        overlap_stats(bad, rect(0, 0, 1, 1))


rect_args = st.tuples(st.floats(-50, 50), st.floats(-50, 50), st.floats(1, 60), st.floats(1, 60))


@settings(max_examples=100, deadline=None)
@given(rect_args, rect_args)
def test_overlap_properties(ra, rb):
    a = rect(ra[0], ra[1], ra[0] + ra[2], ra[1] + ra[3])
    b = rect(rb[0], rb[1], rb[0] + rb[2], rb[1] + rb[3])
    sa, sb, inter = overlap_stats(a, b)
    sb2, sa2, inter2 = overlap_stats(b, a)
    assert (sa, sb, inter) == pytest.approx((sa2, sb2, inter2), rel=1e-9, abs=1e-9)
    assert inter <= min(sa, sb) + 1e-9
    assert sa == pytest.approx(ra[2] * ra[3], rel=1e-5)
    # closed form for axis-aligned rectangles
    w = max(0.0, min(ra[0] + ra[2], rb[0] + rb[2]) - max(ra[0], rb[0]))
    h = max(0.0, min(ra[1] + ra[3], rb[1] + rb[3]) - max(ra[1], rb[1]))
    assert inter == pytest.approx(w * h, rel=1e-5, abs=1e-6)


# --- boolean operations ---------------------------------------------------------------------

def test_union_of_contained_square_is_big_square():
    big, small = rect(0, 0, 10, 10), rect(5, 5, 12, 12)
    u = polygon_union(big, small)
    assert polygon_area_m2(u) == pytest.approx(100 + 49 - 25, rel=1e-6)
    assert all(contains_point(u, v) for v in big.ring + small.ring)


def test_disjoint_union_is_hulled():
    u = polygon_union(rect(0, 0, 1, 1), rect(5, 0, 6, 1))
    assert polygon_area_m2(u) == pytest.approx(6, rel=1e-6)


def test_difference_cases():
    a = rect(0, 0, 10, 10)
    assert polygon_difference(a, rect(20, 20, 30, 30)) == a
    d = polygon_difference(a, rect(5, -1, 11, 11))
    assert polygon_area_m2(d) == pytest.approx(50, rel=1e-6)
    assert polygon_difference(a, rect(-1, -1, 11, 11)) is None


def test_intersection_cases():
    a = rect(0, 0, 10, 10)
    i = polygon_intersection(a, rect(6, 0, 20, 10))
    assert polygon_area_m2(i) == pytest.approx(40, rel=1e-6)
    assert polygon_intersection(a, rect(20, 20, 30, 30)) is None


def test_buffer_area_closed_form():
    # square + four edge strips + a regular 16-gon inscribed in the unit circle
    b = polygon_buffer(rect(0, 0, 1, 1), 1.0)
    expected = 1 + 4 + 8 * math.sin(2 * math.pi / 16)
    assert polygon_area_m2(b) == pytest.approx(expected, rel=1e-6)
    assert 5 < polygon_area_m2(b) < 5 + math.pi  # between bare strips and the round disc


def test_buffer_rejects_non_positive():
    with pytest.raises(ValueError):
        polygon_buffer(rect(0, 0, 1, 1), 0)


def test_split_by_line():
    parts = split_by_polyline(rect(0, 0, 10, 10), [latlng(6, 2), latlng(6, 8)])
    assert len(parts) == 2
    assert [polygon_area_m2(p) for p in parts] == pytest.approx([60, 40], rel=1e-6)
    assert split_by_polyline(rect(0, 0, 10, 10), [latlng(20, 2), latlng(20, 8)]) == [rect(0, 0, 10, 10)]


def test_diameter():
    assert diameter_m(rect(0, 0, 30, 40)) == pytest.approx(50, rel=1e-6)


# --- alpha shape ------------------------------------------------------------------------------

def test_alpha_shape_of_scrambled_square():
    corners = [latlng(x, y) for x, y in [(0, 0), (10, 10), (0, 10), (10, 0)]]
    a = alpha_shape(corners)
    assert set(a.ring[:-1]) == set(convex_hull(corners).ring[:-1])


def test_alpha_shape_of_convex_set_is_hull():
    rng = np.random.default_rng(4)
    angles = np.sort(rng.uniform(0, 2 * math.pi, 12))
    pts = [latlng(20 * math.cos(t), 20 * math.sin(t)) for t in angles]
    a, h = alpha_shape(pts), convex_hull(pts)
    assert polygon_area_m2(a) == pytest.approx(polygon_area_m2(h), rel=1e-9)


def test_alpha_shape_of_c_shape_is_tighter():
    pts = []
    for x in range(0, 31, 3):
        pts += [(x, 0), (x, 30)]
    for y in range(3, 30, 3):
        pts += [(0, y)]
    pts += [(x, y) for x in (3, 6) for y in range(3, 30, 3)]
    pts += [(x, y) for x in range(9, 31, 3) for y in (3, 27)]
    ll = [latlng(x, y) for x, y in pts]
    a = alpha_shape(ll)
    assert validate_polygon(a.ring)
    assert polygon_area_m2(a) < 0.8 * polygon_area_m2(convex_hull(ll))
    assert all(contains_point(a, p) for p in ll)


def test_alpha_shape_needs_three_points():
    assert alpha_shape([latlng(0, 0), latlng(1, 1)]) is None


# --- post-processing ---------------------------------------------------------------------------

def test_discard_embedded_examples():
    big, small = rect(0, 0, 10, 10, "big"), rect(2, 2, 4, 4, "small")
    assert discard_embedded([small, big]) == [big]
    far = rect(20, 20, 30, 30, "far")
    assert discard_embedded([big, far]) == [big, far]
    mid = rect(1, 1, 6, 6, "mid")
    assert discard_embedded([small, mid, big]) == [big]


def test_discard_embedded_keeps_one_of_identical():
    a, b = rect(0, 0, 5, 5, "a"), rect(0, 0, 5, 5, "b")
    assert discard_embedded([a, b]) == [a]


def test_merge_substantial_examples():
    big = rect(0, 0, 10, 10, "big", member_count=10)
    small = rect(8, 2, 13, 7, "small", member_count=10)  # 40% inside
    assert len(merge_substantial([big, small], 0.7)) == 2
    small80 = rect(9, 2, 14, 7, "small", member_count=10)  # 20% inside
    assert len(merge_substantial([big, small80], 0.7)) == 2
    inside80 = rect(6, 2, 11, 7, "in", member_count=10)  # 80% inside
    merged = merge_substantial([big, inside80], 0.7)
    assert len(merged) == 1
    assert polygon_area_m2(merged[0]) == pytest.approx(100 + 5 + 2.5, rel=1e-6)
    assert merged[0].stage == "merged" and merged[0].member_count == 20


def test_mutual_ten_percent_stays_separate():
    a, b = rect(0, 0, 10, 10, "a"), rect(9, 0, 19, 10, "b")
    assert merge_substantial([a, b], 0.7) == [a, b]


def test_merge_substantial_chain():
    a, b, c = rect(0, 0, 10, 10, "a"), rect(2, 0, 12, 10, "b"), rect(4, 0, 14, 10, "c")
    out = merge_substantial([a, b, c], 0.7)
    assert len(out) == 1
    assert polygon_area_m2(out[0]) == pytest.approx(140, rel=1e-6)


@settings(max_examples=60, deadline=None)
@given(st.lists(rect_args, min_size=1, max_size=8))
def test_postprocessing_never_grows_count(specs):
    polys = [rect(x, y, x + w, y + h, f"p{i}", member_count=10) for i, (x, y, w, h) in enumerate(specs)]
    kept = discard_embedded(polys)
    merged = merge_substantial(kept, 0.7)
    assert len(merged) <= len(kept) <= len(polys)
    assert all(validate_polygon(p.ring) for p in merged)
