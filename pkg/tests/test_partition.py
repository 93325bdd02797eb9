import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import geohash_decode_box
from poiforge.model import AddressRecord, InputError
from poiforge.partition import GeoBin, geohash_encode, make_bins, normalize_locations


def test_published_test_vector():
    assert geohash_encode(57.64911, 10.40744, 5) == "u4pru"


def test_origin_single_char_is_stable():
    code = geohash_encode(0, 0, 1)
    assert len(code) == 1 and code == geohash_encode(0, 0, 1) == "s"


@settings(max_examples=200, deadline=None)
@given(st.floats(-89.9, 89.9), st.floats(-179.9, 179.9), st.integers(1, 8))
def test_geohash_cell_contains_point_and_extends(lat, lng, precision):
    code = geohash_encode(lat, lng, precision)
    lat_lo, lat_hi, lng_lo, lng_hi = geohash_decode_box(code)
    assert lat_lo <= lat <= lat_hi and lng_lo <= lng <= lng_hi
    assert geohash_encode(lat, lng, precision + 1).startswith(code)


def test_geohash_rejects_bad_input():
    with pytest.raises(InputError):
        geohash_encode(91, 0)
    with pytest.raises(ValueError):
        geohash_encode(0, 0, 0)


def _records(points, prefix="a"):
    return [AddressRecord(f"{prefix}{i:04d}", lat, lng) for i, (lat, lng) in enumerate(points)]


def test_lattice_bins_all_dropped():
    pts = [(12.90 + 0.001 * r, 77.50 + 0.001 * c) for r in range(5) for c in range(5)]
    assert make_bins(_records(pts), min_members=10) == []
    kept = make_bins(_records(pts), min_members=1)
    assert len(kept) == 25
    assert sorted((b.row, b.col) for b in kept) == [(r, c) for r in range(5) for c in range(5)]


def test_identical_points_single_bin():
    bins = make_bins(_records([(12.9, 77.5)] * 12))
    assert len(bins) == 1
    assert (bins[0].row, bins[0].col) == (0, 0)
    assert len(bins[0].member_ids) == 12


def test_two_tiles_two_grids():
    a = [(12.90, 77.50)] * 10
    b = [(13.50, 78.10)] * 10
    bins = make_bins(_records(a, "a") + _records(b, "b"))
    assert len({x.geohash for x in bins}) == 2


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(12.90, 12.93), st.floats(77.50, 77.53)), min_size=1, max_size=60))
def test_partition_is_exact(points):
    recs = _records(points)
    bins = make_bins(recs, min_members=1)
    ids = [a for b in bins for a in b.member_ids]
    assert sorted(ids) == sorted(r.address_id for r in recs)
    by_id = {r.address_id: r for r in recs}
    for b in bins:
        lat0, lat1, lng0, lng1 = b.bounds
        for a in b.member_ids:
            assert lat0 <= by_id[a].lat <= lat1 and lng0 <= by_id[a].lng <= lng1


def _bin():
    return GeoBin("x", 0, 0, (0, 0, 0, 0), [])


def test_normalize_examples():
    out = normalize_locations(_bin(), [(0, 0), (2, 2)])
    assert np.allclose(out, [(-1, -1), (1, 1)])
    flat = normalize_locations(_bin(), [(5, 1), (5, 2), (5, 4)])
    assert not flat[:, 0].any()


def test_normalize_moments():
    rng = np.random.default_rng(3)
    out = normalize_locations(_bin(), rng.uniform(10, 11, size=(100, 2)))
    assert np.allclose(out.mean(axis=0), 0, atol=1e-9)
    assert np.allclose(out.var(axis=0), 1, atol=1e-9)


def test_normalize_preserves_order_per_axis():
    rng = np.random.default_rng(5)
    loc = rng.uniform(10, 11, size=(30, 2))
    out = normalize_locations(_bin(), loc)
    for k in range(2):
        assert np.array_equal(np.argsort(loc[:, k]), np.argsort(out[:, k]))
