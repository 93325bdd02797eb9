"""Acceptance criteria, one test each. A PASS/FAIL summary line per
criterion is printed at the end of the pytest run (see conftest.py)."""
import time

import numpy as np
import pytest

from corpus_fixture import VOCAB_ROWS, SPECIALIZED_ROWS, fixture_stats
from helpers import latlng, rect
from oracles import brute_hull_vertices, naive_dbscan, naive_single_linkage
from osm_fixtures import branch_cases
from poiforge.cli import main
from poiforge.cluster import CandidateCluster, dbscan_refine, pairwise_distances, single_linkage
from poiforge.evaluate import area_precision, area_recall, evaluate, f_score
from poiforge.geometry import LocalFrame, contains_point, convex_hull, polygon_area_m2
from poiforge.model import PipelineConfig
from poiforge.osm_correct import correct
from poiforge.partition import make_bins
from poiforge.pipeline import run_pipeline
from poiforge.preprocess import specialized_preprocess, vocabulary_preprocess
from poiforge.synth import SynthSpec, generate_city

CFG = PipelineConfig()


def _membership(polys):
    return {frozenset(p.member_ids) for p in polys}


@pytest.fixture(scope="module")
def clean_city():
    return generate_city(SynthSpec(seed=7, n_pois=20))


@pytest.fixture(scope="module")
def clean_run(clean_city):
    return run_pipeline(clean_city.addresses, localities=clean_city.localities,
                        gt=clean_city.gt_polygons)


@pytest.mark.acceptance(1, "vocabulary and specialized preprocessing example rows exact in < 1 s")
def test_ac1_preprocessing_examples():
    stats = fixture_stats()
    t0 = time.perf_counter()
    vocab = [vocabulary_preprocess(raw, stats) for raw, _ in VOCAB_ROWS]
    special = [specialized_preprocess(vocabulary_preprocess(raw, stats), stats, "chennai") for raw, _ in SPECIALIZED_ROWS]
    elapsed = time.perf_counter() - t0
    assert len(VOCAB_ROWS) == 3 and len(SPECIALIZED_ROWS) == 2
    assert vocab == [want for _, want in VOCAB_ROWS]
    assert special == [want for _, want in SPECIALIZED_ROWS]
    assert elapsed < 1.0


@pytest.mark.acceptance(2, "area precision/recall closed forms to 1e-9; f_score(0.987, 0.082) = 0.1514")
def test_ac2_formulas():
    cases = [
        # (alg, gt, precision, recall)
        (rect(0, 0, 10, 10), rect(5, 0, 25, 10), 0.5, 0.25),
        (rect(0, 0, 4, 4), rect(-10, -10, 10, 10), 1.0, 16 / 400),
        (rect(0, 0, 30, 10), rect(10, 0, 20, 10), 1 / 3, 1.0),
        (rect(0, 0, 8, 6), rect(2, 3, 12, 13), (6 * 3) / 48, (6 * 3) / 100),
    ]
    for alg, gt, p, r in cases:
        assert area_precision(alg, gt) == pytest.approx(p, rel=1e-9)
        assert area_recall(alg, gt) == pytest.approx(r, rel=1e-9)
    assert f_score(0.987, 0.082) == pytest.approx(0.1514, abs=5e-4)
    assert round(f_score(0.987, 0.082), 2) == 0.15


@pytest.mark.acceptance(3, "linkage, DBSCAN and hull match brute-force oracles; total < 60 s")
def test_ac3_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    for _ in range(200):
        x = rng.normal(size=(64, 6))
        d = pairwise_distances(x)
        ours = single_linkage(x, distances=d)
        want = naive_single_linkage(d)
        assert [h for _, _, h in ours.merges] == [h for _, _, h in want]
        assert [(frozenset(ours.members(a)), frozenset(ours.members(b))) for a, b, _ in ours.merges] == \
            [(a, b) for a, b, _ in want]

    for _ in range(200):
        n_blobs = int(rng.integers(1, 5))
        centres = rng.uniform(-80, 80, size=(n_blobs, 2))
        xy = np.vstack([rng.normal(c, rng.uniform(3, 12), size=(200 // n_blobs, 2)) for c in centres])
        xy = np.vstack([xy, rng.uniform(-100, 100, size=(200 - len(xy), 2))])
        ids = [f"a{i:03d}" for i in range(len(xy))]
        loc = np.array([latlng(*p) for p in xy])
        c = CandidateCluster(ids, loc, np.ones((len(ids), 2)))
        got = {frozenset(int(m[1:]) for m in part.member_ids) for part in dbscan_refine(c, CFG)}
        pxy = LocalFrame(*c.location_centroid).project(loc)
        assert got == naive_dbscan(pxy, CFG.dbscan_eps_m, CFG.dbscan_min_neighbours)

    for _ in range(1000):
        n = int(rng.integers(3, 40))
        pts = [tuple(p) for p in rng.uniform(12.9, 12.92, size=(n, 2))]
        h = convex_hull(pts)
        verts = set(h.ring[:-1])
        assert verts <= set(pts)
        assert verts == brute_hull_vertices(pts)
        assert all(contains_point(h, p) for p in pts)
    assert time.perf_counter() - t0 < 60


@pytest.mark.acceptance(4, "synthetic city: exact membership when clean; noisy medians P >= 0.8, R >= 0.5; < 2 min")
def test_ac4_end_to_end(clean_city):
    t0 = time.perf_counter()
    res = run_pipeline(clean_city.addresses, localities=clean_city.localities, gt=clean_city.gt_polygons)
    assert _membership(res.polygons) == _membership(clean_city.gt_polygons)

    noisy = generate_city(SynthSpec(seed=7, n_pois=20, gps_noise_sigma_m=15, leak_rate=0.05))
    rep = run_pipeline(noisy.addresses, localities=noisy.localities, gt=noisy.gt_polygons).report
    assert rep.median_precision >= 0.8
    assert rep.median_recall >= 0.5
    assert time.perf_counter() - t0 < 120


@pytest.mark.acceptance(5, "OSM correction raises median recall; precision stays >= 0.6")
def test_ac5_osm_direction(clean_city, clean_run):
    raw = clean_run.polygons
    gt_by_id = {g.poi_id: g for g in clean_city.gt_polygons}
    # precondition: every PoI's private loop is at most 1.5x its raw hull
    for pair in clean_run.report.pairs:
        hull = next(p for p in raw if p.poi_id == pair.alg_id)
        assert polygon_area_m2(gt_by_id[pair.gt_id]) <= CFG.alg2_encompass_area_factor * polygon_area_m2(hull)
    fixed = [correct(p, clean_city.osm_layer, CFG) for p in raw]
    before = evaluate(raw, clean_city.gt_polygons)
    after = evaluate(fixed, clean_city.gt_polygons)
    assert after.median_recall > before.median_recall
    assert after.median_precision >= 0.6


@pytest.mark.acceptance(6, "50/50 spelling variants: main pipeline finds more PoIs than the baseline")
def test_ac6_baseline_gap():
    city = generate_city(SynthSpec(seed=7, n_pois=20, spell_variant_rate=0.5))
    res = run_pipeline(city.addresses, localities=city.localities, gt=city.gt_polygons, with_baseline=True)
    assert (CFG.baseline_tp, CFG.baseline_tfidf, CFG.baseline_min_points) == (0.7, 0.1, 15)
    main_found = res.report.counts["n_gt_matched"]
    base_found = evaluate(res.baseline, city.gt_polygons).counts["n_gt_matched"]
    assert main_found > base_found


@pytest.mark.acceptance(7, "OSM correction branch fixtures: replace, union, intersection, difference, prune, no-op")
def test_ac7_branch_coverage():
    seen = set()
    for case in branch_cases():
        trace = []
        out = correct(case.poly, case.layer, CFG, trace)
        assert trace == case.trace, case.name
        assert polygon_area_m2(out) == pytest.approx(case.area_m2, rel=1e-5), case.name
        seen |= {branch for _, branch in trace} or {"no-op"}
    assert seen == {"replace", "union", "intersection", "difference", "prune", "no-op"}


@pytest.mark.acceptance(8, "full run is byte-identical across 1, 4 and 8 workers")
def test_ac8_determinism(tmp_path):
    city_dir = tmp_path / "city"
    assert main(["synth", "--out", str(city_dir), "--seed", "7", "--n-pois", "20",
                 "--noise", "15", "--leak-rate", "0.05", "--outlier-rate", "0.05"]) == 0
    outputs = {}
    for workers in (1, 4, 8):
        out = tmp_path / f"w{workers}"
        assert main(["run", "--addresses", str(city_dir / "addresses.csv"), "--osm", str(city_dir / "osm.geojson"),
                     "--gt", str(city_dir / "gt.geojson"), "--baseline", "--workers", str(workers),
                     "--out", str(out)]) == 0
        # the manifest records wall-clock timings, so it is compared without them
        outputs[workers] = {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "manifest.json"}
    assert len(make_bins(generate_city(SynthSpec(seed=7, n_pois=20)).addresses)) > 8
    assert outputs[1] == outputs[4] == outputs[8]
    assert {"polygons.geojson", "polygons_osm.geojson", "baseline.geojson", "metrics.json"} <= set(outputs[1])
