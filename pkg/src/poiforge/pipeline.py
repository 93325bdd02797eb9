"""End-to-end orchestration: text normalisation, embeddings, per-bin
mining, polygon post-processing, optional OSM correction and evaluation.

Bins are independent tasks run on a thread pool; results are collected in
bin-key order, so output bytes do not depend on the worker count.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .baseline import mummidi_krumm
from .cluster import (CandidateCluster, build_features, dbscan_refine, extract_homogeneous,
                      single_linkage)
from .embed import EmbeddingStore, embed_text
from .evaluate import evaluate
from .geojson_io import dumps_geojson, emit_geojson, load_polygons  # noqa: F401  (re-export)
from .geometry import convex_hull, discard_embedded, merge_substantial
from .merge_name import merge_homonymous
from .model import AddressRecord, InputError, PipelineConfig, check_coordinates
from .osm_correct import OsmLayer, correct
from .partition import make_bins
from .preprocess import (CorpusStats, build_corpus_stats, specialized_preprocess,
                         vocabulary_preprocess)

STAGE_ORDER = ("preprocess", "embed", "partition", "cluster", "dbscan", "merge",
               "polygon", "osm", "evaluate")
ZONES = ("single", "city")


class StageError(RuntimeError):
    """A failure inside one stage of one bin."""

    def __init__(self, stage: str, bin_key: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed in bin {bin_key}: {cause}")
        self.stage, self.bin_key, self.cause = stage, bin_key, cause


# --- input ---------------------------------------------------------------------------

def ingest_addresses(path) -> list:
    """Read ``address_id,lat,lng,text`` (plus an optional ``city``) CSV rows."""
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise InputError(f"cannot read addresses {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise InputError(f"{path}: empty file")
        header = [h.strip() for h in header]
        required = ["address_id", "lat", "lng", "text"]
        missing = [h for h in required if h not in header]
        if missing:
            raise InputError(f"{path}:1: missing column(s) {', '.join(missing)}")
        col = {h: header.index(h) for h in header}
        out, seen = [], set()
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            aid = row[col["address_id"]].strip()
            if not aid:
                raise InputError(f"{path}:{line}: empty address_id")
            if aid in seen:
                raise InputError(f"{path}:{line}: duplicate address_id {aid!r}")
            try:
                lat, lng = float(row[col["lat"]]), float(row[col["lng"]])
                check_coordinates(lat, lng)
            except ValueError as exc:
                raise InputError(f"{path}:{line}: {exc}") from exc
            seen.add(aid)
            city = row[col["city"]].strip().lower() if "city" in col else ""
            out.append(AddressRecord(aid, lat, lng, raw_text=row[col["text"]], city=city))
    return out


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# --- manifest ------------------------------------------------------------------------

@dataclass
class RunManifest:
    config: dict
    inputs: dict = field(default_factory=dict)      # name -> sha256
    counts: dict = field(default_factory=dict)
    timings_s: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")


class _Timer:
    def __init__(self, manifest: RunManifest, stage: str):
        self.manifest, self.stage = manifest, stage

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.manifest.timings_s[self.stage] = (self.manifest.timings_s.get(self.stage, 0.0)
                                               + time.perf_counter() - self.t0)


# --- text and embeddings ------------------------------------------------------------

def zone_key(address: AddressRecord, zone: str) -> str:
    """Corpus a record belongs to: one shared corpus, or one per city."""
    if zone not in ZONES:
        raise InputError(f"unknown zone mode {zone!r}; choose from {', '.join(ZONES)}")
    return address.city if zone == "city" else ""


def build_zone_stats(addresses, zone: str, cfg: PipelineConfig, localities: dict = None,
                     top_words: dict = None) -> dict:
    """Corpus statistics per zone key."""
    groups = {}
    for a in addresses:
        groups.setdefault(zone_key(a, zone), []).append(a)
    return {k: build_corpus_stats(groups[k], localities, cfg.bigram_min_count,
                                  cfg.top_words_count, top_words) for k in sorted(groups)}


def preprocess_addresses(addresses, stats, zone: str = "single") -> None:
    """Fill clean_text and mined_text in place. ``stats`` is one CorpusStats
    or a mapping from zone key to CorpusStats."""
    for a in addresses:
        s = stats[zone_key(a, zone)] if isinstance(stats, dict) else stats
        a.clean_text = vocabulary_preprocess(a.raw_text, s)
        a.mined_text = specialized_preprocess(a.clean_text, s, a.city)


def reference_embeddings(addresses, dim: int) -> EmbeddingStore:
    store = EmbeddingStore(dim=dim)
    for a in sorted(addresses, key=lambda r: r.address_id):
        store.add(a.address_id, embed_text(a.mined_text, dim))
    return store


# --- per-bin mining ------------------------------------------------------------------

@dataclass
class BinResult:
    key: str
    homogeneous: list
    refined: list
    merged: list
    polygons: list
    corrected: list = field(default_factory=list)
    baseline: list = field(default_factory=list)


def _through(stage: str, limit: str) -> bool:
    return STAGE_ORDER.index(stage) <= STAGE_ORDER.index(limit)


def mine_bin(b, records: dict, store, cfg: PipelineConfig, osm: Optional[OsmLayer] = None,
             stage_through: str = "evaluate", with_baseline: bool = False) -> BinResult:
    stage = "cluster"
    try:
        locations = {a: (records[a].lat, records[a].lng) for a in b.member_ids}
        ids, feats = build_features(b, store, cfg.location_scale, locations)
        loc = np.array([locations[a] for a in ids])
        emb = feats[:, 2:]

        def make_cluster(leaves):
            return CandidateCluster(member_ids=[ids[i] for i in leaves], locations=loc[leaves],
                                    embeddings=emb[leaves])

        homogeneous = extract_homogeneous(single_linkage(feats), make_cluster, cfg)
        res = BinResult(b.key, homogeneous, [], [], [])
        if with_baseline:
            stage = "baseline"
            res.baseline = mummidi_krumm(b, records, cfg)
        if not _through("dbscan", stage_through):
            return res
        stage = "dbscan"
        res.refined = [part for c in homogeneous for part in dbscan_refine(c, cfg)]
        if not _through("merge", stage_through):
            return res
        stage = "merge"
        mined = {a: records[a].mined_text for a in b.member_ids}
        res.merged = merge_homonymous(res.refined, mined, cfg)
        if not _through("polygon", stage_through):
            return res
        stage = "polygon"
        res.polygons = clusters_to_polygons(b.key, res.merged, cfg)
        if osm is not None and _through("osm", stage_through):
            stage = "osm"
            res.corrected = [correct(p, osm, cfg) for p in res.polygons]
        return res
    except InputError:
        raise
    except Exception as exc:  # surface stage and bin; keep the original as cause
        raise StageError(stage, b.key, exc) from exc


def clusters_to_polygons(bin_key: str, clusters, cfg: PipelineConfig) -> list:
    polys = []
    for c in clusters:
        p = convex_hull(c.locations, names=list(c.names), member_count=len(c),
                        member_ids=tuple(sorted(c.member_ids)))
        if p is not None:
            polys.append(p)
    polys = merge_substantial(discard_embedded(polys), cfg.polygon_merge_overlap)
    polys.sort(key=lambda p: p.member_ids[0] if p.member_ids else "")
    return [dataclasses.replace(p, poi_id=f"{bin_key}:{k}") for k, p in enumerate(polys)]


# --- whole run -------------------------------------------------------------------------

@dataclass
class PipelineResult:
    polygons: list
    corrected: Optional[list]
    clusters: dict           # stage -> list of (bin_key, CandidateCluster)
    report: object
    manifest: RunManifest
    baseline: list = field(default_factory=list)
    stats: object = None     # CorpusStats, or zone key -> CorpusStats

    @property
    def final_polygons(self) -> list:
        return self.corrected if self.corrected is not None else self.polygons


def worker_count(requested: Optional[int] = None) -> int:
    cap = os.environ.get("POIFORGE_THREADS")
    n = requested or (int(cap) if cap else (os.cpu_count() or 1))
    if cap:
        n = min(n, int(cap))
    return max(1, n)


def run_pipeline(addresses, cfg: PipelineConfig = PipelineConfig(), *, stats: CorpusStats = None,
                 localities: dict = None, top_words: dict = None, embeddings: EmbeddingStore = None,
                 osm: Optional[OsmLayer] = None, gt: Optional[list] = None,
                 workers: Optional[int] = None, stage_through: str = "evaluate",
                 with_baseline: bool = False, inputs: Optional[dict] = None,
                 zone: str = "single") -> PipelineResult:
    if zone not in ZONES:
        raise InputError(f"unknown zone mode {zone!r}; choose from {', '.join(ZONES)}")
    if stage_through not in STAGE_ORDER:
        raise InputError(f"unknown stage {stage_through!r}; choose from {', '.join(STAGE_ORDER)}")
    cfg.validate()
    manifest = RunManifest(config=cfg.to_dict(), inputs=dict(inputs or {}))
    addresses = sorted(addresses, key=lambda a: a.address_id)
    manifest.counts["addresses_in"] = len(addresses)
    result = PipelineResult([], None, {}, None, manifest)

    with _Timer(manifest, "preprocess"):
        if stats is None and zone == "single":
            stats = build_corpus_stats(addresses, localities, cfg.bigram_min_count,
                                       cfg.top_words_count, top_words)
        elif stats is None:
            stats = build_zone_stats(addresses, zone, cfg, localities, top_words)
        preprocess_addresses(addresses, stats, zone)
    result.stats = stats
    if stage_through == "preprocess":
        return result

    with _Timer(manifest, "embed"):
        if embeddings is None:
            embeddings = reference_embeddings(addresses, cfg.embedding_dim)
        elif embeddings.dim != cfg.embedding_dim:
            raise InputError(f"embedding dim {embeddings.dim} != embedding_dim {cfg.embedding_dim}")
    if stage_through == "embed":
        return result

    with _Timer(manifest, "partition"):
        bins = make_bins(addresses, cfg.bin_grid, cfg.geohash_precision, cfg.min_cluster_size)
    manifest.counts["bins"] = len(bins)
    manifest.counts["addresses_binned"] = sum(len(b.member_ids) for b in bins)
    if stage_through == "partition":
        return result

    records = {a.address_id: a for a in addresses}
    with _Timer(manifest, "mine"):
        n = worker_count(workers)
        task = lambda b: mine_bin(b, records, embeddings, cfg, osm, stage_through, with_baseline)
        if n == 1 or len(bins) <= 1:
            results = [task(b) for b in bins]
        else:
            with ThreadPoolExecutor(max_workers=n) as pool:
                results = list(pool.map(task, bins))
    results.sort(key=lambda r: r.key)

    for name, attr in (("homogeneous", "homogeneous"), ("dbscan", "refined"), ("merge", "merged")):
        result.clusters[name] = [(r.key, c) for r in results for c in getattr(r, attr)]
    manifest.counts["homogeneous_clusters"] = len(result.clusters["homogeneous"])
    manifest.counts["homogeneous_members"] = sum(len(c) for _, c in result.clusters["homogeneous"])
    manifest.counts["dbscan_clusters"] = len(result.clusters["dbscan"])
    manifest.counts["dbscan_members"] = sum(len(c) for _, c in result.clusters["dbscan"])
    manifest.counts["merged_clusters"] = len(result.clusters["merge"])
    result.polygons = [p for r in results for p in r.polygons]
    manifest.counts["polygons"] = len(result.polygons)
    if osm is not None and _through("osm", stage_through):
        result.corrected = [p for r in results for p in r.corrected]
        manifest.counts["osm_corrected_polygons"] = len(result.corrected)
    if with_baseline:
        result.baseline = [p for r in results for p in r.baseline]
        manifest.counts["baseline_polygons"] = len(result.baseline)

    if gt is not None and _through("evaluate", stage_through):
        with _Timer(manifest, "evaluate"):
            result.report = evaluate(result.final_polygons, gt)
        manifest.counts["pairs"] = result.report.counts["n_pairs"]
    return result


def clusters_jsonl(clusters) -> str:
    lines = []
    for key, c in clusters:
        lines.append(json.dumps({"bin": key, "stage": c.stage, "member_ids": list(c.member_ids),
                                 "names": list(c.names)}, sort_keys=True))
    return "".join(line + "\n" for line in lines)
