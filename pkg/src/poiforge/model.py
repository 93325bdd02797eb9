"""Shared domain types and the pipeline configuration."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence


class InputError(ValueError):
    """Raised when user-supplied input (files, config, coordinates) is invalid."""


class ConfigError(InputError):
    pass


STAGES = ("raw_hull", "merged", "osm_corrected", "baseline")

OSM_STEPS = ("buildings", "circular", "prune")


@dataclass
class AddressRecord:
    address_id: str
    lat: float
    lng: float
    raw_text: str = ""
    clean_text: str = ""
    mined_text: str = ""
    embedding: Optional[Sequence[float]] = None
    city: str = ""

    def __post_init__(self):
        check_coordinates(self.lat, self.lng)


def check_coordinates(lat: float, lng: float) -> None:
    if not (math.isfinite(lat) and math.isfinite(lng)):
        raise InputError(f"non-finite coordinate ({lat}, {lng})")
    if not -90.0 <= lat <= 90.0:
        raise InputError(f"latitude {lat} outside [-90, 90]")
    if not -180.0 <= lng <= 180.0:
        raise InputError(f"longitude {lng} outside [-180, 180]")


@dataclass(frozen=True)
class PipelineConfig:
    location_scale: float = 10.0
    min_cluster_size: int = 10
    homogeneity_fraction: float = 0.9
    cosine_similarity_threshold: float = 0.9
    dbscan_eps_m: float = 10.0
    dbscan_min_neighbours: int = 5
    ngram_sizes: tuple = (2, 3, 4)
    hcn_support: float = 0.7
    hcn_edit_distance: int = 1
    hcn_centroid_dist_m: float = 100.0
    polygon_merge_overlap: float = 0.7
    geohash_precision: int = 5
    bin_grid: tuple = (5, 5)
    osm_buffer_m: float = 5.0
    alg1_length_factor: float = 2.0
    alg2_encompass_area_factor: float = 1.5
    alg2_private_overlap: float = 0.2
    alg2_public_overlap: float = 0.5
    baseline_tp: float = 0.7
    baseline_tfidf: float = 0.1
    baseline_min_points: int = 15
    embedding_dim: int = 300
    top_words_count: int = 10
    # knobs for ambiguous readings
    cosine_reading: str = "similarity"  # or "distance"
    dbscan_count_self: bool = False
    bigram_min_count: int = 5
    baseline_cut_m: float = 30.0
    osm_stage_order: tuple = OSM_STEPS

    def __post_init__(self):
        # JSON gives lists; keep the frozen instance hashable
        for name in ("ngram_sizes", "bin_grid", "osm_stage_order"):
            value = getattr(self, name)
            if isinstance(value, list):
                object.__setattr__(self, name, tuple(value))
        self.validate()

    def validate(self) -> None:
        fractions = (
            "homogeneity_fraction", "cosine_similarity_threshold", "hcn_support",
            "polygon_merge_overlap", "alg2_private_overlap", "alg2_public_overlap",
            "baseline_tp", "baseline_tfidf",
        )
        for key in fractions:
            v = getattr(self, key)
            if not _is_number(v) or not 0.0 < v <= 1.0:
                raise ConfigError(f"{key} must lie in (0, 1], got {v!r}")
        positive = (
            "dbscan_eps_m", "hcn_centroid_dist_m", "osm_buffer_m", "alg1_length_factor",
            "alg2_encompass_area_factor", "baseline_cut_m",
        )
        for key in positive:
            v = getattr(self, key)
            if not _is_number(v) or not v > 0:
                raise ConfigError(f"{key} must be > 0, got {v!r}")
        positive_int = (
            "min_cluster_size", "dbscan_min_neighbours", "geohash_precision",
            "baseline_min_points", "embedding_dim", "top_words_count", "bigram_min_count",
        )
        for key in positive_int:
            v = getattr(self, key)
            if not _is_int(v) or v <= 0:
                raise ConfigError(f"{key} must be a positive integer, got {v!r}")
        if not _is_int(self.hcn_edit_distance) or self.hcn_edit_distance < 0:
            raise ConfigError(f"hcn_edit_distance must be a non-negative integer, got {self.hcn_edit_distance!r}")
        if not _is_number(self.location_scale) or self.location_scale < 0:
            raise ConfigError(f"location_scale must be >= 0, got {self.location_scale!r}")
        if not self.ngram_sizes or not all(_is_int(n) and n >= 1 for n in self.ngram_sizes):
            raise ConfigError(f"ngram_sizes must be positive integers, got {self.ngram_sizes!r}")
        if len(self.bin_grid) != 2 or not all(_is_int(n) and n >= 1 for n in self.bin_grid):
            raise ConfigError(f"bin_grid must be two positive integers, got {self.bin_grid!r}")
        if self.cosine_reading not in ("similarity", "distance"):
            raise ConfigError(f"cosine_reading must be 'similarity' or 'distance', got {self.cosine_reading!r}")
        if not isinstance(self.dbscan_count_self, bool):
            raise ConfigError("dbscan_count_self must be a boolean")
        if sorted(self.osm_stage_order) != sorted(OSM_STEPS):
            raise ConfigError(f"osm_stage_order must be a permutation of {OSM_STEPS}, got {self.osm_stage_order!r}")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:  # e.g. a string where a sequence was expected
            raise ConfigError(str(exc)) from exc

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def load_config(path) -> PipelineConfig:
    """Read a flat JSON object of overrides; missing keys keep their defaults."""
    text = Path(path).read_text(encoding="utf-8")
    if not text.strip():
        return PipelineConfig()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object at top level")
    return PipelineConfig.from_dict(data)


def save_config(cfg: PipelineConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


@dataclass
class PoiPolygon:
    """A closed (lat, lng) ring plus what the miner knows about it."""

    poi_id: str
    ring: tuple
    names: list = field(default_factory=list)
    member_count: int = 0
    stage: str = "raw_hull"
    member_ids: tuple = ()

    def __post_init__(self):
        self.ring = tuple((float(a), float(b)) for a, b in self.ring)
        if self.stage not in STAGES:
            raise ValueError(f"unknown polygon stage {self.stage!r}")

    @property
    def vertices(self) -> list:
        return list(self.ring[:-1])


# --- ring validation -------------------------------------------------------

def _orient(p, q, r) -> float:
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])


def _on_segment(p, q, r) -> bool:
    # r collinear with p-q; is it within the bounding box?
    return (min(p[0], q[0]) <= r[0] <= max(p[0], q[0])
            and min(p[1], q[1]) <= r[1] <= max(p[1], q[1]))


def segments_intersect(p1, p2, q1, q2) -> bool:
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > 0 > d2) or (d1 < 0 < d2)) and ((d3 > 0 > d4) or (d3 < 0 < d4)):
        return True
    if d1 == 0 and _on_segment(q1, q2, p1):
        return True
    if d2 == 0 and _on_segment(q1, q2, p2):
        return True
    if d3 == 0 and _on_segment(p1, p2, q1):
        return True
    if d4 == 0 and _on_segment(p1, p2, q2):
        return True
    return False


def ring_signed_area(ring) -> float:
    """Shoelace area in the ring's own units (positive when counterclockwise)."""
    s = 0.0
    for (x1, y1), (x2, y2) in zip(ring[:-1], ring[1:]):
        s += x1 * y2 - x2 * y1
    return s / 2.0


def validate_polygon(ring) -> bool:
    """True iff `ring` is closed, simple and encloses positive area."""
    try:
        pts = [(float(a), float(b)) for a, b in ring]
    except (TypeError, ValueError):
        return False
    if len(pts) < 4 or pts[0] != pts[-1]:
        return False
    if not all(math.isfinite(c) for p in pts for c in p):
        return False
    n = len(pts) - 1  # number of edges
    if len(set(pts[:-1])) != n:
        return False  # repeated vertex: zero-length edge or pinch
    if ring_signed_area(pts) == 0.0:
        return False
    for i in range(n):
        a1, a2 = pts[i], pts[i + 1]
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                # neighbours share exactly one endpoint; overlapping is still a defect
                shared = a2 if j == i + 1 else a1
                b1, b2 = pts[j], pts[j + 1]
                other_a = a1 if shared == a2 else a2
                other_b = b2 if shared == b1 else b1
                if _orient(other_a, shared, other_b) == 0 and _fold_back(other_a, shared, other_b):
                    return False
                continue
            if segments_intersect(a1, a2, pts[j], pts[j + 1]):
                return False
    return True


def _fold_back(a, s, b) -> bool:
    # collinear a-s-b: the two edges overlap iff a and b lie on the same side of s
    return (a[0] - s[0]) * (b[0] - s[0]) + (a[1] - s[1]) * (b[1] - s[1]) > 0
