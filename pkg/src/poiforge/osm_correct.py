"""Boundary correction from OpenStreetMap building footprints and roads.

Three steps, run in ``cfg.osm_stage_order``:

* ``buildings``: grow the polygon by the footprints it touches, each padded
  with a private margin;
* ``circular``: snap to closed road loops (replace / union for private
  loops, intersection / difference for public ones);
* ``prune``: cut along public or long roads and keep the largest side.
"""
from __future__ import annotations

import dataclasses
import enum
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from shapely.geometry import LineString, Polygon
from shapely.ops import unary_union

from .geometry import (LocalFrame, alpha_shape, diameter_m, hull_ring, overlap_stats,
                       polygon_area_m2, polygon_difference, polygon_intersection,
                       polygon_union, polyline_length_m, ring_from_shape, split_by_polyline,
                       to_shape)
from .model import InputError, PipelineConfig, PoiPolygon, validate_polygon

CIRCULAR_TOL_DEG = 1e-9
STITCH_TOL_M = 1.0


class RoadClass(str, enum.Enum):
    PRIVATE = "private"
    PUBLIC = "public"
    UNKNOWN = "unknown"


PRIVATE_TAGS = frozenset({"service", "unclassified", "footway", "tertiary", "path",
                          "pedestrian", "track"})
PUBLIC_TAGS = frozenset({"primary", "secondary", "trunk", "motorway", "primary_link",
                         "secondary_link", "trunk_link", "motorway_link", "raceway",
                         "bridleway", "escape", "bus_guideway"})


def classify_highway(tag: str) -> RoadClass:
    tag = (tag or "").strip().lower()
    if tag in PRIVATE_TAGS:
        return RoadClass.PRIVATE
    if tag in PUBLIC_TAGS:
        return RoadClass.PUBLIC
    return RoadClass.UNKNOWN


@dataclass(frozen=True)
class Road:
    road_id: str
    coords: tuple  # ((lat, lng), ...)
    highway: str
    road_class: RoadClass
    circular: bool

    @property
    def length_m(self) -> float:
        return polyline_length_m(self.coords)


def is_circular(coords) -> bool:
    (a0, b0), (a1, b1) = coords[0], coords[-1]
    return abs(a0 - a1) <= CIRCULAR_TOL_DEG and abs(b0 - b1) <= CIRCULAR_TOL_DEG


def make_road(road_id: str, coords, highway: str) -> Road:
    coords = tuple((float(a), float(b)) for a, b in coords)
    return Road(road_id, coords, highway, classify_highway(highway),
                len(coords) >= 4 and is_circular(coords))


def _bbox(coords) -> tuple:
    arr = np.asarray(coords, dtype=float)
    return (*arr.min(axis=0), *arr.max(axis=0))


@dataclass
class OsmLayer:
    buildings: list = field(default_factory=list)  # (id, ring)
    roads: list = field(default_factory=list)      # Road
    skipped: int = 0
    _loops: Optional[list] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self._index()

    def _index(self):
        self._bb = np.array([_bbox(r) for _, r in self.buildings]).reshape(-1, 4)
        self._rb = np.array([_bbox(r.coords) for r in self.roads]).reshape(-1, 4)

    @staticmethod
    def _hits(boxes, ring) -> np.ndarray:
        lat0, lng0, lat1, lng1 = _bbox(ring)
        if len(boxes) == 0:
            return np.zeros(0, dtype=int)
        keep = ((boxes[:, 0] <= lat1) & (boxes[:, 2] >= lat0)
                & (boxes[:, 1] <= lng1) & (boxes[:, 3] >= lng0))
        return np.nonzero(keep)[0]

    def buildings_near(self, ring) -> list:
        return [self.buildings[i] for i in self._hits(self._bb, ring)]

    def roads_near(self, ring) -> list:
        return [self.roads[i] for i in self._hits(self._rb, ring)]

    def loops(self) -> list:
        if self._loops is None:
            self._loops = polygonize_roads(self.roads)
            self._lb = np.array([_bbox(p.ring) for p, _ in self._loops]).reshape(-1, 4)
        return self._loops

    def loops_near(self, ring) -> list:
        loops = self.loops()
        return [loops[i] for i in self._hits(self._lb, ring)]


def _geojson_latlng(coords) -> list:
    return [(float(c[1]), float(c[0])) for c in coords]


def load_osm(path) -> OsmLayer:
    """Buildings are Polygon (exterior ring) features; roads are LineString
    features carrying a ``highway`` property. Malformed building rings are
    replaced by the alpha shape of their vertices."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read OSM layer {path}: {exc}") from exc
    features = data.get("features") if isinstance(data, dict) else None
    if not features:
        raise InputError(f"{path}: no features")
    buildings, roads, skipped = [], [], 0
    for k, feat in enumerate(features):
        geom = (feat or {}).get("geometry")
        props = (feat or {}).get("properties") or {}
        fid = str(feat.get("id", props.get("id", k)))
        if not geom or not geom.get("coordinates"):
            skipped += 1
            continue
        gtype = geom.get("type")
        if gtype in ("Polygon", "MultiPolygon"):
            polys = [geom["coordinates"]] if gtype == "Polygon" else geom["coordinates"]
            for j, rings in enumerate(polys):
                ring = _repair_ring(_geojson_latlng(rings[0]))
                if ring is None:
                    skipped += 1
                    continue
                buildings.append((fid if len(polys) == 1 else f"{fid}.{j}", ring))
        elif gtype in ("LineString", "MultiLineString") and props.get("highway"):
            lines = [geom["coordinates"]] if gtype == "LineString" else geom["coordinates"]
            for j, line in enumerate(lines):
                if len(line) < 2:
                    skipped += 1
                    continue
                rid = fid if len(lines) == 1 else f"{fid}.{j}"
                roads.append(make_road(rid, _geojson_latlng(line), str(props["highway"])))
        else:
            skipped += 1
    return OsmLayer(buildings=buildings, roads=roads, skipped=skipped)


def _repair_ring(latlng) -> Optional[tuple]:
    ring = list(latlng)
    if ring and ring[0] != ring[-1]:
        ring.append(ring[0])
    if validate_polygon(ring):
        return tuple(ring)
    shape = alpha_shape(ring[:-1])
    return None if shape is None else shape.ring


# --- step 1: building footprints ---------------------------------------------

def attach_buildings(poly: PoiPolygon, layer: OsmLayer, buffer_m: float = 5.0) -> PoiPolygon:
    near = layer.buildings_near(poly.ring)
    if not near:
        return poly
    frame = LocalFrame.around(poly.ring, *[r for _, r in near])
    base = to_shape(poly, frame)
    hits = [to_shape(r, frame) for _, r in near]
    hits = [h for h in hits if h.intersects(base)]
    if not hits:
        return poly
    padded = unary_union(hits).buffer(buffer_m, quad_segs=4)
    merged = unary_union([base, padded])
    if isinstance(merged, Polygon):
        # courtyards between footprints are part of the compound
        ring = ring_from_shape(Polygon(merged.exterior), frame)
    else:
        ring = hull_ring(frame.unproject(np.vstack(
            [np.asarray(g.exterior.coords) for g in merged.geoms])))
    return dataclasses.replace(poly, ring=ring)


# --- step 2: closed road loops -------------------------------------------------

def _stitch(open_roads: list) -> list:
    """Greedy chaining of open roads whose endpoints meet within 1 m.
    Returns lists of roads that together close a loop."""
    unused = sorted(open_roads, key=lambda r: r.road_id)
    loops = []
    while unused:
        chain = [unused.pop(0)]
        path = list(chain[0].coords)
        closed = False
        while not closed:
            if len(path) >= 3 and _near(path[-1], path[0]):
                closed = True
                break
            for k, r in enumerate(unused):
                if _near(path[-1], r.coords[0]):
                    path.extend(r.coords[1:])
                elif _near(path[-1], r.coords[-1]):
                    path.extend(r.coords[-2::-1])
                else:
                    continue
                chain.append(unused.pop(k))
                break
            else:
                break
        if closed and len(chain) > 1:
            loops.append((chain, path))
    return loops


def _near(p, q) -> bool:
    return p == q or _dist(p, q) <= STITCH_TOL_M


def _dist(p, q) -> float:
    frame = LocalFrame(p[0], p[1])
    (x1, y1), (x2, y2) = frame.project([p, q])
    return math.hypot(x2 - x1, y2 - y1)


def _loop_polygon(road_id: str, path) -> Optional[PoiPolygon]:
    ring = list(path)
    ring[-1] = ring[0]
    if validate_polygon(ring):
        return PoiPolygon(poi_id=road_id, ring=ring, stage="osm_corrected")
    return alpha_shape(ring[:-1], poi_id=road_id, stage="osm_corrected")


def polygonize_roads(roads) -> list:
    """(polygon, RoadClass) for every closed way, plus loops stitched from
    open ways. A stitched loop keeps its class only when all its ways agree."""
    out = []
    for r in sorted((r for r in roads if r.circular), key=lambda r: r.road_id):
        p = _loop_polygon(r.road_id, r.coords)
        if p is not None:
            out.append((p, r.road_class))
    for chain, path in _stitch([r for r in roads if not r.circular]):
        classes = {r.road_class for r in chain}
        cls = classes.pop() if len(classes) == 1 else RoadClass.UNKNOWN
        p = _loop_polygon("+".join(r.road_id for r in chain), path)
        if p is not None:
            out.append((p, cls))
    return out


def _contains(outer: PoiPolygon, inner: PoiPolygon) -> bool:
    frame = LocalFrame.around(outer.ring, inner.ring)
    a, b = to_shape(outer, frame), to_shape(inner, frame)
    # tolerate round-off along shared edges
    return a.buffer(1e-6).covers(b)


def correct_polygon_via_highway(poly: PoiPolygon, layer: OsmLayer,
                                cfg: PipelineConfig = PipelineConfig(),
                                trace: Optional[list] = None) -> PoiPolygon:
    candidates = []
    for loop, cls in layer.loops_near(poly.ring):
        _, _, inter = overlap_stats(loop, poly)
        if inter > 0:
            candidates.append((loop, cls))
    candidates.sort(key=lambda lc: (-polygon_area_m2(lc[0]), lc[0].poi_id))
    for loop, cls in candidates:
        area = polygon_area_m2(poly)
        _, _, inter = overlap_stats(poly, loop)
        branch = "skip"
        if (cls is RoadClass.PRIVATE and _contains(loop, poly)
                and polygon_area_m2(loop) <= cfg.alg2_encompass_area_factor * area):
            poly, branch = dataclasses.replace(poly, ring=loop.ring), "replace"
        elif cls is RoadClass.PRIVATE and inter >= cfg.alg2_private_overlap * area:
            poly, branch = polygon_union(poly, loop), "union"
        elif cls is RoadClass.PUBLIC:
            if inter >= cfg.alg2_public_overlap * area:
                cut, branch = polygon_intersection(poly, loop), "intersection"
            else:
                cut, branch = polygon_difference(poly, loop), "difference"
            poly = cut if cut is not None else poly
        if trace is not None:
            trace.append((loop.poi_id, branch))
    return poly


# --- step 3: pruning along roads -------------------------------------------------

def _crosses(poly: PoiPolygon, road: Road) -> bool:
    frame = LocalFrame.around(poly.ring, road.coords)
    return to_shape(poly, frame).intersects(LineString(frame.project(road.coords)))


def prune_polygon_via_highway(poly: PoiPolygon, layer: OsmLayer,
                              cfg: PipelineConfig = PipelineConfig(),
                              trace: Optional[list] = None) -> PoiPolygon:
    d = diameter_m(poly)
    roads = [r for r in layer.roads_near(poly.ring) if not r.circular and _crosses(poly, r)]
    roads.sort(key=lambda r: (-r.length_m, r.road_id))
    for road in roads:
        if road.road_class is RoadClass.PUBLIC or road.length_m >= cfg.alg1_length_factor * d:
            parts = split_by_polyline(poly, road.coords)
            if len(parts) > 1 and trace is not None:
                trace.append((road.road_id, "prune"))
            poly = parts[0]
    return poly


# --- composition ----------------------------------------------------------------------

def correct(poly: PoiPolygon, layer: OsmLayer, cfg: PipelineConfig = PipelineConfig(),
            trace: Optional[list] = None) -> PoiPolygon:
    for step in cfg.osm_stage_order:
        if step == "buildings":
            poly = attach_buildings(poly, layer, cfg.osm_buffer_m)
        elif step == "circular":
            poly = correct_polygon_via_highway(poly, layer, cfg, trace)
        else:
            poly = prune_polygon_via_highway(poly, layer, cfg, trace)
    return dataclasses.replace(poly, stage="osm_corrected")
