"""Planar geometry on (lat, lng) polygons.

Every operation projects its inputs into a local equirectangular frame in
metres, works there (clipping is delegated to shapely), and converts back.
The projection is affine in (lat, lng), so convexity and area ratios are
frame independent.
"""
from __future__ import annotations

import dataclasses
import math
from typing import Iterable, Optional, Sequence

import numpy as np
import shapely
from scipy.spatial import Delaunay, QhullError
from shapely.geometry import LineString, MultiPoint, Polygon
from shapely.geometry.polygon import orient
from shapely.ops import split as shapely_split, unary_union

from .model import PoiPolygon, validate_polygon

EARTH_RADIUS_M = 6371008.8
REL_TOL = 1e-9


class LocalFrame:
    """Equirectangular projection centred on (lat0, lng0); x east, y north."""

    def __init__(self, lat0: float, lng0: float):
        self.lat0 = float(lat0)
        self.lng0 = float(lng0)
        self._kx = EARTH_RADIUS_M * math.cos(math.radians(self.lat0)) * math.pi / 180.0
        self._ky = EARTH_RADIUS_M * math.pi / 180.0

    def to_xy(self, lat, lng):
        return (np.asarray(lng, dtype=float) - self.lng0) * self._kx, \
               (np.asarray(lat, dtype=float) - self.lat0) * self._ky

    def to_latlng(self, x, y):
        return np.asarray(y, dtype=float) / self._ky + self.lat0, \
               np.asarray(x, dtype=float) / self._kx + self.lng0

    def project(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        x, y = self.to_xy(pts[:, 0], pts[:, 1])
        return np.column_stack([x, y])

    def unproject(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        lat, lng = self.to_latlng(xy[:, 0], xy[:, 1])
        return np.column_stack([lat, lng])

    @classmethod
    def around(cls, *point_sets) -> "LocalFrame":
        pts = np.vstack([np.asarray(p, dtype=float).reshape(-1, 2) for p in point_sets])
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        return cls((lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0)


def distance_m(p, q) -> float:
    """Distance between two (lat, lng) points in a frame at their midpoint."""
    frame = LocalFrame((p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0)
    (x1, y1), (x2, y2) = frame.project([p, q])
    return math.hypot(x2 - x1, y2 - y1)


def polyline_length_m(coords) -> float:
    coords = np.asarray(coords, dtype=float)
    xy = LocalFrame.around(coords).project(coords)
    return float(np.hypot(*np.diff(xy, axis=0).T).sum())


# --- conversions ----------------------------------------------------------

def _ring_of(p) -> Sequence:
    return p.ring if isinstance(p, PoiPolygon) else p


def to_shape(p, frame: LocalFrame) -> Polygon:
    ring = np.asarray(_ring_of(p), dtype=float)
    return Polygon(frame.project(ring))


def _clean_ring(latlng: np.ndarray) -> Optional[tuple]:
    pts = [tuple(map(float, v)) for v in latlng]
    out = []
    for v in pts:
        if not out or v != out[-1]:
            out.append(v)
    if out[0] != out[-1]:
        out.append(out[0])
    if len(out) < 4:
        return None
    return tuple(out)


def _largest_polygon(geom) -> Optional[Polygon]:
    if geom is None or geom.is_empty:
        return None
    if isinstance(geom, Polygon):
        return geom
    parts = [g for g in getattr(geom, "geoms", []) if isinstance(g, Polygon) and not g.is_empty]
    if not parts:
        # nested collections
        parts = [p for g in getattr(geom, "geoms", []) if (p := _largest_polygon(g)) is not None]
    if not parts:
        return None
    return max(parts, key=lambda g: g.area)


def _polygon_parts(geom) -> list:
    if geom is None or geom.is_empty:
        return []
    if isinstance(geom, Polygon):
        return [geom]
    out = []
    for g in getattr(geom, "geoms", []):
        out.extend(_polygon_parts(g))
    return out


def ring_from_shape(geom, frame: LocalFrame) -> Optional[tuple]:
    """(lat, lng) ring for a planar polygon's exterior; None if degenerate."""
    if geom is None or geom.is_empty or geom.area <= 0:
        return None
    shell = orient(Polygon(geom.exterior), 1.0)
    ring = _clean_ring(frame.unproject(np.asarray(shell.exterior.coords)))
    if ring is not None and validate_polygon(ring):
        return ring
    # float round-off can leave a sliver spike; fall back to the hull
    return hull_ring(frame.unproject(np.asarray(shell.exterior.coords)))


def _with_ring(template: Optional[PoiPolygon], ring, **changes) -> PoiPolygon:
    if template is None:
        return PoiPolygon(poi_id="", ring=ring, **changes)
    return dataclasses.replace(template, ring=ring, **changes)


# --- convex hull ------------------------------------------------------------

def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def hull_ring(points) -> Optional[tuple]:
    """Convex hull of (lat, lng) points as a closed ring, counterclockwise
    on the map (x = lng, y = lat); None when the points are collinear."""
    pts = sorted({(float(lng), float(lat)) for lat, lng in points})
    if len(pts) < 3:
        return None
    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        return None
    ring = [(lat, lng) for lng, lat in hull]
    ring.append(ring[0])
    return tuple(ring)


def convex_hull(points, **attrs) -> Optional[PoiPolygon]:
    ring = hull_ring(points)
    if ring is None:
        return None
    attrs.setdefault("poi_id", "")
    return PoiPolygon(ring=ring, **attrs)


# --- measurements -----------------------------------------------------------

def polygon_area_m2(p) -> float:
    ring = _ring_of(p)
    frame = LocalFrame.around(ring)
    return float(to_shape(ring, frame).area)


def overlap_stats(a, b) -> tuple:
    """(area_a, area_b, intersection_area) in square metres."""
    ra, rb = _ring_of(a), _ring_of(b)
    for r in (ra, rb):
        if not validate_polygon(r):
            raise ValueError("overlap_stats needs valid polygons")
    frame = LocalFrame.around(ra, rb)
    sa, sb = to_shape(ra, frame), to_shape(rb, frame)
    inter = sa.intersection(sb).area if sa.intersects(sb) else 0.0
    return float(sa.area), float(sb.area), float(min(inter, sa.area, sb.area))


def diameter_m(p) -> float:
    """Largest distance between two vertices."""
    ring = np.asarray(_ring_of(p)[:-1], dtype=float)
    xy = LocalFrame.around(ring).project(ring)
    diff = xy[:, None, :] - xy[None, :, :]
    return float(np.sqrt((diff ** 2).sum(axis=-1)).max())


def contains_point(p, point) -> bool:
    ring = _ring_of(p)
    frame = LocalFrame.around(ring, [point])
    x, y = frame.project([point])[0]
    return bool(to_shape(ring, frame).buffer(1e-7).covers(shapely.Point(x, y)))


# --- boolean operations -----------------------------------------------------

def polygon_union(a: PoiPolygon, b: PoiPolygon) -> PoiPolygon:
    """Union; hulled when the raw union is multipart or has holes."""
    frame = LocalFrame.around(a.ring, b.ring)
    u = unary_union([to_shape(a, frame), to_shape(b, frame)])
    if isinstance(u, Polygon) and not u.interiors:
        ring = ring_from_shape(u, frame)
    else:
        ring = hull_ring(list(a.ring) + list(b.ring))
    return _with_ring(a, ring)


def polygon_intersection(a: PoiPolygon, b: PoiPolygon) -> Optional[PoiPolygon]:
    """Largest part of a ∩ b, or None when they share no area."""
    frame = LocalFrame.around(a.ring, b.ring)
    part = _largest_polygon(to_shape(a, frame).intersection(to_shape(b, frame)))
    ring = ring_from_shape(part, frame)
    return None if ring is None else _with_ring(a, ring)


def polygon_difference(a: PoiPolygon, b: PoiPolygon) -> Optional[PoiPolygon]:
    """Largest part of a - b, or None when nothing of a remains."""
    frame = LocalFrame.around(a.ring, b.ring)
    sa, sb = to_shape(a, frame), to_shape(b, frame)
    if not sa.intersects(sb):
        return a
    part = _largest_polygon(sa.difference(sb))
    ring = ring_from_shape(part, frame)
    return None if ring is None else _with_ring(a, ring)


def polygon_buffer(a: PoiPolygon, r_m: float) -> PoiPolygon:
    """Minkowski sum with a disc of radius r_m, discs drawn as 16-gons."""
    if not r_m > 0:
        raise ValueError("buffer radius must be positive")
    frame = LocalFrame.around(a.ring)
    g = to_shape(a, frame).buffer(r_m, quad_segs=4)
    return _with_ring(a, ring_from_shape(_largest_polygon(g), frame))


def union_all(polys: Sequence[PoiPolygon], template: Optional[PoiPolygon] = None) -> PoiPolygon:
    rings = [p.ring for p in polys]
    frame = LocalFrame.around(*rings)
    u = unary_union([to_shape(r, frame) for r in rings])
    if isinstance(u, Polygon) and not u.interiors:
        ring = ring_from_shape(u, frame)
    else:
        ring = hull_ring([v for r in rings for v in r])
    return _with_ring(template or polys[0], ring)


def split_by_polyline(p: PoiPolygon, line) -> list:
    """Cut p along a (lat, lng) polyline whose end segments are first
    extended until they leave the polygon. Parts come back largest first."""
    line = np.asarray(line, dtype=float)
    frame = LocalFrame.around(p.ring, line)
    poly = to_shape(p, frame)
    xy = frame.project(line)
    if len(xy) < 2:
        return [p]
    minx, miny, maxx, maxy = poly.bounds
    reach = 2.0 * (math.hypot(maxx - minx, maxy - miny)
                   + float(np.abs(xy).max()) + 1.0)
    xy = xy.copy()
    for end, nxt in ((0, 1), (-1, -2)):
        d = xy[end] - xy[nxt]
        norm = math.hypot(*d)
        if norm > 0:
            xy[end] = xy[end] + d / norm * reach
    pieces = _polygon_parts(shapely_split(poly, LineString(xy)))
    if len(pieces) <= 1:
        return [p]
    pieces.sort(key=lambda g: -g.area)
    out = []
    for g in pieces:
        ring = ring_from_shape(g, frame)
        if ring is not None:
            out.append(_with_ring(p, ring))
    return out or [p]


# --- alpha shape ------------------------------------------------------------

def alpha_shape(points, **attrs) -> Optional[PoiPolygon]:
    """Tightest single hole-free α-complex polygon covering all points.

    α sweeps the Delaunay circumradii in increasing order; the first radius
    whose triangle union is one polygon without holes that covers every
    point wins. At the largest radius the union is the convex hull.
    """
    uniq = sorted({(float(a), float(b)) for a, b in points})
    attrs.setdefault("poi_id", "")
    if len(uniq) < 3:
        return None
    frame = LocalFrame.around(uniq)
    xy = frame.project(uniq)
    try:
        tri = Delaunay(xy)
    except QhullError:
        return convex_hull(uniq, **attrs)
    simplices = tri.simplices
    t = xy[simplices]
    a = np.linalg.norm(t[:, 0] - t[:, 1], axis=1)
    b = np.linalg.norm(t[:, 1] - t[:, 2], axis=1)
    c = np.linalg.norm(t[:, 2] - t[:, 0], axis=1)
    area2 = np.abs(_tri_cross(t))
    keep = area2 > 0
    radius = np.full(len(t), np.inf)
    radius[keep] = a[keep] * b[keep] * c[keep] / (2.0 * area2[keep])
    cloud = MultiPoint(xy)
    for r in np.unique(radius[keep]):
        idx = np.nonzero(keep & (radius <= r))[0]
        if len(np.unique(simplices[idx])) < len(xy):
            continue
        u = unary_union([Polygon(t[i]) for i in idx])
        if isinstance(u, Polygon) and not u.interiors and u.buffer(1e-7).covers(cloud):
            ring = ring_from_shape(u, frame)
            if ring is not None:
                return PoiPolygon(ring=ring, **attrs)
    return convex_hull(uniq, **attrs)


def _tri_cross(t: np.ndarray) -> np.ndarray:
    return ((t[:, 1, 0] - t[:, 0, 0]) * (t[:, 2, 1] - t[:, 0, 1])
            - (t[:, 1, 1] - t[:, 0, 1]) * (t[:, 2, 0] - t[:, 0, 0]))


# --- polygon post-processing --------------------------------------------------

def _shared_shapes(polys: Sequence[PoiPolygon]):
    frame = LocalFrame.around(*[p.ring for p in polys])
    return [to_shape(p, frame) for p in polys]


def discard_embedded(polys: Sequence[PoiPolygon]) -> list:
    """Drop polygons lying entirely inside another one (outermost survives;
    of two identical polygons the earlier one is kept)."""
    polys = list(polys)
    if len(polys) < 2:
        return polys
    shapes = _shared_shapes(polys)
    areas = [s.area for s in shapes]
    tree = shapely.STRtree(shapes)
    drop = set()
    for i, s in enumerate(shapes):
        for j in tree.query(s):
            j = int(j)
            if j == i:
                continue
            inter = s.intersection(shapes[j]).area
            if inter < areas[i] * (1.0 - REL_TOL):
                continue
            same = abs(areas[j] - areas[i]) <= REL_TOL * max(areas[i], areas[j])
            if (not same and areas[j] > areas[i]) or (same and j < i):
                drop.add(i)
                break
    return [p for i, p in enumerate(polys) if i not in drop]


def substantial_overlap_edges(polys: Sequence[PoiPolygon], threshold: float) -> list:
    shapes = _shared_shapes(polys)
    areas = [s.area for s in shapes]
    tree = shapely.STRtree(shapes)
    edges = []
    for i, s in enumerate(shapes):
        for j in tree.query(s):
            j = int(j)
            if j <= i:
                continue
            inter = s.intersection(shapes[j]).area
            if inter > 0 and inter >= threshold * min(areas[i], areas[j]):
                edges.append((i, j))
    return edges


def connected_components(n: int, edges: Iterable) -> list:
    """Components of an undirected graph by iterative DFS, each sorted,
    listed in order of their smallest node."""
    adj = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = [False] * n
    comps = []
    for start in range(n):
        if seen[start]:
            continue
        stack, comp = [start], []
        seen[start] = True
        while stack:
            v = stack.pop()
            comp.append(v)
            for w in adj[v]:
                if not seen[w]:
                    seen[w] = True
                    stack.append(w)
        comps.append(sorted(comp))
    return comps


def merge_polygon_group(group: Sequence[PoiPolygon], stage: str = "merged") -> PoiPolygon:
    ring = hull_ring([v for p in group for v in p.ring])
    names = []
    for p in group:
        for n in p.names:
            if n not in names:
                names.append(n)
    members = tuple(sorted({m for p in group for m in p.member_ids}))
    return dataclasses.replace(
        group[0], ring=ring, names=names, stage=stage,
        member_count=sum(p.member_count for p in group) if not members else len(members),
        member_ids=members,
    )


def merge_substantial(polys: Sequence[PoiPolygon], overlap_threshold: float = 0.7) -> list:
    """Replace each group of substantially overlapping polygons by its hull."""
    polys = list(polys)
    if len(polys) < 2:
        return polys
    comps = connected_components(len(polys), substantial_overlap_edges(polys, overlap_threshold))
    out = []
    for comp in comps:
        if len(comp) == 1:
            out.append(polys[comp[0]])
        else:
            out.append(merge_polygon_group([polys[i] for i in comp]))
    return out
