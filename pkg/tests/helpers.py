"""Fixture builders shared across test modules."""
from __future__ import annotations

import numpy as np

from poiforge.geometry import LocalFrame
from poiforge.model import PoiPolygon

ORIGIN = (12.97, 77.59)
FRAME = LocalFrame(*ORIGIN)


def ring_xy(xy, frame: LocalFrame = FRAME) -> tuple:
    latlng = frame.unproject(np.asarray(xy, dtype=float))
    ring = [tuple(map(float, p)) for p in latlng]
    ring.append(ring[0])
    return tuple(ring)


def rect(x0, y0, x1, y1, poi_id="p", frame: LocalFrame = FRAME, **kw) -> PoiPolygon:
    """Axis-aligned rectangle given in metres east/north of the origin."""
    return PoiPolygon(poi_id=poi_id, ring=ring_xy([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], frame), **kw)


def poly_xy(xy, poi_id="p", frame: LocalFrame = FRAME, **kw) -> PoiPolygon:
    return PoiPolygon(poi_id=poi_id, ring=ring_xy(xy, frame), **kw)


def latlng(x, y, frame: LocalFrame = FRAME) -> tuple:
    lat, lng = frame.to_latlng(x, y)
    return float(lat), float(lng)


def line_xy(points, frame: LocalFrame = FRAME) -> tuple:
    return tuple(latlng(x, y, frame) for x, y in points)
