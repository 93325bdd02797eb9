"""Canonical GeoJSON for PoI polygons: [lng, lat] order, fixed 9 decimals,
sorted keys, so equal polygon lists serialise to equal bytes."""
from __future__ import annotations

import json
from pathlib import Path

from .model import InputError, PoiPolygon, validate_polygon

DECIMALS = 9


def _fixed(x: float) -> str:
    s = f"{x:.{DECIMALS}f}"
    return "0.000000000" if s == "-0.000000000" else s


def _ring_json(ring) -> str:
    return "[" + ",".join(f"[{_fixed(lng)},{_fixed(lat)}]" for lat, lng in ring) + "]"


def feature_json(p: PoiPolygon) -> str:
    props = {"poi_id": p.poi_id, "names": list(p.names), "member_count": int(p.member_count),
             "stage": p.stage}
    if p.member_ids:
        props["member_ids"] = list(p.member_ids)
    return ('{"geometry":{"coordinates":[' + _ring_json(p.ring) + '],"type":"Polygon"},'
            '"properties":' + json.dumps(props, sort_keys=True, ensure_ascii=False)
            + ',"type":"Feature"}')


def dumps_geojson(polygons) -> str:
    body = ",\n".join(feature_json(p) for p in polygons)
    return '{"features":[\n' + body + ('\n' if body else '') + '],"type":"FeatureCollection"}\n'


def emit_geojson(polygons, path) -> None:
    Path(path).write_text(dumps_geojson(polygons), encoding="utf-8")


def load_polygons(path) -> list:
    """Read Polygon features back into PoiPolygons (exterior rings only)."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read polygons from {path}: {exc}") from exc
    if not isinstance(data, dict) or data.get("type") != "FeatureCollection":
        raise InputError(f"{path}: expected a GeoJSON FeatureCollection")
    out = []
    for k, feat in enumerate(data.get("features") or []):
        geom = feat.get("geometry") or {}
        if geom.get("type") != "Polygon":
            continue
        props = feat.get("properties") or {}
        ring = [(float(lat), float(lng)) for lng, lat in geom["coordinates"][0]]
        if not validate_polygon(ring):
            raise InputError(f"{path}: feature {k} is not a simple closed polygon")
        out.append(PoiPolygon(
            poi_id=str(props.get("poi_id", feat.get("id", k))),
            ring=ring,
            names=list(props.get("names", [])),
            member_count=int(props.get("member_count", 0)),
            stage=props.get("stage", "raw_hull"),
            member_ids=tuple(props.get("member_ids", ())),
        ))
    return out
