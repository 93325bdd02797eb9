"""Seeded synthetic city: addresses, planted PoI polygons and a matching
OSM layer, for end-to-end checks where the true answer is known.

Layout: a square footprint centred in one geohash tile; four corner
addresses pin the extent so the bin grid is known in advance. PoIs are
rotated rectangles, each inside a single non-corner grid cell, ringed by a
private service road. Grid lines are public roads.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from shapely.geometry import Point, Polygon

from .geojson_io import emit_geojson
from .geometry import LocalFrame
from .model import AddressRecord, InputError, PoiPolygon
from .osm_correct import OsmLayer, make_road
from .partition import BASE32, geohash_encode
from .preprocess import edit_distance, phonetic_code

# every template uses all of these, so they (with the city name) are
# exactly the city's ten most frequent words
GENERIC_WORDS = ("flat", "no", "floor", "block", "near", "main", "road", "cross", "street")
TEMPLATES = (
    "flat no {n1}{l} {l} block floor {n2} near main road cross street",
    "no {n1} flat {l} block {n2} floor main road near cross street",
    "flat {n1} no {n2} floor {l} block cross street near main road",
)
_CONSONANTS = "bdgklmnprstv"
_VOWELS = "aeiou"


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 7
    n_pois: int = 20
    poi_radius_m: tuple = (12.0, 20.0)      # half-diagonal of the rectangle
    poi_aspect: tuple = (1.0, 1.6)
    addresses_per_poi: tuple = (50, 80)
    gps_noise_sigma_m: float = 0.0
    spell_variant_rate: float = 0.0
    outlier_rate: float = 0.0
    leak_rate: float = 0.0
    leak_distance_m: tuple = (20.0, 40.0)
    footprint_m: float = 1200.0
    grid: tuple = (5, 5)
    cell_margin_m: float = 20.0
    min_gap_m: float = 90.0
    outlier_clearance_m: float = 30.0
    building_margin_m: float = 8.0
    anchor: tuple = (13.0827, 80.2707)
    city: str = "chennai"
    localities: tuple = ("Anna Nagar", "Adyar", "Velachery", "Mylapore", "Guindy")
    name_words: int = 3

    def __post_init__(self):
        for key in ("spell_variant_rate", "outlier_rate", "leak_rate"):
            v = getattr(self, key)
            if not 0.0 <= v <= 1.0:
                raise InputError(f"{key} must lie in [0, 1], got {v}")
        lo, hi = self.poi_radius_m
        if not 0 < lo <= hi:
            raise InputError(f"poi_radius_m must be a positive range, got {self.poi_radius_m}")
        if self.gps_noise_sigma_m < 0:
            raise InputError("gps_noise_sigma_m must be >= 0")
        if self.n_pois < 0 or self.addresses_per_poi[0] < 1:
            raise InputError("n_pois and addresses_per_poi must be positive")


class SynthCity(NamedTuple):
    addresses: list
    gt_polygons: list
    osm_layer: OsmLayer
    localities: dict


@dataclass
class _Poi:
    center: tuple
    half_diag: float
    cell: tuple
    corners: np.ndarray = field(default=None)


# --- name lexicon ------------------------------------------------------------

def _variant(word: str) -> str:
    """Double the vowel nearest the middle of the word."""
    idx = [i for i, ch in enumerate(word) if ch in _VOWELS]
    i = min(idx, key=lambda k: (abs(k - len(word) / 2), k))
    return word[:i + 1] + word[i] + word[i + 1:]


def _splits_into(word: str, vocab: set, min_part: int = 1) -> bool:
    return any(word[:i] in vocab and word[i:] in vocab
               for i in range(min_part, len(word) - min_part + 1))


def _within_one_edit(s: str, t: str) -> bool:
    if abs(len(s) - len(t)) > 1:
        return False
    i = 0
    while i < min(len(s), len(t)) and s[i] == t[i]:
        i += 1
    return s[i + 1:] == t[i + 1:] or s[i:] == t[i + 1:] or s[i + 1:] == t[i:]


def _near_concat(token: str, vocab: set) -> bool:
    code = phonetic_code(token)
    for a in vocab:
        if len(token) - len(a) < 1:
            continue
        # one edit against a + b leaves some prefix within one edit of a
        if not any(_within_one_edit(token[:k], a) for k in (len(a) - 1, len(a), len(a) + 1)):
            continue
        for b in vocab:
            if _within_one_edit(token, a + b) and phonetic_code(a + b) == code:
                return True
    return False


class _Lexicon:
    """Unique invented words that no text normalisation step can split,
    glue or re-segment given the rest of the vocabulary."""

    def __init__(self, rng, base_vocab):
        self.rng = rng
        self.vocab = set(base_vocab)
        self.letters = set("abcdefgh")
        self.words = []

    def _candidate(self) -> str:
        syl = self.rng.integers(3, 4, endpoint=True)
        return "".join(self.rng.choice(list(_CONSONANTS)) + self.rng.choice(list(_VOWELS))
                       for _ in range(syl))

    def _ok(self, forms) -> bool:
        vocab = self.vocab | set(forms)
        glue = vocab | self.letters
        for w in forms:
            if w in self.vocab or any(edit_distance(w, o) < 3 for o in self.words):
                return False
            if _splits_into(w, glue) or _near_concat(w, self.vocab):
                return False
        # the new forms must not make an existing word splittable either
        return not any(_splits_into(v, glue) for v in self.vocab if len(v) > 3
                       and any(f in v for f in forms))

    def draw(self) -> str:
        for _ in range(10000):
            w = self._candidate()
            forms = (w, _variant(w))
            if self._ok(forms):
                self.words.append(w)
                self.vocab.update(forms)
                return w
        raise InputError("could not draw a new lexicon word")


# --- layout --------------------------------------------------------------------

def _tile_centre(lat: float, lng: float, precision: int = 5) -> tuple:
    gh = geohash_encode(lat, lng, precision)
    lat_lo, lat_hi, lng_lo, lng_hi = -90.0, 90.0, -180.0, 180.0
    even = True
    for ch in gh:
        bits = BASE32.index(ch)
        for k in range(4, -1, -1):
            bit = (bits >> k) & 1
            if even:
                mid = (lng_lo + lng_hi) / 2
                lng_lo, lng_hi = (mid, lng_hi) if bit else (lng_lo, mid)
            else:
                mid = (lat_lo + lat_hi) / 2
                lat_lo, lat_hi = (mid, lat_hi) if bit else (lat_lo, mid)
            even = not even
    return (lat_lo + lat_hi) / 2, (lng_lo + lng_hi) / 2


def _place_pois(spec: SynthSpec, rng) -> list:
    rows, cols = spec.grid
    half = spec.footprint_m / 2
    cw, ch = spec.footprint_m / cols, spec.footprint_m / rows
    corners = {(0, 0), (0, cols - 1), (rows - 1, 0), (rows - 1, cols - 1)}
    cells = [(r, c) for r in range(rows) for c in range(cols) if (r, c) not in corners]
    placed = []
    for _ in range(spec.n_pois):
        for _ in range(10000):
            r_m = float(rng.uniform(*spec.poi_radius_m))
            row, col = cells[int(rng.integers(len(cells)))]
            pad = r_m + spec.cell_margin_m
            x0, y0 = -half + col * cw, -half + row * ch
            if 2 * pad >= min(cw, ch):
                continue
            cx = float(rng.uniform(x0 + pad, x0 + cw - pad))
            cy = float(rng.uniform(y0 + pad, y0 + ch - pad))
            if all(math.hypot(cx - p.center[0], cy - p.center[1]) >= r_m + p.half_diag + spec.min_gap_m
                   for p in placed):
                placed.append(_Poi((cx, cy), r_m, (row, col)))
                break
        else:
            raise InputError(f"cannot pack {spec.n_pois} PoIs into the footprint")
    return placed


def _rectangle(poi: _Poi, aspect: float, theta: float) -> tuple:
    lv = 2 * poi.half_diag / math.sqrt(1 + aspect * aspect)
    lu = aspect * lv
    eu = np.array([math.cos(theta), math.sin(theta)])
    ev = np.array([-math.sin(theta), math.cos(theta)])
    c = np.array(poi.center)
    corners = np.array([c + su * lu / 2 * eu + sv * lv / 2 * ev
                        for su, sv in ((-1, -1), (1, -1), (1, 1), (-1, 1))])
    return corners, lu, lv, eu, ev


def _stratified(rng, n, lu, lv, eu, ev, center) -> np.ndarray:
    """n points, one per cell of a near-square grid over the rectangle."""
    nv = max(1, int(round(math.sqrt(n * lv / lu))))
    nu = int(math.ceil(n / nv))
    cells = np.sort(rng.choice(nu * nv, size=n, replace=False))
    du, dv = lu / nu, lv / nv
    out = []
    for k in cells:
        i, j = divmod(int(k), nv)
        u = -lu / 2 + (i + rng.uniform(0.01, 0.99)) * du
        v = -lv / 2 + (j + rng.uniform(0.01, 0.99)) * dv
        out.append(np.asarray(center) + u * eu + v * ev)
    return np.array(out)


def _leak_point(rng, shape: Polygon, center, dist_range) -> np.ndarray:
    phi = rng.uniform(0, 2 * math.pi)
    d = np.array([math.cos(phi), math.sin(phi)])
    # exit distance along the ray, by bisection on containment
    lo, hi = 0.0, 1.0
    while shape.contains(Point(*(np.asarray(center) + hi * d))):
        hi *= 2
    for _ in range(40):
        mid = (lo + hi) / 2
        if shape.contains(Point(*(np.asarray(center) + mid * d))):
            lo = mid
        else:
            hi = mid
    return np.asarray(center) + (hi + rng.uniform(*dist_range)) * d


def _jitter_inside(rng, p, sigma, inner: Polygon) -> np.ndarray:
    if sigma <= 0:
        return p
    for _ in range(1000):
        q = p + rng.normal(0.0, sigma, size=2)
        if inner.contains(Point(*q)):
            return q
    return p


def _text(rng, name: str, locality: str, city: str) -> str:
    template = TEMPLATES[int(rng.integers(len(TEMPLATES)))]
    flat = template.format(n1=int(rng.integers(1, 400)), n2=int(rng.integers(1, 20)),
                           l=str(rng.choice(list("abcdefgh"))))
    pincode = 600000 + int(rng.integers(1, 120))
    parts = [flat, name, locality, city, str(pincode)]
    return " ".join(p for p in parts if p)


# --- generator -------------------------------------------------------------------------

def generate_city(spec: SynthSpec = SynthSpec()) -> SynthCity:
    rng = np.random.default_rng(spec.seed)
    lat0, lng0 = _tile_centre(*spec.anchor)
    frame = LocalFrame(lat0, lng0)
    half = spec.footprint_m / 2

    base_vocab = set(GENERIC_WORDS) | {spec.city}
    for loc in spec.localities:
        base_vocab.update(loc.lower().split())
    lexicon = _Lexicon(rng, base_vocab)
    pois = _place_pois(spec, rng)

    def latlng(xy):
        lat, lng = frame.to_latlng(xy[0], xy[1])
        return round(float(lat), 7), round(float(lng), 7)

    addresses, gt = [], []
    counter = [0]

    def new_id():
        counter[0] += 1
        return f"a{counter[0]:06d}"

    outlier_slots = 0
    shapes = []
    buildings, roads = [], []
    for k, poi in enumerate(pois):
        words = [lexicon.draw() for _ in range(spec.name_words)]
        name = " ".join(words)
        variant_words = list(words)
        mid = len(words) // 2
        variant_words[mid] = _variant(words[mid])
        variant = " ".join(variant_words)
        locality = str(spec.localities[int(rng.integers(len(spec.localities)))])
        aspect = float(rng.uniform(*spec.poi_aspect))
        theta = float(rng.uniform(0, math.pi))
        corners, lu, lv, eu, ev = _rectangle(poi, aspect, theta)
        shape = Polygon(corners)
        inner = shape.buffer(-0.05)
        shapes.append(shape)
        n = int(rng.integers(spec.addresses_per_poi[0], spec.addresses_per_poi[1], endpoint=True))
        pts = _stratified(rng, n, lu, lv, eu, ev, poi.center)
        n_var = int(round(spec.spell_variant_rate * n))
        use_variant = np.zeros(n, dtype=bool)
        use_variant[rng.permutation(n)[:n_var]] = True
        members = []
        for i in range(n):
            if spec.outlier_rate > 0 and rng.random() < spec.outlier_rate:
                outlier_slots += 1
                continue
            if spec.leak_rate > 0 and rng.random() < spec.leak_rate:
                xy = _leak_point(rng, shape, poi.center, spec.leak_distance_m)
            else:
                xy = _jitter_inside(rng, pts[i], spec.gps_noise_sigma_m, inner)
            lat, lng = latlng(xy)
            aid = new_id()
            text = _text(rng, variant if use_variant[i] else name, locality, spec.city)
            addresses.append(AddressRecord(aid, lat, lng, raw_text=text, city=spec.city))
            members.append(aid)
        ring = [latlng(c) for c in corners]
        ring.append(ring[0])
        gt.append(PoiPolygon(poi_id=f"gt{k:03d}", ring=ring, names=[name],
                             member_count=len(members), member_ids=tuple(members)))
        roads.append(make_road(f"loop{k:03d}", ring, "service"))
        b = _building(corners, lu, lv, spec.building_margin_m)
        if b is not None:
            bring = [latlng(c) for c in b]
            bring.append(bring[0])
            buildings.append((f"bldg{k:03d}", tuple(bring)))

    avoid = [s.buffer(spec.outlier_clearance_m) for s in shapes]
    for _ in range(outlier_slots):
        for _ in range(10000):
            xy = rng.uniform(-half, half, size=2)
            if not any(a.contains(Point(*xy)) for a in avoid):
                break
        words = [lexicon.draw() for _ in range(spec.name_words)]
        locality = str(spec.localities[int(rng.integers(len(spec.localities)))])
        lat, lng = latlng(xy)
        addresses.append(AddressRecord(new_id(), lat, lng, raw_text=_text(rng, " ".join(words), locality, spec.city),
                                       city=spec.city))

    for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
        lat, lng = latlng((sx * half, sy * half))
        addresses.append(AddressRecord(new_id(), lat, lng,
                                       raw_text=_text(rng, "", spec.localities[0], spec.city),
                                       city=spec.city))

    rows, cols = spec.grid
    reach = half + 50.0
    for c in range(1, cols):
        x = -half + c * spec.footprint_m / cols
        roads.append(make_road(f"avenue{c}", [latlng((x, -reach)), latlng((x, reach))], "primary"))
    for r in range(1, rows):
        y = -half + r * spec.footprint_m / rows
        roads.append(make_road(f"street{r}", [latlng((-reach, y)), latlng((reach, y))], "primary"))

    layer = OsmLayer(buildings=buildings, roads=roads)
    return SynthCity(addresses, gt, layer, {spec.city: list(spec.localities)})


def _building(corners, lu, lv, margin) -> np.ndarray:
    if min(lu, lv) <= 2 * margin + 2.0:
        return None
    c = corners.mean(axis=0)
    su = (lu / 2 - margin) / (lu / 2)
    sv = (lv / 2 - margin) / (lv / 2)
    eu = (corners[1] - corners[0]) / lu
    ev = (corners[3] - corners[0]) / lv
    return np.array([c + (p - c) @ eu * su * eu + (p - c) @ ev * sv * ev for p in corners])


# --- writers ------------------------------------------------------------------------------

def write_addresses_csv(addresses, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["address_id", "lat", "lng", "text", "city"])
        for a in addresses:
            w.writerow([a.address_id, f"{a.lat:.7f}", f"{a.lng:.7f}", a.raw_text, a.city])


def _coords(ring) -> list:
    return [[round(lng, 9), round(lat, 9)] for lat, lng in ring]


def write_osm_geojson(layer: OsmLayer, path) -> None:
    feats = []
    for bid, ring in layer.buildings:
        feats.append({"type": "Feature", "id": bid, "properties": {"building": "yes"},
                      "geometry": {"type": "Polygon", "coordinates": [_coords(ring)]}})
    for r in layer.roads:
        feats.append({"type": "Feature", "id": r.road_id, "properties": {"highway": r.highway},
                      "geometry": {"type": "LineString", "coordinates": _coords(r.coords)}})
    Path(path).write_text(json.dumps({"type": "FeatureCollection", "features": feats},
                                     sort_keys=True) + "\n", encoding="utf-8")


def write_city(city: SynthCity, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"addresses": out / "addresses.csv", "osm": out / "osm.geojson", "gt": out / "gt.geojson"}
    write_addresses_csv(city.addresses, paths["addresses"])
    write_osm_geojson(city.osm_layer, paths["osm"])
    emit_geojson(city.gt_polygons, paths["gt"])
    for name, locs in city.localities.items():
        p = out / f"{name}.localities.txt"
        p.write_text("".join(f"{x}\n" for x in locs), encoding="utf-8")
        paths[f"localities:{name}"] = p
    return paths
