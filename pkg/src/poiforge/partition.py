"""Geohash tiling and the per-tile grid of geographical bins."""
from __future__ import annotations

from bisect import bisect_right
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .model import InputError, check_coordinates

BASE32 = "0123456789bcdefghjkmnpqrstuvwxyz"


def geohash_encode(lat: float, lng: float, precision: int = 5) -> str:
    if precision < 1:
        raise ValueError("precision must be >= 1")
    check_coordinates(lat, lng)
    lat_lo, lat_hi = -90.0, 90.0
    lng_lo, lng_hi = -180.0, 180.0
    chars = []
    bits = 0
    nbits = 0
    even = True  # longitude bit first
    while len(chars) < precision:
        if even:
            mid = (lng_lo + lng_hi) / 2
            if lng >= mid:
                bits = (bits << 1) | 1
                lng_lo = mid
            else:
                bits <<= 1
                lng_hi = mid
        else:
            mid = (lat_lo + lat_hi) / 2
            if lat >= mid:
                bits = (bits << 1) | 1
                lat_lo = mid
            else:
                bits <<= 1
                lat_hi = mid
        even = not even
        nbits += 1
        if nbits == 5:
            chars.append(BASE32[bits])
            bits = nbits = 0
    return "".join(chars)


@dataclass
class GeoBin:
    geohash: str
    row: int
    col: int
    bounds: tuple  # (lat_min, lat_max, lng_min, lng_max)
    member_ids: list
    norm: tuple = (0.0, 0.0, 0.0, 0.0)  # (lat_mean, lat_std, lng_mean, lng_std)

    @property
    def key(self) -> str:
        return f"{self.geohash}:{self.row}:{self.col}"


def _edges(lo: float, hi: float, n: int) -> list:
    step = (hi - lo) / n
    edges = [lo + k * step for k in range(n)]
    edges.append(hi)
    return edges


def _cell(edges: list, value: float) -> int:
    # closed on the lower edge; the top edge belongs to the last cell
    if edges[-1] == edges[0]:
        return 0
    return min(max(bisect_right(edges, value) - 1, 0), len(edges) - 2)


def make_bins(addresses, grid=(5, 5), precision: int = 5, min_members: int = 10) -> list:
    """Group addresses by geohash tile, then into a rows x cols grid spanning
    the members' extent within each tile. Small bins are dropped.

    Bins come back sorted by (geohash, row, col); member ids are sorted.
    """
    rows, cols = grid
    tiles = defaultdict(list)
    for a in addresses:
        tiles[geohash_encode(a.lat, a.lng, precision)].append(a)
    bins = []
    for gh in sorted(tiles):
        members = tiles[gh]
        lats = [a.lat for a in members]
        lngs = [a.lng for a in members]
        lat_edges = _edges(min(lats), max(lats), rows)
        lng_edges = _edges(min(lngs), max(lngs), cols)
        cells = defaultdict(list)
        for a in members:
            cells[(_cell(lat_edges, a.lat), _cell(lng_edges, a.lng))].append(a)
        for (r, c) in sorted(cells):
            group = sorted(cells[(r, c)], key=lambda a: a.address_id)
            if len(group) < min_members:
                continue
            b = GeoBin(
                geohash=gh, row=r, col=c,
                bounds=(lat_edges[r], lat_edges[r + 1], lng_edges[c], lng_edges[c + 1]),
                member_ids=[a.address_id for a in group],
            )
            b.norm = _moments([a.lat for a in group], [a.lng for a in group])
            bins.append(b)
    return bins


def _moments(lats, lngs) -> tuple:
    lat = np.asarray(lats, dtype=float)
    lng = np.asarray(lngs, dtype=float)
    return float(lat.mean()), float(lat.std()), float(lng.mean()), float(lng.std())


def normalize_locations(bin: GeoBin, locations) -> np.ndarray:
    """Standardise latitudes and longitudes independently (population std);
    an axis without spread maps to zeros."""
    loc = np.asarray(locations, dtype=float).reshape(-1, 2)
    if len(loc) == 0:
        raise InputError(f"bin {bin.key} has no locations to normalise")
    lat_mean, lat_std, lng_mean, lng_std = _moments(loc[:, 0], loc[:, 1])
    out = np.zeros_like(loc)
    if lat_std > 0:
        out[:, 0] = (loc[:, 0] - lat_mean) / lat_std
    if lng_std > 0:
        out[:, 1] = (loc[:, 1] - lng_mean) / lng_std
    return out
