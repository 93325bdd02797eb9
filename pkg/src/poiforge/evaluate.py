"""Area precision / recall of mined polygons against ground truth."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import overlap_stats


def area_precision(alg, gt) -> float:
    a, _, inter = overlap_stats(alg, gt)
    if inter <= 0:
        raise ValueError("polygons do not overlap")
    return min(inter / a, 1.0)


def area_recall(alg, gt) -> float:
    _, g, inter = overlap_stats(alg, gt)
    if inter <= 0:
        raise ValueError("polygons do not overlap")
    return min(inter / g, 1.0)


def f_score(p: float, r: float) -> float:
    if not (p > 0 and r > 0):
        raise ValueError(f"f_score needs positive precision and recall, got {p}, {r}")
    return 2.0 / (1.0 / p + 1.0 / r)


def lower_median(values) -> float:
    if not values:
        return float("nan")
    s = sorted(values)
    return s[(len(s) - 1) // 2]


@dataclass
class PairScore:
    alg_id: str
    gt_id: str
    precision: float
    recall: float
    f_score: float


@dataclass
class MetricsReport:
    pairs: list = field(default_factory=list)
    median_precision: float = float("nan")
    median_recall: float = float("nan")
    median_f: float = float("nan")
    cdf_precision: list = field(default_factory=list)
    cdf_recall: list = field(default_factory=list)
    counts: dict = field(default_factory=dict)

    @property
    def matched(self) -> bool:
        return bool(self.pairs)

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("median_precision", "median_recall", "median_f"):
            if out[key] != out[key]:  # NaN is not valid JSON
                out[key] = None
        return out


def _bbox(ring) -> np.ndarray:
    arr = np.asarray(ring, dtype=float)
    return np.concatenate([arr.min(axis=0), arr.max(axis=0)])


def evaluate(alg_polys, gt_polys) -> MetricsReport:
    """Score every (algorithmic, ground truth) pair sharing positive area."""
    gt_boxes = np.array([_bbox(g.ring) for g in gt_polys]).reshape(-1, 4)
    pairs = []
    matched_gt = set()
    for a in alg_polys:
        lo_lat, lo_lng, hi_lat, hi_lng = _bbox(a.ring)
        near = np.nonzero((gt_boxes[:, 0] <= hi_lat) & (gt_boxes[:, 2] >= lo_lat)
                          & (gt_boxes[:, 1] <= hi_lng) & (gt_boxes[:, 3] >= lo_lng))[0]
        for k in near:
            g = gt_polys[k]
            area_a, area_g, inter = overlap_stats(a, g)
            if inter <= 0:
                continue
            p, r = min(inter / area_a, 1.0), min(inter / area_g, 1.0)
            pairs.append(PairScore(a.poi_id, g.poi_id, p, r, f_score(p, r)))
            matched_gt.add(int(k))
    prec = sorted(s.precision for s in pairs)
    rec = sorted(s.recall for s in pairs)
    return MetricsReport(
        pairs=pairs,
        median_precision=lower_median(prec),
        median_recall=lower_median(rec),
        median_f=lower_median([s.f_score for s in pairs]),
        cdf_precision=prec,
        cdf_recall=rec,
        counts={"n_alg": len(alg_polys), "n_gt": len(gt_polys),
                "n_pairs": len(pairs), "n_gt_matched": len(matched_gt)},
    )


def write_report(report: MetricsReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_pairs_csv(report: MetricsReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alg_id", "gt_id", "precision", "recall", "f_score"])
        for s in report.pairs:
            w.writerow([s.alg_id, s.gt_id, f"{s.precision:.9f}", f"{s.recall:.9f}", f"{s.f_score:.9f}"])
