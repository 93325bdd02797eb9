"""Location-only baseline: cluster points by distance alone, then name a
cluster when one n-gram is both frequent inside it (term purity) and rare
in the neighbouring clusters (TF-IDF)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .cluster import pairwise_distances, single_linkage
from .geometry import LocalFrame, convex_hull, merge_polygon_group
from .merge_name import document_ngrams
from .model import PipelineConfig
from .partition import GeoBin


@dataclass
class BaselineCluster:
    member_ids: tuple
    locations: np.ndarray
    best_ngram: Optional[str] = None
    tp: float = 0.0
    tfidf: float = 0.0


def contains_ngram(text: str, ngram: str) -> bool:
    return f" {ngram} " in f" {' '.join(text.split())} "


def term_purity(ngram: str, cluster_texts) -> float:
    texts = list(cluster_texts)
    if not texts:
        raise ValueError("term purity of an empty cluster")
    return sum(contains_ngram(t, ngram) for t in texts) / len(texts)


def tf_idf(ngram: str, cluster_texts, all_clusters) -> float:
    """TF is term purity; IDF = ln(N / df) over clusters, normalised by ln N
    so that the score lies in [0, 1]. With a single cluster the score is TF."""
    all_clusters = list(all_clusters)
    if not all_clusters:
        raise ValueError("tf_idf needs at least one cluster")
    tf = term_purity(ngram, cluster_texts)
    n = len(all_clusters)
    if n == 1:
        return tf
    df = sum(any(contains_ngram(t, ngram) for t in texts) for texts in all_clusters)
    if df == 0:
        return 0.0
    return float(min(max(tf * math.log(n / df) / math.log(n), 0.0), 1.0))


def location_clusters(ids, locations, cut_m: float) -> list:
    """Single-linkage groups of points closer than cut_m (chained)."""
    if len(ids) == 0:
        return []
    xy = LocalFrame.around(locations).project(locations)
    labels = single_linkage(xy, distances=pairwise_distances(xy)).cut(cut_m)
    groups = {}
    for i, lab in enumerate(labels):
        groups.setdefault(lab, []).append(i)
    return [groups[k] for k in sorted(groups)]


def _best_ngram(texts, all_texts, cfg: PipelineConfig):
    best = None
    grams = set()
    for t in texts:
        grams |= document_ngrams(t, cfg.ngram_sizes)
    for g in grams:
        tp = term_purity(g, texts)
        if tp < cfg.baseline_tp:
            continue
        score = tf_idf(g, texts, all_texts)
        if score < cfg.baseline_tfidf:
            continue
        key = (tp, score, len(g.split()))
        if best is None or key > best[0] or (key == best[0] and g < best[1]):
            best = (key, g)
    return None if best is None else (best[1], best[0][0], best[0][1])


def baseline_clusters(bin: GeoBin, records: dict, cfg: PipelineConfig = PipelineConfig()) -> list:
    ids = sorted(bin.member_ids)
    loc = np.array([(records[a].lat, records[a].lng) for a in ids], dtype=float)
    groups = location_clusters(ids, loc, cfg.baseline_cut_m)
    all_texts = [[records[ids[i]].mined_text for i in g] for g in groups]
    out = []
    for g, texts in zip(groups, all_texts):
        if len(g) < cfg.baseline_min_points:
            continue
        found = _best_ngram(texts, all_texts, cfg)
        if found is None:
            continue
        name, tp, score = found
        out.append(BaselineCluster(tuple(ids[i] for i in g), loc[g], name, tp, score))
    return out


def mummidi_krumm(bin: GeoBin, records: dict, cfg: PipelineConfig = PipelineConfig()) -> list:
    """Baseline polygons for one bin; same-name polygons are merged by hull."""
    polys = []
    for k, c in enumerate(baseline_clusters(bin, records, cfg)):
        p = convex_hull(c.locations, poi_id=f"{bin.key}:b{k}", names=[c.best_ngram],
                        member_count=len(c.member_ids), stage="baseline",
                        member_ids=c.member_ids)
        if p is not None:
            polys.append(p)
    by_name = {}
    for p in polys:
        by_name.setdefault(p.names[0], []).append(p)
    out = []
    for name in sorted(by_name, key=lambda n: by_name[n][0].poi_id):
        group = by_name[name]
        out.append(group[0] if len(group) == 1 else merge_polygon_group(group, stage="baseline"))
    return out
