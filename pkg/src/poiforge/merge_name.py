"""Merging of homonymous clusters.

A cluster has high-confidence names when some word n-gram is present in
enough of its addresses. Clusters whose names agree up to a small edit
distance and whose centroids are close are joined through a graph whose
connected components become single clusters.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .cluster import CandidateCluster
from .geometry import connected_components, distance_m
from .model import PipelineConfig
from .preprocess import edit_distance


@dataclass(frozen=True)
class NameCandidate:
    ngram: str
    support: float

    @property
    def n(self) -> int:
        return len(self.ngram.split())


@dataclass
class HomonymGraph:
    nodes: list
    edges: list = field(default_factory=list)  # (i, j, (name_a, name_b, edit, dist_m))


def ngrams(tokens, n: int) -> list:
    return [" ".join(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def document_ngrams(text: str, sizes=(2, 3, 4)) -> set:
    tokens = text.split()
    out = set()
    for n in sizes:
        out.update(ngrams(tokens, n))
    return out


def extract_high_confidence_names(cluster: CandidateCluster, mined_texts: dict,
                                  cfg: PipelineConfig = PipelineConfig()) -> list:
    total = len(cluster)
    if total == 0:
        return []
    df = {}
    for aid in cluster.member_ids:
        for g in document_ngrams(mined_texts.get(aid, ""), cfg.ngram_sizes):
            df[g] = df.get(g, 0) + 1
    names = [NameCandidate(g, c / total) for g, c in df.items()
             if c >= cfg.hcn_support * total - 1e-9]
    names.sort(key=lambda nc: (-nc.support, -nc.n, nc.ngram))
    return names


def classify_clusters(clusters, mined_texts: dict, cfg: PipelineConfig = PipelineConfig()) -> tuple:
    """Split clusters into (HCNC, LCNC); HCNCs get their names attached."""
    hcnc, lcnc = [], []
    for c in clusters:
        names = extract_high_confidence_names(c, mined_texts, cfg)
        c.names = [nc.ngram for nc in names]
        (hcnc if names else lcnc).append(c)
    return hcnc, lcnc


def build_homonym_graph(hcncs, cfg: PipelineConfig = PipelineConfig()) -> HomonymGraph:
    graph = HomonymGraph(nodes=list(range(len(hcncs))))
    centroids = [c.location_centroid for c in hcncs]
    for i in range(len(hcncs)):
        for j in range(i + 1, len(hcncs)):
            dist = distance_m(centroids[i], centroids[j])
            if not dist < cfg.hcn_centroid_dist_m:
                continue
            witness = _closest_names(hcncs[i].names, hcncs[j].names, cfg.hcn_edit_distance)
            if witness is not None:
                graph.edges.append((i, j, (witness[1], witness[2], witness[0], dist)))
    return graph


def _closest_names(names_a, names_b, max_edit: int):
    best = None
    for a in names_a:
        for b in names_b:
            if abs(len(a) - len(b)) > max_edit:
                continue
            d = edit_distance(a, b)
            if d <= max_edit and (best is None or (d, a, b) < best):
                best = (d, a, b)
    return best


def merge_components(graph: HomonymGraph, hcncs, lcncs, mined_texts: dict,
                     cfg: PipelineConfig = PipelineConfig()) -> list:
    out = []
    comps = connected_components(len(hcncs), [(i, j) for i, j, _ in graph.edges])
    for comp in comps:
        if len(comp) == 1:
            out.append(hcncs[comp[0]])
            continue
        merged = CandidateCluster.combine([hcncs[i] for i in comp], "name_merged")
        merged.names = [nc.ngram for nc in extract_high_confidence_names(merged, mined_texts, cfg)]
        out.append(merged)
    out.extend(lcncs)
    out.sort(key=lambda c: c.member_ids[0] if c.member_ids else "")
    return out


def merge_homonymous(clusters, mined_texts: dict, cfg: PipelineConfig = PipelineConfig()) -> list:
    hcnc, lcnc = classify_clusters(clusters, mined_texts, cfg)
    return merge_components(build_homonym_graph(hcnc, cfg), hcnc, lcnc, mined_texts, cfg)
