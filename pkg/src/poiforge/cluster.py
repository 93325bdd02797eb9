"""Joint location/text clustering inside one geographical bin.

Features are ``(λ·lat_norm, λ·lng_norm, embedding)``; single-linkage
agglomeration builds a dendrogram and the maximal homogeneous nodes become
PoI candidates, which DBSCAN then splits and denoises in metre space.
"""
from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .embed import cosine_similarity
from .geometry import LocalFrame
from .model import InputError, PipelineConfig
from .partition import GeoBin, normalize_locations

CLUSTER_STAGES = ("homogeneous", "dbscan_refined", "name_merged")


@dataclass
class CandidateCluster:
    member_ids: tuple
    locations: np.ndarray
    embeddings: Optional[np.ndarray] = None
    stage: str = "homogeneous"
    names: list = field(default_factory=list)

    def __post_init__(self):
        self.member_ids = tuple(self.member_ids)
        self.locations = np.asarray(self.locations, dtype=float).reshape(-1, 2)
        if self.embeddings is not None:
            self.embeddings = np.asarray(self.embeddings, dtype=float)
        if self.stage not in CLUSTER_STAGES:
            raise ValueError(f"unknown cluster stage {self.stage!r}")

    def __len__(self):
        return len(self.member_ids)

    @property
    def median_centroid(self) -> np.ndarray:
        return np.median(self.embeddings, axis=0)

    @property
    def location_centroid(self) -> tuple:
        lat, lng = self.locations.mean(axis=0)
        return float(lat), float(lng)

    def subset(self, idx, stage: str) -> "CandidateCluster":
        idx = list(idx)
        return CandidateCluster(
            member_ids=[self.member_ids[i] for i in idx],
            locations=self.locations[idx],
            embeddings=None if self.embeddings is None else self.embeddings[idx],
            stage=stage,
        )

    @classmethod
    def combine(cls, parts, stage: str) -> "CandidateCluster":
        ids = [m for p in parts for m in p.member_ids]
        order = sorted(range(len(ids)), key=ids.__getitem__)
        embs = None
        if all(p.embeddings is not None for p in parts):
            embs = np.vstack([p.embeddings for p in parts])[order]
        return cls(member_ids=[ids[k] for k in order],
                   locations=np.vstack([p.locations for p in parts])[order],
                   embeddings=embs, stage=stage)


# --- features -----------------------------------------------------------------

def build_features(bin: GeoBin, store, lam: float, locations) -> tuple:
    """Feature matrix for a bin, rows ordered by address_id.

    ``store`` maps address_id -> embedding; ``locations`` maps
    address_id -> (lat, lng). Returns (ids, features).
    """
    ids = sorted(bin.member_ids)
    missing = [a for a in ids if a not in store]
    if missing:
        raise InputError(f"bin {bin.key}: no embedding for address_id {missing[0]!r}")
    loc = np.array([locations[a] for a in ids], dtype=float)
    emb = np.vstack([np.asarray(store[a], dtype=float) for a in ids])
    return ids, np.hstack([lam * normalize_locations(bin, loc), emb])


def pairwise_distances(x: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix, one row at a time (bounded memory)."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    d = np.empty((n, n))
    for i in range(n):
        diff = x - x[i]
        d[i] = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    return d


# --- single linkage -------------------------------------------------------------

@dataclass
class Dendrogram:
    """Leaves are nodes 0..n-1; merge k creates node n+k."""

    leaves: list
    merges: list  # (node_a, node_b, height)

    @property
    def n(self) -> int:
        return len(self.leaves)

    @property
    def root(self) -> int:
        return self.n + len(self.merges) - 1 if self.merges else 0

    def children(self, node: int) -> tuple:
        if node < self.n:
            return ()
        a, b, _ = self.merges[node - self.n]
        return a, b

    def height(self, node: int) -> float:
        return 0.0 if node < self.n else self.merges[node - self.n][2]

    def members(self, node: int) -> list:
        out, stack = [], [node]
        while stack:
            v = stack.pop()
            if v < self.n:
                out.append(v)
            else:
                a, b, _ = self.merges[v - self.n]
                stack.append(b)
                stack.append(a)
        return sorted(out)

    def cut(self, height: float) -> list:
        """Flat labels after applying every merge at or below `height`."""
        parent = list(range(self.n))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        rep = {}  # node -> a leaf inside it
        for k, (a, b, h) in enumerate(self.merges):
            ra = a if a < self.n else rep[a]
            rb = b if b < self.n else rep[b]
            rep[self.n + k] = ra
            if h <= height:
                parent[find(rb)] = find(ra)
        roots, labels = {}, []
        for i in range(self.n):
            labels.append(roots.setdefault(find(i), len(roots)))
        return labels


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))
        self.node = list(range(n))      # dendrogram node id of each root's cluster
        self.minleaf = list(range(n))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i


def single_linkage(features, leaves=None, distances: Optional[np.ndarray] = None) -> Dendrogram:
    """Single-linkage agglomeration under the Euclidean metric.

    Among equally close cluster pairs the one with the smallest
    (min leaf of a, min leaf of b) goes first. Heights come from a minimum
    spanning tree (Prim, O(n²)); tied heights are resolved against the full
    distance matrix so the merge order matches the naive algorithm.
    """
    d = pairwise_distances(features) if distances is None else distances
    n = len(d)
    if leaves is None:
        leaves = list(range(n))
    if n < 2:
        return Dendrogram(leaves=list(leaves), merges=[])

    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = d[0].copy()
    parent = np.zeros(n, dtype=int)
    mst = []
    for _ in range(n - 1):
        cand = np.where(in_tree, np.inf, best)
        j = int(np.argmin(cand))
        mst.append((float(best[j]), int(parent[j]), j))
        in_tree[j] = True
        closer = d[j] < best
        best[closer] = d[j][closer]
        parent[closer] = j
    mst.sort(key=lambda e: e[0])

    uf = _UnionFind(n)
    merges = []

    def merge(i, j, h):
        ri, rj = uf.find(i), uf.find(j)
        if uf.minleaf[ri] > uf.minleaf[rj]:
            ri, rj = rj, ri
        merges.append((uf.node[ri], uf.node[rj], h))
        uf.parent[rj] = ri
        uf.node[ri] = n + len(merges) - 1
        uf.minleaf[ri] = min(uf.minleaf[ri], uf.minleaf[rj])

    k = 0
    while k < len(mst):
        h = mst[k][0]
        end = k
        while end < len(mst) and mst[end][0] == h:
            end += 1
        if end - k == 1:
            merge(mst[k][1], mst[k][2], h)
        else:
            _merge_tied(d, h, uf, merge)
        k = end
    return Dendrogram(leaves=list(leaves), merges=merges)


def _merge_tied(d, h, uf, merge):
    # Cluster pairs at exactly distance h. The globally smallest
    # (minleaf, minleaf) pair always involves the lowest-minleaf cluster that
    # still has a neighbour, so each tied component grows from its lowest
    # cluster, absorbing neighbours in minleaf order.
    adj = {}
    for i, j in np.argwhere(np.triu(d == h, 1)):
        ri, rj = uf.find(int(i)), uf.find(int(j))
        if ri != rj:
            adj.setdefault(ri, set()).add(rj)
            adj.setdefault(rj, set()).add(ri)
    done = set()
    for start in sorted(adj, key=lambda r: uf.minleaf[r]):
        if start in done:
            continue
        done.add(start)
        heap = [(uf.minleaf[r], r) for r in adj[start]]
        heapq.heapify(heap)
        while heap:
            _, r = heapq.heappop(heap)
            if r in done:
                continue
            done.add(r)
            merge(start, r, h)
            for s in adj[r]:
                if s not in done:
                    heapq.heappush(heap, (uf.minleaf[s], s))


# --- homogeneity --------------------------------------------------------------------

def is_homogeneous(cluster: CandidateCluster, cfg: PipelineConfig) -> bool:
    emb = cluster.embeddings
    centroid = cluster.median_centroid
    sims = np.array([cosine_similarity(v, centroid) for v in emb])
    if cfg.cosine_reading == "similarity":
        ok = sims >= cfg.cosine_similarity_threshold
    else:  # literal "cosine distance of at least" reading
        ok = (1.0 - sims) >= cfg.cosine_similarity_threshold
    return int(ok.sum()) >= cfg.homogeneity_fraction * len(emb) - 1e-9


def extract_homogeneous(dendrogram: Dendrogram, make_cluster: Callable, cfg: PipelineConfig) -> list:
    """Maximal homogeneous nodes of at least min_cluster_size leaves.

    Walks down from the root; a qualifying node is emitted and its subtree
    is not explored further. ``make_cluster`` turns a sorted list of leaf
    indices into a CandidateCluster.
    """
    if dendrogram.n == 0:
        return []
    out = []
    stack = [dendrogram.root]
    while stack:
        node = stack.pop()
        leaves = dendrogram.members(node)
        if len(leaves) < cfg.min_cluster_size:
            continue
        cluster = make_cluster(leaves)
        if is_homogeneous(cluster, cfg):
            out.append(cluster)
            continue
        a, b = dendrogram.children(node)
        stack.append(b)
        stack.append(a)
    return out


# --- DBSCAN -------------------------------------------------------------------------

def dbscan_labels(xy, eps: float, min_neighbours: int, count_self: bool = False) -> np.ndarray:
    """Labels 0..k-1 per point, -1 for noise. Clusters are discovered
    scanning points in the given order; a border point reachable from two
    clusters stays with the first."""
    xy = np.asarray(xy, dtype=float)
    n = len(xy)
    labels = np.full(n, -1, dtype=int)
    if n == 0:
        return labels
    near = pairwise_distances(xy) <= eps
    counts = near.sum(axis=1) - (0 if count_self else 1)
    core = counts >= min_neighbours
    nbrs = [np.nonzero(row)[0] for row in near]
    c = 0
    for i in range(n):
        if labels[i] != -1 or not core[i]:
            continue
        labels[i] = c
        queue = deque([i])
        while queue:
            p = queue.popleft()
            for q in nbrs[p]:
                if labels[q] == -1:
                    labels[q] = c
                    if core[q]:
                        queue.append(q)
        c += 1
    return labels


def dbscan_refine(cluster: CandidateCluster, cfg: PipelineConfig) -> list:
    order = sorted(range(len(cluster)), key=lambda i: cluster.member_ids[i])
    ordered = cluster.subset(order, cluster.stage)
    frame = LocalFrame(*ordered.location_centroid)
    labels = dbscan_labels(frame.project(ordered.locations), cfg.dbscan_eps_m,
                           cfg.dbscan_min_neighbours, cfg.dbscan_count_self)
    out = []
    for lab in range(labels.max() + 1 if len(labels) else 0):
        idx = np.nonzero(labels == lab)[0]
        out.append(ordered.subset(idx, "dbscan_refined"))
    return out
