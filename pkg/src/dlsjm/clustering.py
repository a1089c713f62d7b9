"""Spectral clustering of persons or items from posterior distance matrices.

Similarities are ``exp(-d)``, sparsified to a symmetric k-nearest-neighbour
graph and clustered Ng-Jordan-Weiss style: leading eigenvectors of the
normalized affinity, rows scaled to unit length, then k-means.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse.csgraph import connected_components
from sklearn.cluster import KMeans

__all__ = [
    "DisconnectedGraphError",
    "SimilarityGraph",
    "ClusterAssignment",
    "ClusterMatch",
    "build_similarity",
    "spectral_embedding",
    "spectral_cluster",
    "choose_k_neighbors",
    "default_k_candidates",
    "match_clusters",
    "confusion_matrix",
]

logger = logging.getLogger(__name__)


class DisconnectedGraphError(ValueError):
    pass


@dataclass
class SimilarityGraph:
    similarity: np.ndarray  # exp(-d), full
    mask: np.ndarray  # symmetric kNN edges, False on the diagonal
    k_neighbors: int

    @property
    def affinity(self) -> np.ndarray:
        return np.where(self.mask, self.similarity, 0.0)

    @property
    def m(self) -> int:
        return self.similarity.shape[0]

    def is_connected(self) -> bool:
        n_comp, _ = connected_components(self.mask, directed=False)
        return n_comp == 1


@dataclass
class ClusterAssignment:
    labels: np.ndarray
    n_clusters: int
    explained_variance: float = float("nan")
    k_neighbors: Optional[int] = None


@dataclass
class ClusterMatch:
    mapping: dict[int, int]  # label in a -> label in b
    agreement: float


def _check_distances(dist: np.ndarray) -> np.ndarray:
    d = np.asarray(dist, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("distance matrix must be square")
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise ValueError("distances must be finite and non-negative")
    return d


def build_similarity(dist: np.ndarray, k_neighbors: int) -> SimilarityGraph:
    d = _check_distances(dist)
    m = d.shape[0]
    if not 1 <= k_neighbors < m:
        raise ValueError(f"k_neighbors must be in [1, {m - 1}], got {k_neighbors}")
    masked = d.copy()
    np.fill_diagonal(masked, np.inf)
    # stable sort: ties go to the lower index
    nearest = np.argsort(masked, axis=1, kind="stable")[:, :k_neighbors]
    mask = np.zeros((m, m), dtype=bool)
    mask[np.repeat(np.arange(m), k_neighbors), nearest.ravel()] = True
    mask |= mask.T
    np.fill_diagonal(mask, False)
    return SimilarityGraph(np.exp(-d), mask, k_neighbors)


def spectral_embedding(graph: SimilarityGraph, n_clusters: int) -> np.ndarray:
    """Row-normalized leading eigenvectors of ``D^-1/2 A D^-1/2``."""
    a = graph.affinity
    deg = a.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0))
    norm = inv_sqrt[:, None] * a * inv_sqrt[None, :]
    _, vecs = np.linalg.eigh(norm)
    emb = vecs[:, ::-1][:, :n_clusters]
    # eigenvector signs are arbitrary; fix them for reproducible output
    signs = np.sign(emb[np.argmax(np.abs(emb), axis=0), np.arange(n_clusters)])
    emb = emb * np.where(signs == 0, 1.0, signs)
    lengths = np.linalg.norm(emb, axis=1, keepdims=True)
    return emb / np.where(lengths > 0, lengths, 1.0)


def _canonical(labels: np.ndarray) -> np.ndarray:
    """Relabel so clusters are numbered by first appearance."""
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    remap = np.empty(order.size, dtype=np.int64)
    remap[np.unique(labels)[order]] = np.arange(order.size)
    return remap[labels]


def spectral_cluster(graph: SimilarityGraph, n_clusters: int, seed: int = 0,
                     expand_if_disconnected: bool = True, n_init: int = 50) -> ClusterAssignment:
    m = graph.m
    if not 2 <= n_clusters < m:
        raise ValueError(f"need 2 <= n_clusters < {m}, got {n_clusters}")
    if not graph.is_connected():
        if not expand_if_disconnected:
            raise DisconnectedGraphError(f"kNN graph with k={graph.k_neighbors} is disconnected")
        k = graph.k_neighbors
        dist = -np.log(graph.similarity)
        while not graph.is_connected() and k < m - 1:
            k += 1
            graph = build_similarity(dist, k)
        logger.info("kNN graph disconnected; raised k_neighbors to %d", k)
    emb = spectral_embedding(graph, n_clusters)
    km = KMeans(n_clusters=n_clusters, init="k-means++", n_init=n_init, random_state=seed).fit(emb)
    labels = _canonical(km.labels_)
    total = float(np.sum((emb - emb.mean(axis=0)) ** 2))
    explained = 1.0 - km.inertia_ / total if total > 0 else 1.0
    return ClusterAssignment(labels, int(labels.max()) + 1, float(np.clip(explained, 0.0, 1.0)),
                             graph.k_neighbors)


def default_k_candidates(m: int) -> list[int]:
    cands = {2, 5, 10, m // 10, m // 4, m // 2}
    return sorted(k for k in cands if 1 <= k < m)


def choose_k_neighbors(dist: np.ndarray, n_clusters: int, candidates: Optional[Iterable[int]] = None,
                       seed: int = 0) -> ClusterAssignment:
    """Cluster once per candidate ``k`` and keep the most explained variance (smaller ``k`` on ties)."""
    d = _check_distances(dist)
    cands = sorted(set(candidates if candidates is not None else default_k_candidates(d.shape[0])))
    if not cands:
        raise ValueError("no candidate k values")
    best: Optional[ClusterAssignment] = None
    for k in cands:
        result = spectral_cluster(build_similarity(d, k), n_clusters, seed)
        result.k_neighbors = k
        if best is None or result.explained_variance > best.explained_variance:
            best = result
    return best


def confusion_matrix(truth: Sequence[int], pred: Sequence[int], size: Optional[int] = None) -> np.ndarray:
    t = np.asarray(truth, dtype=int)
    p = np.asarray(pred, dtype=int)
    size = size or int(max(t.max(), p.max())) + 1
    out = np.zeros((size, size), dtype=np.int64)
    np.add.at(out, (t, p), 1)
    return out


def match_clusters(a, b) -> ClusterMatch:
    """Relabel ``a`` to agree with ``b`` as often as possible."""
    la = np.asarray(getattr(a, "labels", a), dtype=int)
    lb = np.asarray(getattr(b, "labels", b), dtype=int)
    if la.shape != lb.shape:
        raise ValueError("assignments have different lengths")
    size = int(max(la.max(), lb.max())) + 1
    counts = confusion_matrix(la, lb, size)
    if size <= 6:
        best_perm, best = None, -1
        for perm in itertools.permutations(range(size)):
            score = int(counts[np.arange(size), perm].sum())
            if score > best:
                best_perm, best = perm, score
        rows, cols = np.arange(size), np.asarray(best_perm)
    else:
        rows, cols = linear_sum_assignment(-counts)
    used = set(np.unique(la).tolist())
    mapping = {int(r): int(c) for r, c in zip(rows, cols) if r in used}
    agreement = float(counts[rows, cols].sum()) / la.size
    return ClusterMatch(mapping, agreement)
