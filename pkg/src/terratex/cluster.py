"""Embedding preprocessing and pseudo-label clustering.

Whitening is fitted on training embeddings only: center, project onto the
leading principal directions, scale each to unit variance, then l2-normalize.
K-means uses seeded k-means++ initialization and exact Lloyd iterations with
empty clusters repaired by splitting the largest cluster.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_SINGULAR_FLOOR = 1e-10
_MAX_ITER = 100


@dataclass(frozen=True)
class WhitenTransform:
    mean: np.ndarray        # (n_emb,)
    projection: np.ndarray  # (n_pca, n_emb), rows scaled to unit output variance
    n_pca: int


@dataclass
class ClusterState:
    centroids: np.ndarray    # (K, n_pca)
    assignments: np.ndarray  # (N,) cluster index per point
    inertia: float
    transform: WhitenTransform | None = None


def fit_whiten(embeddings: np.ndarray, n_pca: int = 256) -> WhitenTransform:
    """Fit the centering + whitening projection on training embeddings.

    Directions with singular value below 1e-10 of the largest are dropped,
    reducing the output dimension, so near-null noise is never amplified.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    n, dim = x.shape
    if n <= n_pca:
        raise ValueError(f"need more than n_pca={n_pca} samples to fit whitening, got {n}")
    mean = x.mean(axis=0)
    centered = x - mean
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    keep = min(n_pca, svals.size)
    svals = svals[:keep]
    vt = vt[:keep]
    if svals.size == 0 or svals[0] <= 0:
        return WhitenTransform(mean=mean, projection=np.zeros((0, dim)), n_pca=0)
    mask = svals >= _SINGULAR_FLOOR * svals[0]
    svals = svals[mask]
    vt = vt[mask]
    scale = np.sqrt(n - 1) / svals
    projection = vt * scale[:, None]
    return WhitenTransform(mean=mean, projection=projection, n_pca=projection.shape[0])


def apply_whiten(transform: WhitenTransform, embedding: np.ndarray) -> np.ndarray:
    """Project embeddings through the fitted transform and l2-normalize.

    Accepts a single vector or a matrix of rows; an exactly-zero projection
    stays the zero vector.
    """
    x = np.asarray(embedding, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    projected = (x - transform.mean) @ transform.projection.T
    norms = np.linalg.norm(projected, axis=1, keepdims=True)
    out = np.divide(projected, norms, out=np.zeros_like(projected), where=norms > 0)
    return out[0] if single else out


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=points.dtype)
    first = int(rng.integers(n))
    centroids[0] = points[first]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[i] = points[idx]
        d2 = np.minimum(d2, ((points - centroids[i]) ** 2).sum(axis=1))
    return centroids


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d2 = (
        (points**2).sum(axis=1, keepdims=True)
        - 2.0 * points @ centroids.T
        + (centroids**2).sum(axis=1)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)
    return d2


def kmeans(points: np.ndarray, k: int, seed: int = 0, restarts: int = 10) -> ClusterState:
    """Best of `restarts` Lloyd runs, deterministic given the seed.

    Each run is k-means++ seeded and iterates to an assignment fixpoint (at
    most 100 iterations); the run with the lowest inertia wins.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n < k:
        raise ValueError(f"cannot form {k} clusters from {n} points")
    rng = np.random.default_rng(seed)
    best: ClusterState | None = None
    for _ in range(max(1, restarts)):
        state = _lloyd_run(points, k, rng)
        if best is None or state.inertia < best.inertia:
            best = state
    return best


def _lloyd_run(points: np.ndarray, k: int, rng: np.random.Generator) -> ClusterState:
    """One Lloyd run. After each assignment step, every empty cluster takes
    over the farthest point of the currently largest cluster; inertia is
    asserted non-increasing across iterations."""
    n = points.shape[0]
    centroids = _kmeans_pp_init(points, k, rng)
    prev_assign = None
    prev_inertia = np.inf
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(_MAX_ITER):
        d2 = _sq_dists(points, centroids)
        assign = d2.argmin(axis=1)
        counts = np.bincount(assign, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            largest = int(counts.argmax())
            members = np.flatnonzero(assign == largest)
            far = members[d2[members, largest].argmax()]
            centroids[empty] = points[far]
            assign[far] = empty
            d2[far, empty] = 0.0
            counts[largest] -= 1
            counts[empty] += 1
        inertia = float(d2[np.arange(n), assign].sum())
        assert inertia <= prev_inertia + 1e-9 * (1.0 + inertia), "inertia increased"
        prev_inertia = inertia
        if prev_assign is not None and np.array_equal(assign, prev_assign):
            break
        prev_assign = assign.copy()
        for j in range(k):
            centroids[j] = points[assign == j].mean(axis=0)
    return ClusterState(centroids=centroids, assignments=assign, inertia=prev_inertia)


def _canonical_partition(labels: np.ndarray) -> np.ndarray:
    _, canon = np.unique(labels, return_inverse=True)
    first_seen: dict[int, int] = {}
    out = np.empty_like(canon)
    for i, v in enumerate(canon):
        if v not in first_seen:
            first_seen[v] = len(first_seen)
        out[i] = first_seen[v]
    return out


def nmi(assign_a, assign_b) -> float:
    """Normalized mutual information between two labelings, in [0, 1].

    Uses natural-log entropies and the geometric-mean normalization. When
    either labeling has zero entropy the value is 1.0 if the two labelings
    induce the same set partition, else 0.0.
    """
    a = np.asarray(assign_a)
    b = np.asarray(assign_b)
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise ValueError("assignments must be equal-length non-empty 1-d arrays")
    n = a.size
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.float64)
    np.add.at(table, (ai, bi), 1.0)
    pa = table.sum(axis=1) / n
    pb = table.sum(axis=0) / n
    ha = float(-(pa * np.log(pa, where=pa > 0, out=np.zeros_like(pa))).sum())
    hb = float(-(pb * np.log(pb, where=pb > 0, out=np.zeros_like(pb))).sum())
    if ha <= 0.0 or hb <= 0.0:
        same = np.array_equal(_canonical_partition(a), _canonical_partition(b))
        return 1.0 if same else 0.0
    pab = table / n
    outer = pa[:, None] * pb[None, :]
    nz = pab > 0
    info = float((pab[nz] * np.log(pab[nz] / outer[nz])).sum())
    return float(min(1.0, max(0.0, info / np.sqrt(ha * hb))))
