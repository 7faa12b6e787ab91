"""Diversity-preserving submission selection by k-means clustering."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cmetrics import FeatureVector, feature_vector
from .errors import DimensionMismatch


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray
    dropped: tuple[bool, ...]


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray  # (k, d); rows of empty clusters are NaN
    assignments: np.ndarray  # (n,)
    inertia: float
    iterations: int
    seed: int
    inertia_history: list[float] = field(default_factory=list)

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == cluster)


@dataclass(frozen=True)
class Representative:
    cluster_index: int
    member_index: int
    distance: float


def _as_matrix(vectors) -> np.ndarray:
    rows = [v.as_array() if isinstance(v, FeatureVector) else np.asarray(v, dtype=float) for v in vectors]
    if not rows:
        raise DimensionMismatch("no vectors given")
    dims = {np.atleast_1d(r).shape for r in rows}
    if len(dims) != 1:
        raise DimensionMismatch(f"vectors have differing shapes {sorted(dims)}")
    return np.vstack([np.atleast_1d(r) for r in rows])


def zscore_normalize(vectors) -> tuple[list[FeatureVector], NormStats]:
    """Global z-score with the population standard deviation.

    Dimensions with zero spread map to 0 and are marked dropped.
    """
    X = _as_matrix(vectors)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    # a subnormal spread can still give std == 0
    dropped = (np.ptp(X, axis=0) == 0) | (std == 0)
    safe = np.where(dropped, 1.0, std)
    Z = np.where(dropped, 0.0, (X - mean) / safe)
    schema = vectors[0].schema_id if isinstance(vectors[0], FeatureVector) else "raw"
    norm = tuple((float(m), 0.0 if d else float(s)) for m, s, d in zip(mean, std, dropped))
    out = [FeatureVector(tuple(float(v) for v in row), schema, norm) for row in Z]
    return out, NormStats(mean, np.where(dropped, 0.0, std), tuple(bool(d) for d in dropped))


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def _kmeanspp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    centers = [X[rng.integers(n)]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            break
        idx = rng.choice(n, p=d2 / total)
        centers.append(X[idx])
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def _lloyd(X: np.ndarray, C: np.ndarray, max_iter: int):
    history = []
    assign = None
    it = 0
    for it in range(1, max_iter + 1):
        D = _sq_dists(X, C)
        new = D.argmin(axis=1)
        history.append(float(D[np.arange(len(X)), new].sum()))
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        C = np.array([X[assign == j].mean(axis=0) if np.any(assign == j) else C[j] for j in range(len(C))])
    D = _sq_dists(X, C)
    inertia = float(D[np.arange(len(X)), assign].sum())
    history.append(inertia)
    return C, assign, inertia, it, history


def kmeans(vectors, k: int = 3, seed: int = 0, max_iter: int = 100, n_init: int = 50) -> ClusterModel:
    """k-means with k-means++ seeding; best of ``n_init`` seeded restarts.

    When there are no more distinct points than ``k`` every distinct point is
    its own centroid and the surplus clusters stay empty (NaN centroids).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    X = _as_matrix(vectors)
    n, d = X.shape
    uniq, first_idx, inverse = np.unique(X, axis=0, return_index=True, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    if len(uniq) <= k:
        order = np.argsort(first_idx)  # cluster ids follow first appearance
        rank = np.empty_like(order)
        rank[order] = np.arange(len(order))
        C = np.full((k, d), np.nan)
        C[: len(uniq)] = uniq[order]
        return ClusterModel(k, C, rank[inverse], 0.0, 0, seed, [0.0])

    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        C0 = _kmeanspp(X, k, rng)
        C, assign, inertia, it, hist = _lloyd(X, C0, max_iter)
        if best is None or inertia < best[2] - 1e-12:
            best = (C, assign, inertia, it, hist)
    C, assign, inertia, it, hist = best
    full = np.full((k, d), np.nan)
    for j in range(len(C)):
        if np.any(assign == j):
            full[j] = X[assign == j].mean(axis=0)
    return ClusterModel(k, full, assign, inertia, it, seed, hist)


def pick_representatives(model: ClusterModel, vectors) -> list[Representative]:
    X = _as_matrix(vectors)
    reps = []
    for j in range(model.k):
        members = model.members(j)
        if len(members) == 0:
            continue
        dist = np.sqrt(((X[members] - model.centroids[j]) ** 2).sum(axis=1))
        # distances equal up to rounding count as ties; lowest member index wins
        tied = np.isclose(dist, dist.min(), rtol=1e-9, atol=1e-12)
        best = int(np.flatnonzero(tied)[0])
        reps.append(Representative(j, int(members[best]), float(dist[best])))
    return reps


def select_submissions(
    submissions: Sequence, k: int = 3, seed: int = 0, schema_id: str = "static13+dyn4"
) -> list:
    """Pick at most ``k`` representative submissions (records carrying metrics)."""
    if not submissions:
        return []
    if len(submissions) <= k:
        return list(submissions)
    vecs = [feature_vector(r.static_metrics, r.dynamic_metrics, schema_id) for r in submissions]
    normed, _ = zscore_normalize(vecs)
    model = kmeans(normed, k=k, seed=seed)
    reps = pick_representatives(model, normed)
    chosen = sorted(r.member_index for r in reps)
    return [submissions[i] for i in chosen]
