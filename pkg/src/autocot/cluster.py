"""k-means question clustering, per-cluster distance sorting, similarity
retrieval, and 2-D PCA projection for plot emission.

Clustering runs Lloyd's iterations from a seeded greedy k-means++
initialization. On L2-normalized vectors, squared Euclidean distance is
2 - 2*cosine, so the Euclidean partition is consistent with the cosine
similarity used for retrieval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateData, TooFewPoints, ZeroVector

DEFAULT_SEED = 42
DEFAULT_MAX_ITER = 100
DEFAULT_TOL = 1e-6

_PCA_ITERATIONS = 200
_PCA_TOL = 1e-9


@dataclass(frozen=True)
class ClusterModel:
    """Converged clustering: immutable and shareable across threads.

    `assignment[i]` is the cluster of vector i, `distance[i]` its Euclidean
    distance to that cluster's centroid.
    """

    k: int
    centroids: np.ndarray
    assignment: np.ndarray
    distance: np.ndarray
    seed: int
    n_iter: int
    objective_history: tuple[float, ...]

    def members(self, cluster: int) -> np.ndarray:
        if not 0 <= cluster < self.k:
            raise IndexError(f"cluster {cluster} out of range 0..{self.k - 1}")
        return np.flatnonzero(self.assignment == cluster)


def _sq_dists_to(vectors: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # (n, k) matrix of squared Euclidean distances
    diff = vectors[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _kmeans_pp_init(vectors: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy k-means++ seeding: sample a handful of D^2-weighted candidates
    per step and keep the one that minimizes the resulting potential."""
    n = vectors.shape[0]
    n_trials = 2 + int(math.log(k)) if k > 1 else 1
    chosen = [int(rng.integers(n))]
    closest_sq = np.sum((vectors - vectors[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = float(closest_sq.sum())
        if total <= 0.0:
            # all remaining points coincide with picked centroids
            remaining = [i for i in range(n) if i not in chosen]
            chosen.append(remaining[0])
            continue
        probs = closest_sq / total
        candidates = rng.choice(n, size=n_trials, p=probs)
        best_idx, best_potential = -1, np.inf
        for cand in candidates:
            cand = int(cand)
            potential = float(
                np.minimum(closest_sq, np.sum((vectors - vectors[cand]) ** 2, axis=1)).sum()
            )
            if potential < best_potential or (
                potential == best_potential and cand < best_idx
            ):
                best_idx, best_potential = cand, potential
        chosen.append(best_idx)
        closest_sq = np.minimum(
            closest_sq, np.sum((vectors - vectors[best_idx]) ** 2, axis=1)
        )
    return vectors[chosen].copy()


def _repair_empty(
    vectors: np.ndarray,
    centroids: np.ndarray,
    assignment: np.ndarray,
    sq_dists: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Reseed each empty cluster to the point currently farthest from its own
    centroid. Deterministic; strictly decreases the objective."""
    k = centroids.shape[0]
    own_sq = sq_dists[np.arange(len(assignment)), assignment].copy()
    for cluster in range(k):
        if np.any(assignment == cluster):
            continue
        farthest = int(np.argmax(own_sq))
        centroids[cluster] = vectors[farthest]
        assignment[farthest] = cluster
        own_sq[farthest] = 0.0
    return centroids, assignment


def _lloyd(
    vectors: np.ndarray,
    k: int,
    rng: np.random.Generator,
    max_iter: int,
    tol: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int, tuple[float, ...]]:
    n = vectors.shape[0]
    centroids = _kmeans_pp_init(vectors, k, rng)

    history: list[float] = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        sq_dists = _sq_dists_to(vectors, centroids)
        assignment = np.argmin(sq_dists, axis=1)
        centroids, assignment = _repair_empty(vectors, centroids, assignment, sq_dists)
        sq_dists = _sq_dists_to(vectors, centroids)
        objective = float(sq_dists[np.arange(n), assignment].sum())
        if history and objective > history[-1] + 1e-9 * max(1.0, history[-1]):
            raise AssertionError(
                f"k-means objective increased: {history[-1]} -> {objective}"
            )
        history.append(objective)

        new_centroids = centroids.copy()
        for cluster in range(k):
            mask = assignment == cluster
            new_centroids[cluster] = vectors[mask].mean(axis=0)
        shift = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        if shift < tol:
            break

    # final assignment against the final centroids
    sq_dists = _sq_dists_to(vectors, centroids)
    assignment = np.argmin(sq_dists, axis=1)
    centroids, assignment = _repair_empty(vectors, centroids, assignment, sq_dists)
    sq_dists = _sq_dists_to(vectors, centroids)
    distance = np.sqrt(sq_dists[np.arange(n), assignment])
    return centroids, assignment, distance, n_iter, tuple(history)


def kmeans(
    vectors: np.ndarray,
    k: int,
    seed: int = DEFAULT_SEED,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    n_init: int = 10,
) -> ClusterModel:
    """Cluster row vectors into k groups.

    Runs `n_init` seeded k-means++ restarts and keeps the lowest within-
    cluster sum of squares; deterministic for fixed (vectors, k, seed).
    Each restart iterates until the largest centroid displacement drops
    below `tol` or `max_iter` passes, with the objective checked to be
    non-increasing across iterations. Raises TooFewPoints when k exceeds
    the number of vectors.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2:
        raise ValueError("vectors must be a 2-D array")
    n = vectors.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise TooFewPoints(f"k={k} exceeds corpus size n={n}")

    best = None
    best_objective = np.inf
    for child in np.random.SeedSequence(seed).spawn(max(1, n_init)):
        result = _lloyd(vectors, k, np.random.default_rng(child), max_iter, tol)
        objective = float((result[2] ** 2).sum())
        if objective < best_objective - 1e-12:
            best, best_objective = result, objective

    centroids, assignment, distance, n_iter, history = best
    return ClusterModel(
        k=k,
        centroids=centroids,
        assignment=assignment,
        distance=distance,
        seed=seed,
        n_iter=n_iter,
        objective_history=history,
    )


def sort_by_center_distance(model: ClusterModel, cluster: int) -> list[int]:
    """All members of a cluster, nearest-to-center first, ties by lower index."""
    members = model.members(cluster)
    return sorted(members.tolist(), key=lambda i: (model.distance[i], i))


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity undefined for zero vectors")
    return float(np.dot(a, b) / (na * nb))


def top_k_similar(query: int, vectors: np.ndarray, k: int) -> list[int]:
    """Indices of the k most cosine-similar vectors to vectors[query],
    excluding the query itself; ties broken by lower index."""
    vectors = np.asarray(vectors, dtype=np.float64)
    n = vectors.shape[0]
    if n - 1 < k:
        raise TooFewPoints(f"need more than k={k} vectors, have {n}")
    sims = [
        (-cosine_similarity(vectors[query], vectors[i]), i)
        for i in range(n)
        if i != query
    ]
    sims.sort()
    return [i for _, i in sims[:k]]


def _power_iteration(matrix: np.ndarray, start: np.ndarray) -> np.ndarray | None:
    v = start / np.linalg.norm(start)
    for _ in range(_PCA_ITERATIONS):
        w = matrix @ v
        norm = float(np.linalg.norm(w))
        if norm < 1e-30:
            return None
        w = w / norm
        if float(np.linalg.norm(w - v)) < _PCA_TOL:
            return w
        v = w
    return v


def _orthogonal_unit(v: np.ndarray) -> np.ndarray:
    # deterministic unit vector orthogonal to v (used when variance is rank-1)
    for axis in range(v.size):
        e = np.zeros_like(v)
        e[axis] = 1.0
        w = e - np.dot(e, v) * v
        norm = float(np.linalg.norm(w))
        if norm > 1e-12:
            return w / norm
    raise DegenerateData("no orthogonal direction found")


def pca_project_2d(vectors: np.ndarray) -> np.ndarray:
    """Project onto the top-2 principal components of the mean-centered data.

    Components come from power iteration with deflation; each component's
    sign is fixed so its largest-magnitude coordinate is positive. Raises
    DegenerateData when the data has zero variance.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] < 3:
        raise ValueError("need at least 3 vectors")
    centered = vectors - vectors.mean(axis=0)
    cov = centered.T @ centered / (vectors.shape[0] - 1)
    if float(np.trace(cov)) <= 1e-18:
        raise DegenerateData("all points identical: zero variance")

    rng = np.random.default_rng(0)
    components = []
    deflated = cov.copy()
    for _ in range(2):
        v = _power_iteration(deflated, rng.standard_normal(cov.shape[0]))
        if v is None:
            v = _orthogonal_unit(components[0])
        if v[int(np.argmax(np.abs(v)))] < 0:
            v = -v
        components.append(v)
        eigenvalue = float(v @ deflated @ v)
        deflated = deflated - eigenvalue * np.outer(v, v)
    basis = np.stack(components, axis=1)
    return centered @ basis
