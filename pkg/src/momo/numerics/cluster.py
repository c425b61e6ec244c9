"""PCA (covariance eigendecomposition) and K-Means (seeded k-means++, Lloyd)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Array, NumericsError, as_matrix


@dataclass
class PcaModel:
    mean: Array            # (C,)
    components: Array      # (d, C), rows orthonormal
    explained_variance: Array  # (d,), nonincreasing

    @property
    def dim(self) -> int:
        return self.components.shape[0]


def pca_fit(points, d: int) -> PcaModel:
    """Top-d principal axes of the point cloud (population covariance, divisor n)."""
    x = as_matrix(points, "points")
    n, c = x.shape
    if d < 1 or d > c:
        raise NumericsError(f"d={d} must be in [1, {c}]")
    if n < d:
        raise NumericsError(f"need at least d={d} points, got {n}")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = (xc.T @ xc) / n
    evals, evecs = np.linalg.eigh(cov)  # ascending
    order = np.argsort(evals)[::-1][:d]
    components = evecs[:, order].T.copy()
    variances = np.maximum(evals[order], 0.0)
    # Fix eigenvector sign for determinism: largest-magnitude entry positive.
    for i in range(d):
        row = components[i]
        k = int(np.argmax(np.abs(row)))
        if row[k] < 0:
            components[i] = -row
    return PcaModel(mean=mean, components=components, explained_variance=variances)


def pca_project(model: PcaModel, points) -> Array:
    x = as_matrix(points, "points")
    if x.shape[1] != model.mean.shape[0]:
        raise NumericsError(f"point dim {x.shape[1]} != model dim {model.mean.shape[0]}")
    return (x - model.mean) @ model.components.T


def pca_reconstruct(model: PcaModel, projected) -> Array:
    z = as_matrix(projected, "projected")
    return z @ model.components + model.mean


@dataclass
class KMeansModel:
    centroids: Array       # (m, C)
    assignments: np.ndarray  # (n,) int
    objective: float       # sum of squared point-to-assigned-centroid distances
    objective_history: list[float]  # one value per Lloyd iteration, nonincreasing


def _sq_dists(points: Array, centroids: Array) -> Array:
    # (n, m) squared Euclidean distances
    p2 = (points * points).sum(axis=1, keepdims=True)
    c2 = (centroids * centroids).sum(axis=1)
    return np.maximum(p2 + c2 - 2.0 * points @ centroids.T, 0.0)


def kmeans_fit(points, m: int, seed: int = 0, max_iters: int = 100) -> KMeansModel:
    """Lloyd iterations from a seeded k-means++ initialization.

    Empty clusters are re-seeded to the point farthest from its assigned
    centroid (lowest index on ties), which strictly improves the objective.
    """
    x = as_matrix(points, "points")
    n = x.shape[0]
    if m < 1 or m > n:
        raise NumericsError(f"m={m} must be in [1, {n}]")
    rng = np.random.default_rng(seed)

    # k-means++ seeding
    centroids = np.empty((m, x.shape[1]))
    centroids[0] = x[rng.integers(n)]
    closest = _sq_dists(x, centroids[:1]).min(axis=1)
    for k in range(1, m):
        total = closest.sum()
        if total <= 0.0:
            centroids[k] = x[rng.integers(n)]
        else:
            centroids[k] = x[rng.choice(n, p=closest / total)]
        closest = np.minimum(closest, _sq_dists(x, centroids[k:k + 1]).min(axis=1))

    assignments = np.full(n, -1, dtype=np.int64)
    history: list[float] = []
    for _ in range(max_iters):
        d = _sq_dists(x, centroids)
        new_assign = d.argmin(axis=1)
        for k in range(m):
            mask = new_assign == k
            if not mask.any():
                worst = int(np.argmax(d[np.arange(n), new_assign]))
                centroids[k] = x[worst]
                new_assign[worst] = k
                mask = new_assign == k
            centroids[k] = x[mask].mean(axis=0)
        history.append(float(((x - centroids[new_assign]) ** 2).sum()))
        if np.array_equal(new_assign, assignments):
            break
        assignments = new_assign

    # Final assignment against the final centroids so the nearest-centroid
    # invariant holds even on max_iters termination.
    assignments = _sq_dists(x, centroids).argmin(axis=1)
    objective = float(((x - centroids[assignments]) ** 2).sum())
    return KMeansModel(centroids=centroids, assignments=assignments,
                       objective=objective, objective_history=history)
