"""Classical clustering baselines and the unsupervised clustering accuracy.

All distances are Euclidean (squared where only the ordering matters).
Ties resolve to the lowest index.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ShapeError


@dataclass
class HardClustering:
    assignment: np.ndarray
    s: int
    centroids: np.ndarray | None = None
    inertia: float | None = None
    n_iter: int = 0
    inertia_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.assignment = np.asarray(self.assignment, dtype=np.int64)
        if self.assignment.size and (self.assignment.min() < 0 or self.assignment.max() >= self.s):
            raise ValueError(f"assignment indices must lie in [0, {self.s})")

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.s)

    @property
    def n(self) -> int:
        return len(self.assignment)


def sq_distances(x, c):
    """Squared Euclidean distances between rows of ``x`` and rows of ``c``."""
    xx = np.einsum("ij,ij->i", x, x)[:, None]
    cc = np.einsum("ij,ij->i", c, c)[None, :]
    return np.maximum(xx - 2.0 * x @ c.T + cc, 0.0)


def _inertia(x, centroids, assignment):
    diff = x - centroids[assignment]
    return float(np.einsum("ij,ij->", diff, diff))


def kmeans_plusplus(x, s, rng):
    n = len(x)
    centers = [x[rng.integers(n)]]
    d2 = sq_distances(x, centers[0][None, :])[:, 0]
    for _ in range(1, s):
        total = d2.sum()
        if total <= 0:
            # every point coincides with a chosen center
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers.append(x[idx])
        d2 = np.minimum(d2, sq_distances(x, x[idx][None, :])[:, 0])
    return np.array(centers)


def _lloyd(x, centroids, max_iter, tol):
    history = []
    centroids = centroids.copy()
    s = len(centroids)
    assignment = np.argmin(sq_distances(x, centroids), axis=1)
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        history.append(_inertia(x, centroids, assignment))
        if len(history) > 1 and history[-1] > history[-2] * (1 + 1e-12) + 1e-12:
            raise AssertionError(f"k-means inertia increased at iteration {n_iter}: "
                                 f"{history[-2]} -> {history[-1]}")
        counts = np.bincount(assignment, minlength=s)
        new = np.zeros_like(centroids)
        np.add.at(new, assignment, x)
        empty = np.flatnonzero(counts == 0)
        nonempty = counts > 0
        new[nonempty] /= counts[nonempty, None]
        if empty.size:
            # re-seed empty clusters at the points farthest from their own centroid
            resid = x - centroids[assignment]
            dist = np.einsum("ij,ij->i", resid, resid)
            for j, idx in zip(empty, np.argsort(-dist, kind="stable")):
                new[j] = x[idx]
        shift = np.sqrt(np.max(np.sum((new - centroids) ** 2, axis=1)))
        centroids = new
        new_assignment = np.argmin(sq_distances(x, centroids), axis=1)
        changed = np.any(new_assignment != assignment)
        assignment = new_assignment
        if shift < tol or not changed:
            break
    history.append(_inertia(x, centroids, assignment))
    return centroids, assignment, n_iter, history


def kmeans(x, s, init=None, max_iter=300, tol=1e-4, seed=0, n_init=10) -> HardClustering:
    """Lloyd's algorithm with k-means++ seeding.

    ``init`` may be an (s, d) array of starting centroids, in which case a
    single run is made. Otherwise ``n_init`` seeded k-means++ starts are run
    and the lowest-inertia result is kept (first wins on ties).

    ``inertia_history`` holds the inertia after every assignment step; it is
    non-increasing and the function raises if that ever fails.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("kmeans needs a non-empty 2-D array")
    n = len(x)
    if not 1 <= s <= n:
        raise ValueError(f"need 1 <= s <= n, got s={s}, n={n}")
    if init is not None:
        starts = [np.asarray(init, dtype=np.float64)]
        if starts[0].shape != (s, x.shape[1]):
            raise ShapeError(f"init centroids shape {starts[0].shape} != {(s, x.shape[1])}")
    else:
        rng = np.random.default_rng(seed)
        starts = [kmeans_plusplus(x, s, rng) for _ in range(max(1, n_init))]
    best = None
    for c0 in starts:
        centroids, assignment, n_iter, history = _lloyd(x, c0, max_iter, tol)
        if best is None or history[-1] < best.inertia:
            best = HardClustering(assignment, s, centroids, history[-1], n_iter, history)
    return best


def _canonical(labels):
    """Relabel clusters in order of first appearance."""
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inverse]


def hca(x, s, linkage="ward") -> HardClustering:
    """Bottom-up agglomerative clustering cut at ``s`` clusters.

    Lance-Williams updates on a dense distance matrix. ``average`` uses
    Euclidean distances; ``ward`` works on squared Euclidean distances, for
    which the recurrence is exact. Cluster ids are numbered by first
    appearance in the input order.
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if not 1 <= s <= n:
        raise ValueError(f"need 1 <= s <= n, got s={s}, n={n}")
    if linkage not in ("average", "ward"):
        raise ValueError(f"unknown linkage {linkage!r}")
    d = sq_distances(x, x)
    if linkage == "average":
        d = np.sqrt(d)
    d[np.diag_indices(n)] = np.inf
    size = np.ones(n)
    label = np.arange(n)
    for _ in range(n - s):
        # symmetric matrix: the first row-major minimum has i < j
        i, j = divmod(int(np.argmin(d)), n)
        ni, nj = size[i], size[j]
        if linkage == "average":
            row = (ni * d[i] + nj * d[j]) / (ni + nj)
        else:
            nk = size
            row = ((ni + nk) * d[i] + (nj + nk) * d[j] - nk * d[i, j]) / (ni + nj + nk)
        d[i] = row
        d[:, i] = row
        d[i, i] = np.inf
        d[j] = np.inf
        d[:, j] = np.inf
        size[i] = ni + nj
        label[label == j] = i
    return HardClustering(_canonical(label), s)


def hungarian(cost) -> np.ndarray:
    """Minimum-cost perfect matching; ``perm[row] = col``."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ShapeError(f"cost matrix must be square, got {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix has non-finite entries")
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(len(rows), dtype=np.int64)
    perm[rows] = cols
    return perm


def _as_assignment(pred):
    if isinstance(pred, HardClustering):
        return pred.assignment, pred.s
    pred = np.asarray(pred, dtype=np.int64)
    return pred, int(pred.max()) + 1 if pred.size else 0


def contingency(pred, labels, size=None) -> np.ndarray:
    """Square count matrix ``w[cluster, class]`` zero-padded to ``size``."""
    pred, s = _as_assignment(pred)
    labels = np.asarray(labels, dtype=np.int64)
    if len(pred) != len(labels):
        raise ShapeError(f"{len(pred)} predictions vs {len(labels)} labels")
    k = max(s, int(labels.max()) + 1 if labels.size else 0, size or 0)
    w = np.zeros((k, k), dtype=np.int64)
    np.add.at(w, (pred, labels), 1)
    return w


def best_mapping(pred, labels, size=None) -> np.ndarray:
    """Optimal one-to-one cluster -> class map; ``mapping[cluster] = class``."""
    w = contingency(pred, labels, size)
    return hungarian(-w)


def clustering_accuracy(pred, labels) -> float:
    """ACC: fraction of instances matched under the best one-to-one mapping."""
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("empty labels")
    w = contingency(pred, labels)
    m = hungarian(-w)
    return float(w[np.arange(len(m)), m].sum() / len(labels))


class ClusterAccuracy(NamedTuple):
    accuracy: np.ndarray
    mapping: np.ndarray
    empty: np.ndarray


def per_cluster_accuracy(pred, labels, s=None) -> ClusterAccuracy:
    """Per-cluster purity under the global ACC mapping.

    Entry j is the share of cluster j's members whose label equals the
    class cluster j is mapped to. Empty clusters get 0 and are flagged in
    ``empty``.
    """
    assign, s_pred = _as_assignment(pred)
    s = s if s is not None else s_pred
    w = contingency(HardClustering(assign, max(s, s_pred)), labels, s)
    m = hungarian(-w)[:s]
    sizes = w[:s].sum(axis=1)
    hits = w[np.arange(s), m]
    empty = sizes == 0
    acc = np.where(empty, 0.0, hits / np.maximum(sizes, 1))
    return ClusterAccuracy(acc, m, empty)
