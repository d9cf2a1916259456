"""Deep embedded clustering, refinement phase.

A Student's t kernel turns latent codes into soft assignments Q; Q is
sharpened into a target P; encoder weights and centroids are moved by
Adam to reduce KL(P || Q), with P frozen between refreshes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cluster import HardClustering, kmeans
from .errors import ConfigError, DegenerateClusterError, ShapeError
from .nn import AdamState, AutoencoderParams, Network, adam_step, backward, dense_forward, encode


@dataclass
class DecConfig:
    alpha: float = 1.0
    tol: float = 0.001
    max_iter: int = 2000
    # None means one pass over the data
    update_interval: int | None = None
    batch_size: int = 256
    lr: float = 1e-3
    kmeans_n_init: int = 10

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigError("alpha must be > 0")
        if not 0 < self.tol < 1:
            raise ConfigError("tol must lie in (0, 1)")
        if self.update_interval is not None and self.update_interval < 1:
            raise ConfigError("update_interval must be >= 1")
        if self.max_iter < 0 or self.batch_size < 1:
            raise ConfigError("max_iter must be >= 0 and batch_size >= 1")


@dataclass
class ClusterModel:
    encoder: Network
    centroids: np.ndarray
    hard: HardClustering
    init: HardClustering
    converged: bool = False
    n_iter: int = 0
    alpha: float = 1.0
    delta_history: list[float] = field(default_factory=list)

    @property
    def sizes(self) -> np.ndarray:
        return self.hard.sizes

    @property
    def s(self) -> int:
        return len(self.centroids)

    def embed(self, x) -> np.ndarray:
        return encode(self.encoder, x)


def _check_pair(z, centroids):
    z = np.asarray(z, dtype=np.float64)
    centroids = np.asarray(centroids, dtype=np.float64)
    if len(centroids) == 0:
        raise ShapeError("need at least one centroid")
    if z.ndim != 2 or centroids.ndim != 2 or z.shape[1] != centroids.shape[1]:
        raise ShapeError(f"latent shape {z.shape} incompatible with centroids {centroids.shape}")
    return z, centroids


def _pairwise_sq(z, centroids):
    diff = z[:, None, :] - centroids[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def soft_assign(z, centroids, alpha=1.0) -> np.ndarray:
    """Student's t soft assignment; rows sum to one."""
    if alpha <= 0:
        raise ConfigError("alpha must be > 0")
    z, centroids = _check_pair(z, centroids)
    kernel = (1.0 + _pairwise_sq(z, centroids) / alpha) ** (-(alpha + 1.0) / 2.0)
    return kernel / kernel.sum(axis=1, keepdims=True)


def target_distribution(q) -> np.ndarray:
    """Sharpen Q by squaring and dividing by soft cluster frequency."""
    q = np.asarray(q, dtype=np.float64)
    f = q.sum(axis=0)
    dead = np.flatnonzero(f <= 0)
    if dead.size:
        raise DegenerateClusterError(f"cluster {int(dead[0])} has zero soft frequency",
                                     cluster=int(dead[0]))
    w = q ** 2 / f
    return w / w.sum(axis=1, keepdims=True)


def kl_divergence(p, q) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ShapeError(f"shape mismatch {p.shape} vs {q.shape}")
    mask = p > 0
    # rounding can leave a near-zero divergence a few ulps below 0
    return max(0.0, float(np.sum(p[mask] * np.log(p[mask] / q[mask]))))


def kl_gradients(z, centroids, p, q, alpha=1.0):
    """Gradients of KL(P || Q(z, mu)) with respect to z and mu, P held fixed."""
    z, centroids = _check_pair(z, centroids)
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.shape != (len(z), len(centroids)):
        raise ShapeError("P and Q must be (n, s)")
    inv = 1.0 / (1.0 + _pairwise_sq(z, centroids) / alpha)
    coef = (alpha + 1.0) / alpha * inv * (p - q)
    dz = coef.sum(axis=1, keepdims=True) * z - coef @ centroids
    dmu = coef.sum(axis=0)[:, None] * centroids - coef.T @ z
    return dz, dmu


def dec_fit(encoder, x, s, cfg: DecConfig | None = None, seed=0) -> ClusterModel:
    """Refine an encoder and k-means centroids by KL(P || Q) minimisation.

    ``encoder`` may be a full :class:`AutoencoderParams` (its encoder half is
    used) or a bare encoder network. The returned model never shares
    arrays with the input.
    """
    cfg = cfg or DecConfig()
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if n < s:
        raise ValueError(f"need at least s={s} instances, got {n}")
    net = encoder.encoder() if isinstance(encoder, AutoencoderParams) else encoder.copy()

    z = encode(net, x)
    if not np.all(np.isfinite(z)):
        raise DegenerateClusterError("initial embedding is not finite")
    init = kmeans(z, s, seed=seed, n_init=cfg.kmeans_n_init)
    mu = init.centroids.copy()
    if cfg.max_iter == 0:
        hard = HardClustering(init.assignment.copy(), s, mu.copy())
        return ClusterModel(net, mu, hard, init, False, 0, cfg.alpha)

    interval = cfg.update_interval or math.ceil(n / cfg.batch_size)
    rng = np.random.default_rng(seed)
    state = AdamState(lr=cfg.lr)
    flat = net.parameters() + [mu]
    prev = init.assignment
    deltas = []
    converged = False
    order = None
    it = 0
    while it < cfg.max_iter:
        if it % interval == 0:
            z = encode(net, x)
            if not np.all(np.isfinite(z)):
                raise DegenerateClusterError(f"embedding diverged at iteration {it}")
            q = soft_assign(z, mu, cfg.alpha)
            p = target_distribution(q)
            assign = np.argmax(q, axis=1)
            if it > 0:
                delta = float(np.mean(assign != prev))
                deltas.append(delta)
                if delta < cfg.tol:
                    converged = True
                    break
            prev = assign
            order = rng.permutation(n)
        k = it % interval
        idx = order[(k * cfg.batch_size) % n:][:cfg.batch_size]
        acts = dense_forward(net, x[idx])
        zb = acts[-1]
        qb = soft_assign(zb, mu, cfg.alpha)
        dz, dmu = kl_gradients(zb, mu, p[idx], qb, cfg.alpha)
        grads, _ = backward(net, acts, dz / len(idx))
        flat, state = adam_step(flat, grads + [dmu / len(idx)], state)
        net = net.with_parameters(flat[:-1])
        mu = flat[-1]
        it += 1

    z = encode(net, x)
    if not np.all(np.isfinite(z)) or not np.all(np.isfinite(mu)):
        raise DegenerateClusterError("embedding or centroids not finite after refinement")
    q = soft_assign(z, mu, cfg.alpha)
    target_distribution(q)
    hard = HardClustering(np.argmax(q, axis=1), s, mu.copy())
    return ClusterModel(net, mu.copy(), hard, init, converged, it, cfg.alpha, deltas)
