"""Synthetic data for desk-scale experiments."""
import numpy as np


def gaussian_blobs(n, k, d, separation=10.0, std=1.0, seed=0):
    """Isotropic blobs with centres exactly ``separation`` apart.

    Centres sit on scaled axes ``separation / sqrt(2) * e_i`` under a random
    rotation, so every pair is equidistant. Cluster sizes differ by at most 1.
    """
    if k > d:
        raise ValueError("need k <= d for equidistant centres")
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    centres = separation / np.sqrt(2.0) * q[:k]
    y = rng.permutation(np.arange(n) % k)
    x = centres[y] + std * rng.normal(size=(n, d))
    return x, y


def flip_labels(y, fraction, k, seed=0):
    """Reassign ``fraction`` of the labels to a different, uniformly drawn class."""
    rng = np.random.default_rng(seed)
    y = np.array(y, dtype=np.int64, copy=True)
    idx = rng.choice(len(y), size=int(round(fraction * len(y))), replace=False)
    y[idx] = (y[idx] + rng.integers(1, k, size=len(idx))) % k
    return y
