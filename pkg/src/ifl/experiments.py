"""Desk-scale blob experiments shared by the acceptance tests and scripts/."""
from __future__ import annotations

import numpy as np

from .core import IflConfig
from .dec import DecConfig
from .harness import ExperimentConfig, run_classification_experiment, run_clustering_experiment
from .synthetic import flip_labels, gaussian_blobs

BLOBS = dict(n=1000, k=4, d=20, separation=10.0, std=1.0)


def desk_net(ae_epochs=30, dec_max_iter=300):
    """The 20-64-32-5 autoencoder (mirrored decoder) with a short schedule."""
    return IflConfig(hidden=(64, 32), latent=5, ae_epochs=ae_epochs, batch_size=64, lr=1e-3,
                     dec=DecConfig(max_iter=dec_max_iter, batch_size=64))


def blobs(seed=0):
    return gaussian_blobs(BLOBS["n"], BLOBS["k"], BLOBS["d"], BLOBS["separation"], BLOBS["std"],
                          seed=seed)


def clustering_config(seed=0, repeats=5, r=10, net=None):
    return ExperimentConfig(task="clustering", methods=("kmeans", "dec"), repeats=repeats, r=r,
                            s=BLOBS["k"], seed=seed, ifl=net or desk_net())


def run_blobs_clustering(seed=0, repeats=5, r=10, net=None, data_seed=0):
    x, y = blobs(data_seed)
    return run_clustering_experiment(x, y, clustering_config(seed, repeats, r, net))


def noisy_split(data_seed=0, noise=0.1, test_fraction=0.2):
    """Blobs split into train/test; label noise is applied to the training labels only."""
    x, y = blobs(data_seed)
    order = np.random.default_rng(data_seed).permutation(len(x))
    n_test = int(round(test_fraction * len(x)))
    te, tr = order[:n_test], order[n_test:]
    y_tr = flip_labels(y[tr], noise, BLOBS["k"], seed=data_seed)
    return (x[tr], y_tr), (x[te], y[te])


def classification_config(seed=0, repeats=5, r=10, technique=2, net=None, mlp_epochs=50):
    return ExperimentConfig(task="classification", methods=("knn", "mlp"), repeats=repeats, r=r,
                            s=BLOBS["k"], seed=seed, ifl=net or desk_net(), technique=technique,
                            knn_k=5, mlp_hidden=(64,), mlp_epochs=mlp_epochs)


def run_blobs_classification(seed=0, repeats=5, r=10, technique=2, net=None, data_seed=0,
                             noise=0.1):
    train, test = noisy_split(data_seed, noise)
    return run_classification_experiment(train, test,
                                         classification_config(seed, repeats, r, technique, net))
