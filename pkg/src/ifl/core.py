"""Inverse feature learning: error-representation features from held-out folds.

Each instance is featurised against a clustering learned without it:

* ``confidence``  share of inner-train instances in the nearest cluster
* ``weight_j``    Euclidean distance from the latent code to centroid j
* ``accuracy``    per-cluster accuracy of the nearest cluster (needs labels)

Weight columns are kept consistent across runs. In clustering mode each
run is aligned to the first run by maximum co-assignment overlap on the
instances both runs trained on; with labels, each run's clusters are
aligned to class indices through the ACC mapping.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .cluster import clustering_accuracy, hungarian, per_cluster_accuracy
from .dec import DecConfig, dec_fit
from .errors import ConfigError, DegenerateClusterError, ShapeError
from .nn import autoencoder_dims, train_autoencoder

log = logging.getLogger(__name__)

CLUSTERING = "clustering"
RAW = "classification-raw"
TECHNIQUE1 = "classification-technique1"
TECHNIQUE2 = "classification-technique2"


@dataclass
class IflConfig:
    """Network and training settings for one DEC fit.

    Default widths are the d-500-500-2000-10 encoder.
    """

    hidden: tuple[int, ...] = (500, 500, 2000)
    latent: int = 10
    ae_epochs: int = 50
    batch_size: int = 256
    lr: float = 1e-3
    hidden_activation: str = "relu"
    dec: DecConfig = field(default_factory=DecConfig)

    def dims(self, d):
        return autoencoder_dims(d, self.hidden, self.latent)


@dataclass
class FoldAssignment:
    fold_of: np.ndarray
    r: int

    def test_index(self, j):
        return np.flatnonzero(self.fold_of == j)

    def train_index(self, j):
        return np.flatnonzero(self.fold_of != j)

    @property
    def sizes(self):
        return np.bincount(self.fold_of, minlength=self.r)


@dataclass
class RunInfo:
    run: int
    seed: int
    permutation: list[int]
    trackable: bool
    agreement: float
    converged: bool
    n_iter: int
    ae_final_loss: float | None = None


@dataclass
class IflFeatureTable:
    mode: str
    columns: list[str]
    features: np.ndarray
    instance_id: np.ndarray
    version_id: np.ndarray | None = None
    labels: np.ndarray | None = None
    s: int | None = None
    runs: list[RunInfo] = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64).reshape(-1, len(self.columns))
        self.instance_id = np.asarray(self.instance_id, dtype=np.int64)
        if len(self.instance_id) != len(self.features):
            raise ShapeError("one instance id per feature row required")

    @property
    def width(self) -> int:
        return len(self.columns)

    def __len__(self):
        return len(self.features)

    def column(self, name) -> np.ndarray:
        return self.features[:, self.columns.index(name)]


def weight_columns(s):
    return [f"weight_{j}" for j in range(s)]


def inner_folding(n, r=10, seed=0) -> FoldAssignment:
    """Seeded balanced partition of ``range(n)`` into ``r`` folds."""
    if r < 2:
        raise ConfigError("need at least 2 folds")
    if r > n:
        raise ConfigError(f"cannot split {n} instances into {r} folds")
    perm = np.random.default_rng(seed).permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[perm] = np.arange(n) % r
    return FoldAssignment(fold_of, r)


def nearest_cluster(z, centroids) -> np.ndarray:
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    diff = z[:, None, :] - np.asarray(centroids, dtype=np.float64)[None, :, :]
    return np.argmin(np.einsum("ijk,ijk->ij", diff, diff), axis=1)


def confidence(z, centroids, sizes) -> np.ndarray:
    sizes = np.asarray(sizes, dtype=np.float64)
    if sizes.size == 0 or sizes.sum() <= 0:
        raise ValueError("cluster sizes are empty")
    return sizes[nearest_cluster(z, centroids)] / sizes.sum()


def weight(z, centroids) -> np.ndarray:
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    centroids = np.asarray(centroids, dtype=np.float64)
    if z.shape[1] != centroids.shape[1]:
        raise ShapeError(f"latent dim {z.shape[1]} != centroid dim {centroids.shape[1]}")
    diff = z[:, None, :] - centroids[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def accuracy_feature(z, centroids, per_cluster_acc) -> np.ndarray:
    return np.asarray(per_cluster_acc, dtype=np.float64)[nearest_cluster(z, centroids)]


def trackability_threshold(r, s) -> float:
    """Minimum step-2 ACC (as a fraction) for reliable tracking: r% + (1/s)%."""
    return (r + 100.0 / s) / 100.0


def align(values, permutation) -> np.ndarray:
    """Move column ``b`` of ``values`` to column ``permutation[b]``."""
    out = np.empty_like(values)
    out[:, np.asarray(permutation)] = values
    return out


def track_clusters(reference, current, s, r=10, acc=None):
    """Align ``current`` cluster ids to ``reference`` ids on shared instances.

    Both arguments are hard assignments over the same instances. Returns
    ``(permutation, trackable, agreement)`` where ``permutation[b]`` is the
    reference index matched to current cluster ``b`` and ``agreement`` is
    the matched share of instances. ``acc`` overrides the agreement as the
    quantity tested against :func:`trackability_threshold`.
    """
    reference = np.asarray(reference, dtype=np.int64)
    current = np.asarray(current, dtype=np.int64)
    if len(reference) == 0:
        raise ValueError("no shared instances to track clusters on")
    if len(reference) != len(current):
        raise ShapeError("reference and current must cover the same instances")
    counts = np.zeros((s, s), dtype=np.int64)
    np.add.at(counts, (current, reference), 1)
    perm = hungarian(-counts)
    agreement = float(counts[np.arange(s), perm].sum() / len(reference))
    score = agreement if acc is None else acc
    trackable = score >= trackability_threshold(r, s)
    if not trackable:
        warnings.warn(f"cluster tracking unreliable: score {score:.3f} below "
                      f"threshold {trackability_threshold(r, s):.3f}", RuntimeWarning, stacklevel=2)
    return perm, trackable, agreement


def fit_cluster_model(x, s, cfg: IflConfig, seed):
    """Autoencoder training followed by DEC refinement."""
    ae, train_log = train_autoencoder(x, cfg.dims(x.shape[1]), epochs=cfg.ae_epochs,
                                      batch_size=cfg.batch_size, seed=seed, lr=cfg.lr,
                                      hidden_activation=cfg.hidden_activation)
    model = dec_fit(ae, x, s, cfg.dec, seed=seed)
    return model, train_log


def run_seeds(seed, r):
    return [int(c.generate_state(1)[0]) for c in np.random.SeedSequence(seed).spawn(r)]


def _check_inputs(x, s, r):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError("x must be 2-D")
    n = len(x)
    if n < r:
        raise ConfigError(f"need n >= r, got n={n}, r={r}")
    if n * (r - 1) // r < s:
        raise ConfigError(f"inner-train folds too small for s={s} clusters")
    return x


def _inner_fold_features(x, y, s, r, cfg, seed):
    """Shared loop behind the clustering and classification train features."""
    cfg = cfg or IflConfig()
    x = _check_inputs(x, s, r)
    n = len(x)
    folds = inner_folding(n, r, seed)
    seeds = run_seeds(seed, r)
    conf = np.empty(n)
    weights = np.empty((n, s))
    acc = np.empty(n) if y is not None else None
    reference = np.full(n, -1, dtype=np.int64)
    runs = []
    for j in range(r):
        train, test = folds.train_index(j), folds.test_index(j)
        try:
            model, train_log = fit_cluster_model(x[train], s, cfg, seeds[j])
        except DegenerateClusterError as exc:
            raise DegenerateClusterError(f"run {j}: {exc}", exc.cluster, j) from exc
        z = model.embed(x[test])
        conf[test] = confidence(z, model.centroids, model.sizes)
        w = weight(z, model.centroids)
        assign = model.hard.assignment
        if y is not None:
            pca = per_cluster_accuracy(assign, y[train], s)
            acc[test] = accuracy_feature(z, model.centroids, pca.accuracy)
            perm = pca.mapping
            inner_acc = clustering_accuracy(assign, y[train])
            trackable = inner_acc >= trackability_threshold(r, s)
            if not trackable:
                warnings.warn(f"run {j}: inner-train ACC {inner_acc:.3f} below tracking threshold",
                              RuntimeWarning, stacklevel=3)
            agreement = inner_acc
        elif j == 0:
            reference[train] = assign
            perm, trackable, agreement = np.arange(s), True, 1.0
        else:
            shared = reference[train] >= 0
            perm, trackable, agreement = track_clusters(reference[train][shared], assign[shared], s, r)
        weights[test] = align(w, perm)
        runs.append(RunInfo(j, seeds[j], [int(v) for v in perm], bool(trackable), float(agreement),
                            model.converged, model.n_iter,
                            train_log.losses[-1] if train_log.losses else None))
        log.info("run %d/%d: converged=%s iters=%d agreement=%.3f", j + 1, r, model.converged,
                 model.n_iter, agreement)
    return conf, weights, acc, runs


def ifl_cluster_features(x, s, r=10, cfg: IflConfig | None = None, seed=0) -> IflFeatureTable:
    """Label-free IFL features: ``confidence, weight_0..weight_{s-1}`` per instance."""
    conf, weights, _, runs = _inner_fold_features(x, None, s, r, cfg, seed)
    feats = np.column_stack([conf, weights])
    return IflFeatureTable(CLUSTERING, ["confidence"] + weight_columns(s), feats,
                           np.arange(len(feats)), s=s, runs=runs)


def _check_labels(y, n, s):
    y = np.asarray(y, dtype=np.int64)
    if len(y) != n:
        raise ShapeError(f"{n} instances but {len(y)} labels")
    if y.size and (y.min() < 0 or y.max() >= s):
        raise ConfigError(f"labels must lie in [0, {s})")
    return y


def ifl_classification_train_features(x_train, y_train, s, r=10, cfg: IflConfig | None = None,
                                      seed=0) -> IflFeatureTable:
    """Raw training features ``confidence, weight_0.., accuracy`` via inner folding.

    Weight column j refers to the cluster mapped to class j.
    """
    y = _check_labels(y_train, len(x_train), s)
    missing = np.setdiff1d(np.arange(s), y)
    if missing.size:
        warnings.warn(f"classes {missing.tolist()} absent from training labels", RuntimeWarning,
                      stacklevel=2)
    conf, weights, acc, runs = _inner_fold_features(x_train, y, s, r, cfg, seed)
    feats = np.column_stack([conf, weights, acc])
    return IflFeatureTable(RAW, ["confidence"] + weight_columns(s) + ["accuracy"], feats,
                           np.arange(len(feats)), labels=y, s=s, runs=runs)


def ifl_classification_test_features(x_train, y_train, x_test, s, cfg: IflConfig | None = None,
                                     seed=0, return_model=False):
    """Raw test features from one DEC fit on the whole training set (no inner folding)."""
    cfg = cfg or IflConfig()
    x_train = np.asarray(x_train, dtype=np.float64)
    x_test = np.asarray(x_test, dtype=np.float64).reshape(-1, x_train.shape[1])
    y = _check_labels(y_train, len(x_train), s)
    columns = ["confidence"] + weight_columns(s) + ["accuracy"]
    if len(x_test) == 0:
        table = IflFeatureTable(RAW, columns, np.empty((0, s + 2)), np.empty(0), s=s)
        return (table, None) if return_model else table
    model, train_log = fit_cluster_model(x_train, s, cfg, seed)
    pca = per_cluster_accuracy(model.hard.assignment, y, s)
    z = model.embed(x_test)
    feats = np.column_stack([
        confidence(z, model.centroids, model.sizes),
        align(weight(z, model.centroids), pca.mapping),
        accuracy_feature(z, model.centroids, pca.accuracy),
    ])
    inner_acc = clustering_accuracy(model.hard.assignment, y)
    info = RunInfo(0, seed, [int(v) for v in pca.mapping], True, inner_acc, model.converged,
                   model.n_iter, train_log.losses[-1] if train_log.losses else None)
    table = IflFeatureTable(RAW, columns, feats, np.arange(len(feats)), s=s, runs=[info])
    return (table, model) if return_model else table


def _raw_parts(raw: IflFeatureTable):
    if raw.mode != RAW:
        raise ValueError(f"expected a {RAW} table, got {raw.mode}")
    s = raw.s if raw.s is not None else raw.width - 2
    return raw.column("confidence"), raw.features[:, 1:1 + s], raw.column("accuracy"), s


def package_technique1(raw: IflFeatureTable, labels=None) -> IflFeatureTable:
    """One row per (instance, cluster version): ``confidence, weight, accuracy``.

    Rows are instance-major; version v carries ``weight_v``.
    """
    conf, weights, acc, s = _raw_parts(raw)
    n = len(raw)
    feats = np.column_stack([np.repeat(conf, s), weights.reshape(-1), np.repeat(acc, s)])
    labels = raw.labels if labels is None else np.asarray(labels)
    return IflFeatureTable(
        TECHNIQUE1, ["confidence", "weight", "accuracy"], feats,
        np.repeat(raw.instance_id, s), np.tile(np.arange(s), n),
        None if labels is None else np.repeat(labels, s), s, raw.runs)


def package_technique2(raw: IflFeatureTable) -> IflFeatureTable:
    """One row per instance: ``confidence, accuracy, weight_0..weight_{s-1}``."""
    conf, weights, acc, s = _raw_parts(raw)
    feats = np.column_stack([conf, acc, weights])
    return IflFeatureTable(TECHNIQUE2, ["confidence", "accuracy"] + weight_columns(s), feats,
                           raw.instance_id.copy(), None, raw.labels, s, raw.runs)


def aggregate_versions(predictions, instance_id, weights=None, n_versions=None):
    """Collapse per-version predictions into one label per instance.

    ``predictions`` is either an (rows, classes) score matrix, summed per
    instance then arg-maxed, or a vector of hard labels decided by majority
    vote. Vote ties go to the tied class whose version has the smallest
    ``weights`` value when weights are given; remaining ties go to the
    lowest class index. Returns ``(instances, labels)`` with instances sorted.
    """
    predictions = np.asarray(predictions)
    instance_id = np.asarray(instance_id, dtype=np.int64)
    if len(predictions) != len(instance_id):
        raise ShapeError("one prediction per version row required")
    instances, inverse, counts = np.unique(instance_id, return_inverse=True, return_counts=True)
    expected = n_versions if n_versions is not None else (counts.max() if counts.size else 0)
    short = instances[counts != expected]
    if short.size:
        raise ValueError(f"instance {int(short[0])} has missing versions")
    if predictions.ndim == 2:
        totals = np.zeros((len(instances), predictions.shape[1]))
        np.add.at(totals, inverse, predictions)
        return instances, np.argmax(totals, axis=1)

    hard = predictions.astype(np.int64)
    k = int(hard.max()) + 1 if hard.size else 0
    votes = np.zeros((len(instances), k), dtype=np.int64)
    np.add.at(votes, (inverse, hard), 1)
    labels = np.argmax(votes, axis=1)
    if weights is not None:
        weights = np.asarray(weights, dtype=np.float64)
        top = votes.max(axis=1, keepdims=True)
        tied = np.flatnonzero((votes == top).sum(axis=1) > 1)
        for i in tied:
            rows = np.flatnonzero(inverse == i)
            rows = rows[votes[i, hard[rows]] == top[i, 0]]
            best = rows[np.lexsort((hard[rows], weights[rows]))[0]]
            labels[i] = hard[best]
    return instances, labels
