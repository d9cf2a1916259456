"""Downstream classifiers and experiment drivers.

Every experiment reports three feature modes: primary features, IFL
features alone, and both concatenated.
"""
from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import core
from .cluster import clustering_accuracy, hca, kmeans
from .core import IflConfig
from .errors import ConfigError, ShapeError
from .nn import AdamState, adam_step, backward, dense_forward, init_network, minibatches, softmax

log = logging.getLogger(__name__)

FEATURE_MODES = ("primary", "ifl", "primary+ifl")
CLUSTER_METHODS = ("kmeans", "hca-average", "hca-ward", "dec")
CLASSIFY_METHODS = ("knn", "mlp")


def knn_predict(train_x, train_y, test_x, k=5, return_scores=False):
    """Majority vote among the ``k`` Euclidean nearest training points.

    Distance ties go to the lower training index, vote ties to the lower
    class. With ``return_scores`` the vote fractions are returned too.
    """
    train_x = np.asarray(train_x, dtype=np.float64)
    train_y = np.asarray(train_y, dtype=np.int64)
    test_x = np.asarray(test_x, dtype=np.float64).reshape(-1, train_x.shape[1])
    if len(train_x) == 0:
        raise ValueError("empty training set")
    if not 1 <= k <= len(train_x):
        raise ValueError(f"k={k} out of range for {len(train_x)} training points")
    n_classes = int(train_y.max()) + 1
    votes = np.zeros((len(test_x), n_classes))
    chunk = max(1, 2_000_000 // max(1, train_x.size))
    for start in range(0, len(test_x), chunk):
        block = test_x[start:start + chunk]
        d = np.sum((block[:, None, :] - train_x[None, :, :]) ** 2, axis=2)
        nearest = np.argsort(d, axis=1, kind="stable")[:, :k]
        for row, idx in enumerate(nearest):
            votes[start + row] = np.bincount(train_y[idx], minlength=n_classes)
    labels = np.argmax(votes, axis=1)
    if return_scores:
        return labels, votes / k
    return labels


def mlp_classify(train_x, train_y, test_x, hidden=(64,), epochs=100, seed=0, lr=1e-3,
                 batch_size=64, n_classes=None, standardize=True):
    """Softmax MLP trained with Adam on cross-entropy; returns ``(labels, scores)``.

    With ``standardize`` every input column is centred and scaled by the
    training-set statistics before training and prediction.
    """
    train_x = np.asarray(train_x, dtype=np.float64)
    train_y = np.asarray(train_y, dtype=np.int64)
    test_x = np.asarray(test_x, dtype=np.float64).reshape(-1, train_x.shape[1])
    if standardize:
        mean, sd = train_x.mean(axis=0), train_x.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        train_x, test_x = (train_x - mean) / sd, (test_x - mean) / sd
    n_classes = n_classes or int(train_y.max()) + 1
    if train_y.min() < 0 or train_y.max() >= n_classes:
        raise ValueError(f"class index out of range [0, {n_classes})")
    dims = [train_x.shape[1], *hidden, n_classes]
    net = init_network(dims, ["relu"] * len(hidden) + ["linear"], seed)
    onehot = np.eye(n_classes)[train_y]
    rng = np.random.default_rng(seed)
    state = AdamState(lr=lr)
    flat = net.parameters()
    for _ in range(epochs):
        for idx in minibatches(len(train_x), batch_size, rng):
            acts = dense_forward(net, train_x[idx])
            grad = (softmax(acts[-1]) - onehot[idx]) / len(idx)
            grads, _ = backward(net, acts, grad)
            flat, state = adam_step(flat, grads, state)
            net = net.with_parameters(flat)
    scores = softmax(dense_forward(net, test_x)[-1])
    return np.argmax(scores, axis=1), scores


@dataclass
class ExperimentConfig:
    task: str = "clustering"
    methods: tuple[str, ...] = ("kmeans", "dec")
    feature_modes: tuple[str, ...] = FEATURE_MODES
    repeats: int = 5
    r: int = 10
    s: int = 4
    seed: int = 0
    ifl: IflConfig = field(default_factory=IflConfig)
    # network used by the "dec" clustering method; defaults to ``ifl``
    dec_net: IflConfig | None = None
    technique: int = 2
    knn_k: int = 5
    mlp_hidden: tuple[int, ...] = (64,)
    mlp_epochs: int = 100
    rescale_ifl: bool = False

    def __post_init__(self):
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.task not in ("clustering", "classification"):
            raise ConfigError(f"unknown task {self.task!r}")
        allowed = CLUSTER_METHODS if self.task == "clustering" else CLASSIFY_METHODS
        for m in self.methods:
            if m not in allowed:
                raise ConfigError(f"method {m!r} not valid for {self.task}")
        for mode in self.feature_modes:
            if mode not in FEATURE_MODES:
                raise ConfigError(f"unknown feature mode {mode!r}")
        if self.technique not in (1, 2):
            raise ConfigError("technique must be 1 or 2")

    def seeds(self):
        return [self.seed + i for i in range(self.repeats)]

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class ExperimentReport:
    config: dict
    seeds: list[int]
    # "<method>/<feature_mode>" -> {"raw": [...], "mean": x, "variance": y, ...}
    cells: dict[str, dict] = field(default_factory=dict)
    timing: dict[str, float] = field(default_factory=dict)

    def add(self, method, mode, value, **extra):
        cell = self.cells.setdefault(f"{method}/{mode}", {"raw": [], "errors": []})
        cell["raw"].append(value)
        for key, v in extra.items():
            cell.setdefault(key, []).append(v)

    def fail(self, method, mode, message):
        cell = self.cells.setdefault(f"{method}/{mode}", {"raw": [], "errors": []})
        cell["errors"].append(message)

    def finalize(self):
        for cell in self.cells.values():
            raw = np.asarray(cell["raw"], dtype=np.float64)
            cell["mean"] = float(raw.mean()) if raw.size else None
            cell["variance"] = float(raw.var()) if raw.size else None
        return self

    def mean(self, method, mode):
        return self.cells[f"{method}/{mode}"]["mean"]

    def raw(self, method, mode):
        return self.cells[f"{method}/{mode}"]["raw"]

    def to_dict(self):
        return {"config": self.config, "seeds": list(self.seeds), "cells": self.cells,
                "timing": self.timing}

    @classmethod
    def from_dict(cls, d):
        return cls(d["config"], d["seeds"], d["cells"], d.get("timing", {}))


def _scaling(a):
    sd = a.std(axis=0)
    return a.mean(axis=0), np.where(sd > 0, sd, 1.0)


def _compose(primary, ifl, mode, rescale, stats=None):
    """``stats`` carries training-set (mean, sd) so test IFL columns share its scaling."""
    if ifl is not None and rescale:
        mean, sd = stats if stats is not None else _scaling(ifl)
        ifl = (ifl - mean) / sd
    if mode == "primary":
        return primary
    if mode == "ifl":
        return ifl
    return np.hstack([primary, ifl])


def run_cluster_method(method, x, s, seed, net: IflConfig):
    """Returns ``(assignment, extra)`` where extra carries method diagnostics."""
    if method == "kmeans":
        return kmeans(x, s, seed=seed).assignment, {}
    if method == "hca-average":
        return hca(x, s, "average").assignment, {}
    if method == "hca-ward":
        return hca(x, s, "ward").assignment, {}
    if method == "dec":
        model, _ = core.fit_cluster_model(x, s, net, seed)
        return model.hard.assignment, {"init": model.init.assignment}
    raise ConfigError(f"unknown clustering method {method!r}")


def run_clustering_experiment(x, y, cfg: ExperimentConfig) -> ExperimentReport:
    """Score each clustering method on each feature mode with ACC over repeats."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(x) != len(y):
        raise ShapeError("x and y lengths differ")
    report = ExperimentReport(cfg.to_dict(), cfg.seeds())
    net = cfg.dec_net or cfg.ifl
    t0 = time.perf_counter()
    needs_ifl = any(m != "primary" for m in cfg.feature_modes)
    for rep, seed in enumerate(report.seeds):
        ifl = None
        if needs_ifl:
            t = time.perf_counter()
            ifl = core.ifl_cluster_features(x, cfg.s, cfg.r, cfg.ifl, seed).features
            report.timing[f"ifl/{rep}"] = time.perf_counter() - t
        for mode in cfg.feature_modes:
            feats = _compose(x, ifl, mode, cfg.rescale_ifl)
            for method in cfg.methods:
                try:
                    assign, extra = run_cluster_method(method, feats, cfg.s, seed, net)
                except Exception as exc:  # reported per cell
                    log.warning("%s/%s repeat %d failed: %s", method, mode, rep, exc)
                    report.fail(method, mode, f"repeat {rep}: {type(exc).__name__}: {exc}")
                    continue
                more = {}
                if "init" in extra:
                    more["init_raw"] = clustering_accuracy(extra["init"], y)
                report.add(method, mode, clustering_accuracy(assign, y), width=feats.shape[1],
                           **more)
    report.timing["total"] = time.perf_counter() - t0
    return report.finalize()


def _classify(method, train_x, train_y, test_x, seed, cfg, n_classes):
    if method == "knn":
        return knn_predict(train_x, train_y, test_x, cfg.knn_k, return_scores=True)
    if method == "mlp":
        return mlp_classify(train_x, train_y, test_x, cfg.mlp_hidden, cfg.mlp_epochs, seed,
                            n_classes=n_classes)
    raise ConfigError(f"unknown classifier {method!r}")


def run_classification_experiment(train, test, cfg: ExperimentConfig) -> ExperimentReport:
    """Accuracy of each classifier on each feature mode over repeats.

    ``train`` and ``test`` are ``(x, y)`` pairs. Technique 1 replicates every
    instance once per cluster and folds the per-version predictions back
    with :func:`core.aggregate_versions`.
    """
    x_tr, y_tr = (np.asarray(a) for a in train)
    x_te, y_te = (np.asarray(a) for a in test)
    x_tr = x_tr.astype(np.float64)
    x_te = x_te.astype(np.float64)
    y_tr = y_tr.astype(np.int64)
    y_te = y_te.astype(np.int64)
    s = cfg.s
    report = ExperimentReport(cfg.to_dict(), cfg.seeds())
    t0 = time.perf_counter()
    needs_ifl = any(m != "primary" for m in cfg.feature_modes)
    for rep, seed in enumerate(report.seeds):
        raw_tr = raw_te = None
        if needs_ifl:
            t = time.perf_counter()
            raw_tr = core.ifl_classification_train_features(x_tr, y_tr, s, cfg.r, cfg.ifl, seed)
            raw_te = core.ifl_classification_test_features(x_tr, y_tr, x_te, s, cfg.ifl, seed)
            report.timing[f"ifl/{rep}"] = time.perf_counter() - t
        for mode in cfg.feature_modes:
            if mode == "primary":
                f_tr, f_te, lab_tr, te_ids = x_tr, x_te, y_tr, None
            elif cfg.technique == 2:
                p_tr, p_te = core.package_technique2(raw_tr), core.package_technique2(raw_te)
                stats = _scaling(p_tr.features)
                f_tr = _compose(x_tr, p_tr.features, mode, cfg.rescale_ifl, stats)
                f_te = _compose(x_te, p_te.features, mode, cfg.rescale_ifl, stats)
                lab_tr, te_ids = y_tr, None
            else:
                p_tr = core.package_technique1(raw_tr, y_tr)
                p_te = core.package_technique1(raw_te)
                stats = _scaling(p_tr.features)
                f_tr = _compose(x_tr[p_tr.instance_id], p_tr.features, mode, cfg.rescale_ifl, stats)
                f_te = _compose(x_te[p_te.instance_id], p_te.features, mode, cfg.rescale_ifl, stats)
                lab_tr, te_ids = p_tr.labels, p_te
            for method in cfg.methods:
                try:
                    pred, scores = _classify(method, f_tr, lab_tr, f_te, seed, cfg, s)
                    if te_ids is not None:
                        if method == "knn":
                            _, pred = core.aggregate_versions(pred, te_ids.instance_id,
                                                              te_ids.column("weight"), s)
                        else:
                            _, pred = core.aggregate_versions(scores, te_ids.instance_id,
                                                              n_versions=s)
                except Exception as exc:  # reported per cell
                    log.warning("%s/%s repeat %d failed: %s", method, mode, rep, exc)
                    report.fail(method, mode, f"repeat {rep}: {type(exc).__name__}: {exc}")
                    continue
                report.add(method, mode, float(np.mean(pred == y_te)), width=f_tr.shape[1],
                           train_rows=len(f_tr))
    report.timing["total"] = time.perf_counter() - t0
    return report.finalize()
