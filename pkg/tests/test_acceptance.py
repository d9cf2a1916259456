"""Acceptance gate. Each test prints one PASS/FAIL line for its criterion."""
import os
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import finite_difference, max_rel_error, record_verdict
from ifl import core
from ifl.cluster import clustering_accuracy, hca, hungarian, kmeans, per_cluster_accuracy
from ifl.core import IflConfig, trackability_threshold
from ifl.dec import DecConfig, kl_divergence, kl_gradients, soft_assign, target_distribution
from ifl.experiments import (desk_net, noisy_split, run_blobs_classification,
                             run_blobs_clustering)
from ifl.export import dumps_report
from ifl.harness import knn_predict, mlp_classify
from ifl.nn import backprop_reconstruction, dense_forward, init_autoencoder, reconstruction_loss
from ifl.synthetic import gaussian_blobs
from oracles import (brute_force_assignment_cost, knn_oracle, naive_agglomerate,
                     partition_from_labels)

# float slack for ">=" comparisons of accuracies that are ratios of small integers
EPS = 1e-12


def verdict(criterion, ok, detail):
    record_verdict(criterion, ok, detail)
    assert ok, detail


# --- 1: gradients ----------------------------------------------------------

def _reconstruction_instance(seed):
    rng = np.random.default_rng(seed)
    d, h, e = int(rng.integers(2, 9)), int(rng.integers(2, 17)), int(rng.integers(1, 5))
    params = init_autoencoder([d, h, e, h, d], seed)
    # non-zero biases so the check exercises them
    params = params.with_parameters([p + rng.normal(scale=0.1, size=p.shape)
                                     for p in params.parameters()])
    batch = rng.normal(size=(int(rng.integers(1, 11)), d))
    _, grads = backprop_reconstruction(params, batch)
    flat = params.parameters()

    def loss():
        net = params.with_parameters(flat)
        return reconstruction_loss(batch, dense_forward(net, batch)[-1])

    return max(max_rel_error(g, finite_difference(loss, p)) for g, p in zip(grads, flat))


def _kl_instance(seed):
    rng = np.random.default_rng(seed)
    n, s, e = int(rng.integers(1, 11)), int(rng.integers(2, 5)), int(rng.integers(1, 6))
    alpha = float(rng.choice([1.0, 0.5, 2.0]))
    z, mu = rng.normal(size=(n, e)), rng.normal(size=(s, e))
    p = target_distribution(soft_assign(z + rng.normal(scale=0.3, size=z.shape), mu, alpha))
    dz, dmu = kl_gradients(z, mu, p, soft_assign(z, mu, alpha), alpha)
    f = lambda: kl_divergence(p, soft_assign(z, mu, alpha))  # noqa: E731
    return max(max_rel_error(dz, finite_difference(f, z)), max_rel_error(dmu, finite_difference(f, mu)))


def test_criterion_1_gradients():
    t0 = time.perf_counter()
    rec = [_reconstruction_instance(seed) for seed in range(25)]
    kl = [_kl_instance(seed) for seed in range(25)]
    elapsed = time.perf_counter() - t0
    ok = max(rec) < 1e-4 and max(kl) < 1e-4 and elapsed < 60
    verdict(1, ok, f"backprop max rel err {max(rec):.2e} (25 nets), KL max rel err "
                   f"{max(kl):.2e} (25 instances), {elapsed:.1f}s")


# --- 2: distributions --------------------------------------------------------

def test_criterion_2_distributions():
    rng = np.random.default_rng(2)
    worst_row, min_kl = 0.0, np.inf
    for _ in range(1000):
        n, s, e = (int(v) for v in rng.integers([1, 2, 1], [30, 11, 8]))
        alpha = float(rng.uniform(0.2, 5.0))
        q = soft_assign(rng.normal(scale=rng.uniform(0.1, 5), size=(n, e)),
                        rng.normal(scale=rng.uniform(0.1, 5), size=(s, e)), alpha)
        p = target_distribution(q)
        worst_row = max(worst_row, np.abs(q.sum(1) - 1).max(), np.abs(p.sum(1) - 1).max())
        min_kl = min(min_kl, kl_divergence(p, q))
        assert kl_divergence(q, q) == 0.0
    single = 0.0
    for _ in range(100):
        row = rng.dirichlet(np.ones(int(rng.integers(2, 8))))[None]
        single = max(single, np.abs(target_distribution(row) - row).max())
    ok = worst_row <= 1e-9 and min_kl >= 0 and single <= 1e-12
    verdict(2, ok, f"max |row sum - 1| {worst_row:.1e}, min KL {min_kl:.2e}, KL(Q,Q)=0, "
                   f"single-row |P-Q| {single:.1e}")


# --- 3: oracles ------------------------------------------------------------

def test_criterion_3_oracles():
    rng = np.random.default_rng(3)
    hung = 0
    for _ in range(100):
        cost = rng.random((5, 5))
        perm = hungarian(cost)
        if (sorted(perm) != list(range(5))
                or abs(cost[np.arange(5), perm].sum() - brute_force_assignment_cost(cost)) > 1e-12):
            hung += 1
    hca_bad = hca_total = 0
    for seed in range(30):
        r = np.random.default_rng(seed)
        n = int(r.integers(2, 9))
        x = r.normal(size=(n, int(r.integers(1, 4))))
        for linkage in ("average", "ward"):
            for s in range(1, n + 1):
                hca_total += 1
                if partition_from_labels(hca(x, s, linkage).assignment) != naive_agglomerate(x, s, linkage):
                    hca_bad += 1
    knn_bad = 0
    for seed in range(20):
        r = np.random.default_rng(seed)
        tx, ty = r.normal(size=(50, 3)), r.integers(0, 4, 50)
        qx = r.normal(size=(50, 3))
        for k in (1, 3, 5):
            knn_bad += int(np.sum(knn_predict(tx, ty, qx, k) != knn_oracle(tx, ty, qx, k)))
    ok = hung == hca_bad == knn_bad == 0
    verdict(3, ok, f"hungarian mismatches {hung}/100, hca mismatches {hca_bad}/{hca_total}, "
                   f"knn mismatches {knn_bad}/3000")


# --- 4: ACC ------------------------------------------------------------------

def test_criterion_4_acc():
    rng = np.random.default_rng(4)
    perm_ok = all(clustering_accuracy(p[y], y) == 1.0
                  for y, p in ((rng.integers(0, 6, 60), rng.permutation(6)) for _ in range(200)))
    half = clustering_accuracy([0, 0, 1, 1], [0, 1, 0, 1])
    weighted_ok = True
    for _ in range(200):
        k = int(rng.integers(1, 7))
        pred, labels = rng.integers(0, k, 40), rng.integers(0, k, 40)
        res = per_cluster_accuracy(pred, labels, k)
        sizes = np.bincount(pred, minlength=k)
        weighted_ok &= abs(np.sum(res.accuracy * sizes) / 40 - clustering_accuracy(pred, labels)) < 1e-12
    ok = perm_ok and half == 0.5 and weighted_ok
    verdict(4, ok, f"permuted perfect = 1.0: {perm_ok}; half case = {half}; "
                   f"size-weighted per-cluster = ACC: {weighted_ok}")


# --- 5: k-means monotone inertia ---------------------------------------------

def test_criterion_5_kmeans_monotone():
    violations = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(150, 4)) + rng.integers(0, 5, size=(150, 1)) * 1.5
        # _lloyd asserts per iteration; re-check the recorded history too
        h = np.array(kmeans(x, int(rng.integers(2, 8)), seed=seed, n_init=1).inertia_history)
        violations += int(np.sum(np.diff(h) > 1e-12 * h[0]))
    verdict(5, violations == 0, f"{violations} inertia increases over 100 seeded runs")


# --- 6, 10: desk-scale clustering ------------------------------------------

@pytest.fixture(scope="module")
def clustering_report():
    t0 = time.perf_counter()
    report = run_blobs_clustering(seed=0)
    return report, time.perf_counter() - t0


def test_criterion_6_clustering(clustering_report):
    report, elapsed = clustering_report
    dec, init = report.raw("dec", "primary"), report.cells["dec/primary"]["init_raw"]
    a = len(dec) == 5 and all(d + EPS >= i for d, i in zip(dec, init))
    km_ifl, km_primary = report.mean("kmeans", "ifl"), report.mean("kmeans", "primary")
    b = km_ifl >= 0.90 and km_primary >= 0.95
    c = report.mean("dec", "primary+ifl") + EPS >= report.mean("dec", "primary") - 0.01
    widths = report.cells["kmeans/ifl"]["width"]
    ok = a and b and c and elapsed < 600 and widths == [5] * 5
    verdict(6, ok, f"(a) DEC {dec} vs init {init}; (b) kmeans ifl {km_ifl:.4f}, primary "
                   f"{km_primary:.4f}; (c) DEC primary+ifl {report.mean('dec', 'primary+ifl'):.4f} "
                   f"vs primary {report.mean('dec', 'primary'):.4f}; {elapsed:.0f}s")


def _canonical(report):
    d = report.to_dict()
    d.pop("timing")  # wall-clock, never reproducible
    return dumps_report(d)


def test_criterion_10_determinism(clustering_report):
    first, _ = clustering_report
    second = run_blobs_clustering(seed=0)
    same = _canonical(first) == _canonical(second)
    verdict(10, same, f"repeat of criterion 6 with seed 0 is {'bit-identical' if same else 'DIFFERENT'}")


# --- 7: desk-scale classification ---------------------------------------------

def _technique1_contract():
    (x_tr, y_tr), (x_te, _) = noisy_split()
    net, s = desk_net(), 4
    raw_tr = core.ifl_classification_train_features(x_tr, y_tr, s, 10, net, seed=0)
    raw_te = core.ifl_classification_test_features(x_tr, y_tr, x_te, s, net, seed=0)
    t1_tr, t1_te = core.package_technique1(raw_tr, y_tr), core.package_technique1(raw_te)
    rows_ok = len(t1_tr) == len(x_tr) * s and len(t1_te) == len(x_te) * s and t1_tr.width == 3
    hard = knn_predict(t1_tr.features, t1_tr.labels, t1_te.features, 5)
    ids, labels = core.aggregate_versions(hard, t1_te.instance_id, t1_te.column("weight"), s)
    _, scores = mlp_classify(t1_tr.features, t1_tr.labels, t1_te.features, epochs=20, n_classes=s)
    ids2, labels2 = core.aggregate_versions(scores, t1_te.instance_id, n_versions=s)
    agg_ok = all(np.array_equal(i, np.arange(len(x_te))) for i in (ids, ids2)) \
        and len(labels) == len(labels2) == len(x_te)
    return rows_ok, agg_ok, len(t1_tr), len(t1_te)


def test_criterion_7_classification():
    t0 = time.perf_counter()
    report = run_blobs_classification(seed=0, technique=2)
    per_repeat = {}
    for m in ("knn", "mlp"):
        prim, both = report.raw(m, "primary"), report.raw(m, "primary+ifl")
        per_repeat[m] = len(prim) == len(both) == 5 and all(
            b + EPS >= p - 0.01 for p, b in zip(prim, both))
    rows_ok, agg_ok, n_tr, n_te = _technique1_contract()
    elapsed = time.perf_counter() - t0
    ok = all(per_repeat.values()) and rows_ok and agg_ok and elapsed < 900
    verdict(7, ok, "; ".join(
        f"{m} primary {report.raw(m, 'primary')} vs primary+ifl {report.raw(m, 'primary+ifl')}"
        for m in ("knn", "mlp")) + f"; technique 1 rows {n_tr}/{n_te} (n*s: {rows_ok}), "
        f"one label per instance: {agg_ok}; {elapsed:.0f}s")


# --- 8: shape contracts --------------------------------------------------------

def test_criterion_8_shapes():
    net = IflConfig(hidden=(16,), latent=3, ae_epochs=5, batch_size=32,
                    dec=DecConfig(max_iter=20, batch_size=32))
    x4, _ = gaussian_blobs(80, 4, 6, seed=0)
    clustering_width = core.ifl_cluster_features(x4, 4, 4, net, seed=0).width
    x6, y6 = gaussian_blobs(120, 6, 6, seed=0)
    raw = core.ifl_classification_train_features(x6, y6, 6, 4, net, seed=0)
    t1 = core.package_technique1(raw, y6).width
    t2 = core.package_technique2(raw).width
    th = (trackability_threshold(10, 4), trackability_threshold(10, 10))
    ok = (clustering_width == 5 and t1 == 3 and t2 == 8
          and abs(th[0] - 0.35) < 1e-12 and abs(th[1] - 0.20) < 1e-12)
    verdict(8, ok, f"clustering width (s=4) {clustering_width}, technique 1 width {t1}, "
                   f"technique 2 width (s=6) {t2}, thresholds {th[0]:.2f}/{th[1]:.2f}")


# --- 9: MNIST sanity (optional) ----------------------------------------------------

def _find(directory, stem):
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx")):
        if (directory / name).exists():
            return directory / name
    raise FileNotFoundError(f"{stem} not found in {directory}")


@pytest.mark.slow
@pytest.mark.mnist
def test_criterion_9_mnist():
    from ifl.datasets import load_idx

    root = os.environ.get("IFL_MNIST_DIR")
    if not root:
        record_verdict(9, True, "SKIPPED (set IFL_MNIST_DIR to the MNIST IDX directory)")
        pytest.skip("IFL_MNIST_DIR not set")
    root = Path(root)
    t0 = time.perf_counter()
    ds = load_idx(_find(root, "train-images-idx3-ubyte"), _find(root, "train-labels-idx1-ubyte"),
                  limit=10000)
    km = clustering_accuracy(kmeans(ds.x, 10, seed=0).assignment, ds.y)
    # 784-256-64-10 encoder, reduced schedule
    cfg = IflConfig(hidden=(256, 64), latent=10, ae_epochs=100, batch_size=256,
                    dec=DecConfig(max_iter=3000, batch_size=256))
    model, _ = core.fit_cluster_model(ds.x, 10, cfg, seed=0)
    dec = clustering_accuracy(model.hard, ds.y)
    elapsed = time.perf_counter() - t0
    verdict(9, km >= 0.45 and dec >= 0.65 and elapsed < 3600,
            f"kmeans primary ACC {km:.4f}, DEC primary ACC {dec:.4f}, {elapsed:.0f}s")
