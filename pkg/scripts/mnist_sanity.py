"""MNIST sanity run: k-means and DEC on a subsample of the IDX training set.

Expects the standard train-images/train-labels IDX files (optionally .gz)
in --data-dir.
"""
import argparse
import json
import logging
import time
from pathlib import Path

from ifl.cluster import clustering_accuracy, kmeans
from ifl.core import IflConfig, fit_cluster_model
from ifl.datasets import load_idx
from ifl.dec import DecConfig


def find(directory, stem):
    for name in (stem, stem + ".gz"):
        if (directory / name).exists():
            return directory / name
    raise SystemExit(f"{stem}[.gz] not found in {directory}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data-dir", type=Path, required=True)
    ap.add_argument("--limit", type=int, default=10000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--ae-epochs", type=int, default=100)
    ap.add_argument("--dec-max-iter", type=int, default=3000)
    ap.add_argument("--out", default="mnist_sanity.json")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    t0 = time.perf_counter()
    ds = load_idx(find(args.data_dir, "train-images-idx3-ubyte"),
                  find(args.data_dir, "train-labels-idx1-ubyte"), limit=args.limit)
    km = clustering_accuracy(kmeans(ds.x, 10, seed=args.seed).assignment, ds.y)
    cfg = IflConfig(hidden=(256, 64), latent=10, ae_epochs=args.ae_epochs, batch_size=256,
                    dec=DecConfig(max_iter=args.dec_max_iter, batch_size=256))
    model, train_log = fit_cluster_model(ds.x, 10, cfg, args.seed)
    result = {
        "n": ds.n,
        "kmeans_acc": km,
        "dec_init_acc": clustering_accuracy(model.init, ds.y),
        "dec_acc": clustering_accuracy(model.hard, ds.y),
        "dec_converged": model.converged,
        "dec_iterations": model.n_iter,
        "ae_final_loss": train_log.losses[-1] if train_log.losses else None,
        "seconds": time.perf_counter() - t0,
    }
    print(json.dumps(result, indent=2))
    Path(args.out).write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
