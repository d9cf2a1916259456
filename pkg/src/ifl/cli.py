"""Command-line entry point: ``ifl {features,cluster,classify,project}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import core
from .core import IflConfig
from .datasets import SCALINGS, Dataset, load_csv, load_idx
from .dec import DecConfig
from .errors import ConfigError, DataFormatError, DegenerateClusterError
from .export import export_features, export_projection, export_report
from .harness import ExperimentConfig, run_classification_experiment, run_clustering_experiment

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


def _ints(text):
    return tuple(int(v) for v in str(text).split(",") if v.strip())


def _words(text):
    return tuple(v.strip() for v in str(text).split(",") if v.strip())


def _add_data_args(p, prefix=""):
    dash = f"--{prefix}" if prefix else "--"
    p.add_argument(f"{dash}csv", help="CSV file of features")
    p.add_argument(f"{dash}idx-images", help="IDX image file")
    p.add_argument(f"{dash}idx-labels", help="IDX label file")


def _add_common(p):
    _add_data_args(p)
    p.add_argument("--label-column", help="label column index or header name (CSV)")
    p.add_argument("--scale", choices=SCALINGS, default=None,
                   help="feature scaling (default: none for CSV, divide-by-max for IDX)")
    p.add_argument("--limit", type=int, help="use only the first N instances")
    p.add_argument("-s", "--clusters", type=int, help="number of clusters / classes")
    p.add_argument("-r", "--folds", type=int, default=10, help="inner folds (default 10)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden", type=_ints, default=(500, 500, 2000),
                   help="encoder hidden widths, comma separated")
    p.add_argument("--latent", type=int, default=10)
    p.add_argument("--ae-epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--dec-max-iter", type=int, default=2000)
    p.add_argument("--dec-tol", type=float, default=0.001)
    p.add_argument("--out", required=True, help="output path")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="ifl", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file of defaults; flags override it")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="write the IFL feature table as CSV")
    _add_common(p)
    p.add_argument("--mode", choices=("clustering", "technique1", "technique2", "raw"),
                   default="clustering")

    p = sub.add_parser("cluster", help="clustering experiment, JSON report")
    _add_common(p)
    p.add_argument("--methods", type=_words, default=("kmeans", "hca-average", "hca-ward", "dec"))
    p.add_argument("--modes", type=_words, default=("primary", "ifl", "primary+ifl"))
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--rescale-ifl", action="store_true")

    p = sub.add_parser("classify", help="classification experiment, JSON report")
    _add_common(p)
    _add_data_args(p, prefix="test-")
    p.add_argument("--methods", type=_words, default=("knn", "mlp"))
    p.add_argument("--modes", type=_words, default=("primary", "ifl", "primary+ifl"))
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--technique", type=int, choices=(1, 2), default=1)
    p.add_argument("--knn-k", type=int, default=5)
    p.add_argument("--mlp-hidden", type=_ints, default=(64,))
    p.add_argument("--mlp-epochs", type=int, default=100)
    p.add_argument("--rescale-ifl", action="store_true")

    p = sub.add_parser("project", help="fit DEC and write a 2-D PCA projection of the latent space")
    _add_common(p)
    return parser


def _load(args, prefix=""):
    csv_path = getattr(args, f"{prefix}csv")
    images = getattr(args, f"{prefix}idx_images")
    labels = getattr(args, f"{prefix}idx_labels")
    if csv_path and images:
        raise ConfigError("give either a CSV file or an IDX pair, not both")
    if csv_path:
        ds = load_csv(csv_path, args.label_column, args.scale or "none")
        if args.limit:
            ds = Dataset(ds.x[:args.limit], None if ds.y is None else ds.y[:args.limit],
                         ds.label_values, ds.name)
        return ds
    if images:
        return load_idx(images, labels, args.scale or "divide-by-max", args.limit)
    raise ConfigError(f"no {prefix or 'input '}data given (--{prefix}csv or --{prefix}idx-images)")


def _ifl_config(args):
    dec = DecConfig(alpha=args.alpha, tol=args.dec_tol, max_iter=args.dec_max_iter,
                    batch_size=args.batch_size, lr=args.lr)
    return IflConfig(tuple(args.hidden), args.latent, args.ae_epochs, args.batch_size, args.lr,
                     dec=dec)


def _clusters(args, ds):
    s = args.clusters or ds.n_classes
    if not s:
        raise ConfigError("number of clusters unknown: pass -s or supply labels")
    return s


def _need_labels(ds, what):
    if ds.y is None:
        raise ConfigError(f"{what} needs labels")


def cmd_features(args):
    ds = _load(args)
    s = _clusters(args, ds)
    cfg = _ifl_config(args)
    if args.mode == "clustering":
        table = core.ifl_cluster_features(ds.x, s, args.folds, cfg, args.seed)
    else:
        _need_labels(ds, f"mode {args.mode}")
        table = core.ifl_classification_train_features(ds.x, ds.y, s, args.folds, cfg, args.seed)
        if args.mode == "technique1":
            table = core.package_technique1(table)
        elif args.mode == "technique2":
            table = core.package_technique2(table)
    export_features(table, args.out)
    logging.info("wrote %d x %d feature table to %s", len(table), table.width, args.out)


def _experiment_config(args, task, s):
    kw = dict(task=task, methods=tuple(args.methods), feature_modes=tuple(args.modes),
              repeats=args.repeats, r=args.folds, s=s, seed=args.seed, ifl=_ifl_config(args),
              rescale_ifl=args.rescale_ifl)
    if task == "classification":
        kw.update(technique=args.technique, knn_k=args.knn_k, mlp_hidden=tuple(args.mlp_hidden),
                  mlp_epochs=args.mlp_epochs)
    return ExperimentConfig(**kw)


def _attach_run_config(report, args, cfg):
    run = {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(args).items()}
    report.config["run"] = run
    report.config["derived_seeds"] = {str(seed): core.run_seeds(seed, cfg.r) for seed in report.seeds}


def cmd_cluster(args):
    ds = _load(args)
    _need_labels(ds, "a clustering experiment (ACC scoring)")
    s = _clusters(args, ds)
    cfg = _experiment_config(args, "clustering", s)
    report = run_clustering_experiment(ds.x, ds.y, cfg)
    _attach_run_config(report, args, cfg)
    export_report(report, args.out)
    _summarize(report)


def cmd_classify(args):
    train = _load(args)
    test = _load(args, "test_")
    _need_labels(train, "classification")
    _need_labels(test, "classification scoring")
    s = _clusters(args, train)
    cfg = _experiment_config(args, "classification", s)
    report = run_classification_experiment((train.x, train.y), (test.x, test.y), cfg)
    _attach_run_config(report, args, cfg)
    export_report(report, args.out)
    _summarize(report)


def cmd_project(args):
    ds = _load(args)
    s = _clusters(args, ds)
    model, _ = core.fit_cluster_model(ds.x, s, _ifl_config(args), args.seed)
    export_projection(model.embed(ds.x), model.hard.assignment, args.out)


def _summarize(report):
    for key, cell in sorted(report.cells.items()):
        if cell["mean"] is None:
            print(f"{key:28s} failed: {cell['errors'][0] if cell['errors'] else '?'}")
        else:
            print(f"{key:28s} mean {cell['mean']:.4f}  var {cell['variance']:.6f}")


COMMANDS = {"features": cmd_features, "cluster": cmd_cluster, "classify": cmd_classify,
            "project": cmd_project}


def _apply_config_file(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        defaults = json.loads(Path(known.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {known.config}: {exc}") from exc
    converters = {"hidden": _ints, "mlp_hidden": _ints, "methods": _words, "modes": _words}
    defaults = {k.replace("-", "_"): (converters[k](v) if k in converters and isinstance(v, str)
                                      else tuple(v) if isinstance(v, list) else v)
                for k, v in defaults.items()}
    for action in parser._subparsers._group_actions:
        for sub in action.choices.values():
            sub.set_defaults(**defaults)
    for action in parser._subparsers._group_actions:
        for sub in action.choices.values():
            for a in sub._actions:
                if a.dest in defaults and a.required:
                    a.required = False


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
    except ConfigError as exc:
        print(f"ifl: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(over="ignore", under="ignore")
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"ifl: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"ifl: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DegenerateClusterError, FloatingPointError) as exc:
        print(f"ifl: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
