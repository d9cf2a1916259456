"""CSV/JSON writers for feature tables, reports and 2-D projections."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .core import IflFeatureTable
from .harness import ExperimentReport


def _fmt(v):
    return "%.17g" % v


def export_features(table: IflFeatureTable, path):
    header = ["instance_id"]
    if table.version_id is not None:
        header.append("version_id")
    header += list(table.columns)
    if table.labels is not None:
        header.append("label")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(table)):
            row = [str(int(table.instance_id[i]))]
            if table.version_id is not None:
                row.append(str(int(table.version_id[i])))
            row += [_fmt(v) for v in table.features[i]]
            if table.labels is not None:
                row.append(str(int(table.labels[i])))
            w.writerow(row)


def load_features(path, mode="clustering") -> IflFeatureTable:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array(body, dtype=np.float64).reshape(len(body), len(header))
    cols = list(header)
    version = labels = None
    ids = data[:, cols.index("instance_id")].astype(np.int64)
    if "version_id" in cols:
        version = data[:, cols.index("version_id")].astype(np.int64)
    if "label" in cols:
        labels = data[:, cols.index("label")].astype(np.int64)
    feat_cols = [c for c in cols if c not in ("instance_id", "version_id", "label")]
    feats = data[:, [cols.index(c) for c in feat_cols]]
    s = sum(c.startswith("weight_") for c in feat_cols) or None
    return IflFeatureTable(mode, feat_cols, feats, ids, version, labels, s)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps_report(report) -> str:
    d = report.to_dict() if isinstance(report, ExperimentReport) else report
    return json.dumps(_jsonable(d), indent=2, sort_keys=True) + "\n"


def export_report(report, path):
    Path(path).write_text(dumps_report(report), encoding="utf-8")


def load_report(path) -> ExperimentReport:
    return ExperimentReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def pca_2d(z) -> np.ndarray:
    """Top-two principal coordinates; pads with zeros when fewer exist.

    Component signs are fixed so the largest-magnitude loading is positive.
    """
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    centered = z - z.mean(axis=0)
    if z.shape[1] == 0 or not np.any(centered):
        return np.zeros((len(z), 2))
    _, sv, vt = np.linalg.svd(centered, full_matrices=False)
    k = min(2, vt.shape[0])
    vt = vt[:k]
    flip = np.sign(vt[np.arange(k), np.argmax(np.abs(vt), axis=1)])
    coords = centered @ (vt * flip[:, None]).T
    coords[:, sv[:k] <= 1e-12 * max(sv[0], 1.0)] = 0.0
    if k < 2:
        coords = np.hstack([coords, np.zeros((len(z), 2 - k))])
    return coords


def export_projection(z, assignments, path):
    coords = pca_2d(z)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "cluster"])
        for (a, b), c in zip(coords, np.asarray(assignments)):
            w.writerow([_fmt(a), _fmt(b), int(c)])
    return coords
