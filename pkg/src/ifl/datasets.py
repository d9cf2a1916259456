"""Dataset loaders: CSV and IDX (MNIST-style) files."""
from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
SCALINGS = ("none", "divide-by-max", "divide-by-two")


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray | None = None
    # original label value for each contiguous class index
    label_values: list | None = None
    name: str = ""

    @property
    def n(self):
        return len(self.x)

    @property
    def n_classes(self):
        return None if self.y is None else len(self.label_values)


def apply_scaling(x, rule):
    if rule == "none":
        return x
    if rule == "divide-by-max":
        m = np.max(np.abs(x)) if x.size else 0.0
        return x / m if m > 0 else x
    if rule == "divide-by-two":
        return x / 2.0
    raise ValueError(f"unknown scaling {rule!r}")


def _is_number(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def contiguous_labels(raw):
    """Map arbitrary label values onto ``0..k-1`` (sorted order)."""
    values, inverse = np.unique(raw, return_inverse=True)
    return inverse.astype(np.int64), [v.item() if hasattr(v, "item") else v for v in values]


def _looks_like_header(first, second):
    # string label columns are non-numeric in every row, so compare against row 2
    if second is None:
        return not any(_is_number(c) for c in first)
    return any(not _is_number(a) and _is_number(b) for a, b in zip(first, second))


def load_csv(path, label_column=None, scaling="none") -> Dataset:
    """Numeric CSV with an optional single header row.

    ``label_column`` is a column index or, with a header, a column name.
    Labels are remapped to contiguous integers; the originals are kept in
    ``label_values``.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [(i, row) for i, row in enumerate(csv.reader(fh), start=1) if row]
    if not rows:
        raise DataFormatError(f"{path}: file is empty")
    header = None
    if _looks_like_header(rows[0][1], rows[1][1] if len(rows) > 1 else None):
        header = [c.strip() for c in rows[0][1]]
        rows = rows[1:]
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    width = len(header) if header else len(rows[0][1])
    label_idx = None
    if label_column is not None:
        if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
            if header is None or label_column not in header:
                raise DataFormatError(f"{path}: label column {label_column!r} not found")
            label_idx = header.index(label_column)
        else:
            idx = int(label_column)
            if not -width <= idx < width:
                raise DataFormatError(f"{path}: label column {label_column} out of range")
            label_idx = idx % width
    values = np.empty((len(rows), width))
    labels_raw = []
    for r, (lineno, row) in enumerate(rows):
        if len(row) != width:
            raise DataFormatError(f"{path}: line {lineno}: expected {width} fields, got {len(row)}")
        for c, cell in enumerate(row):
            try:
                values[r, c] = float(cell)
            except ValueError:
                if c == label_idx:
                    values[r, c] = np.nan
                    continue
                raise DataFormatError(f"{path}: line {lineno}, column {c + 1}: "
                                      f"non-numeric value {cell!r}") from None
        if label_idx is not None:
            labels_raw.append(row[label_idx].strip())
    y = label_values = None
    if label_idx is not None:
        keep = [c for c in range(width) if c != label_idx]
        raw = values[:, label_idx]
        if np.all(np.isfinite(raw)):
            raw = raw.astype(np.int64) if np.all(raw == np.round(raw)) else raw
        else:
            raw = np.array(labels_raw)
        y, label_values = contiguous_labels(raw)
        values = values[:, keep]
    if not np.all(np.isfinite(values)):
        raise DataFormatError(f"{path}: non-finite feature values")
    return Dataset(apply_scaling(values, scaling), y, label_values, path.stem)


def _read_idx(path, expected_magic):
    path = Path(path)
    data = path.read_bytes()
    if path.suffix == ".gz":
        data = gzip.decompress(data)
    if len(data) < 4:
        raise DataFormatError(f"{path}: truncated header")
    (magic,) = struct.unpack(">I", data[:4])
    if magic != expected_magic:
        raise DataFormatError(f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header_end = 4 + 4 * ndim
    if len(data) < header_end:
        raise DataFormatError(f"{path}: truncated header")
    shape = struct.unpack(f">{ndim}I", data[4:header_end])
    count = int(np.prod(shape))
    if len(data) - header_end < count:
        raise DataFormatError(f"{path}: truncated payload, expected {count} bytes "
                              f"after offset {header_end}, found {len(data) - header_end}")
    return np.frombuffer(data, dtype=np.uint8, count=count, offset=header_end).reshape(shape)


def load_idx(images_path, labels_path=None, scaling="divide-by-max", limit=None) -> Dataset:
    """IDX image/label pair, images flattened to row vectors.

    ``divide-by-max`` divides by 255, the largest unsigned-byte value, so
    pixels land in [0, 1].
    """
    images = _read_idx(images_path, IDX_IMAGES_MAGIC)
    x = images.reshape(len(images), -1).astype(np.float64)
    y = label_values = None
    if labels_path is not None:
        labels = _read_idx(labels_path, IDX_LABELS_MAGIC)
        if len(labels) != len(images):
            raise DataFormatError(f"{labels_path}: {len(labels)} labels for {len(images)} images")
        y, label_values = contiguous_labels(labels.astype(np.int64))
    if limit is not None:
        x = x[:limit]
        y = None if y is None else y[:limit]
    if scaling == "divide-by-max":
        x = x / 255.0
    else:
        x = apply_scaling(x, scaling)
    return Dataset(x, y, label_values, Path(images_path).stem)


def write_idx(path, array, magic):
    """Write a uint8 array as an IDX file (used by tests and fixtures)."""
    array = np.asarray(array, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", magic))
        fh.write(struct.pack(f">{array.ndim}I", *array.shape))
        fh.write(array.tobytes())
