"""Sparse ``<label> <index>:<value> ...`` text and dense CSV dataset files."""

from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd

from src.common.files import atomic_write_text
from src.svm.core import Dataset
from src.svm.errors import DataFormatError, EmptyDatasetError

logger = logging.getLogger(__name__)

CSV_SUFFIXES = {".csv"}


def _parse_label(token: str, line_number: int, remap_binary: bool) -> int:
    try:
        value = float(token)
    except ValueError:
        raise DataFormatError(f"label {token!r} is not a number", line_number) from None
    if value in (1.0, -1.0):
        return int(value)
    if remap_binary and value == 0.0:
        return -1
    raise DataFormatError(
        f"label {token!r} must be +1 or -1"
        + ("" if remap_binary else " (pass remap_binary for 0/1 labels)"),
        line_number,
    )


def _parse_line(
    text: str, line_number: int, remap_binary: bool
) -> tuple[int, dict[int, float]]:
    tokens = text.split()
    label = _parse_label(tokens[0], line_number, remap_binary)
    values: dict[int, float] = {}
    for token in tokens[1:]:
        index_text, sep, value_text = token.partition(":")
        if not sep:
            raise DataFormatError(f"expected <index>:<value>, got {token!r}", line_number)
        try:
            index = int(index_text)
            value = float(value_text)
        except ValueError:
            raise DataFormatError(f"malformed feature {token!r}", line_number) from None
        if index < 1:
            raise DataFormatError(f"feature index {index} must be >= 1", line_number)
        if not math.isfinite(value):
            raise DataFormatError(f"feature {index} is not finite", line_number)
        if index in values:
            raise DataFormatError(f"duplicate feature index {index}", line_number)
        values[index] = value
    return label, values


def load_sparse_text(
    path: Path,
    *,
    remap_binary: bool = False,
    feature_dim: int | None = None,
) -> Dataset:
    """Read a sparse text file; 1-based indices are densified to ``max index`` columns."""

    rows: list[tuple[int, dict[int, float]]] = []
    with Path(path).open(encoding="utf-8") as file:
        for line_number, raw in enumerate(file, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            rows.append(_parse_line(text, line_number, remap_binary))
    if not rows:
        raise EmptyDatasetError(f"{path} contains no samples")

    widest = max((max(values, default=0) for _, values in rows), default=0)
    dim = feature_dim if feature_dim is not None else widest
    if dim < max(widest, 1):
        raise DataFormatError(f"feature index {widest} exceeds feature_dim {feature_dim}")
    features = np.zeros((len(rows), dim), dtype=np.float64)
    for position, (_, values) in enumerate(rows):
        for index, value in values.items():
            features[position, index - 1] = value
    labels = np.array([label for label, _ in rows], dtype=np.int64)
    return Dataset(features=features, labels=labels)


def format_sparse_line(features: np.ndarray, label: int) -> str:
    # The last column is always written so the width survives a reload.
    last = features.shape[0] - 1
    parts = [f"{label:+d}"]
    parts.extend(
        f"{index + 1}:{float(value)!r}"
        for index, value in enumerate(features)
        if value != 0 or index == last
    )
    return " ".join(parts)


def write_sparse_text(dataset: Dataset, path: Path) -> None:
    lines = [
        format_sparse_line(features, int(label))
        for features, label in zip(dataset.features, dataset.labels, strict=True)
    ]
    atomic_write_text(Path(path), "\n".join(lines) + ("\n" if lines else ""))


def load_dense_csv(path: Path, *, remap_binary: bool = False) -> Dataset:
    """Read ``label,f1,f2,...`` rows; a non-numeric first row is taken as a header."""

    try:
        frame = pd.read_csv(path, header=None)
    except pd.errors.EmptyDataError:
        raise EmptyDatasetError(f"{path} contains no samples") from None
    if frame.empty:
        raise EmptyDatasetError(f"{path} contains no samples")
    if pd.to_numeric(frame.iloc[0], errors="coerce").isna().any():
        frame = frame.iloc[1:]
    if frame.empty:
        raise EmptyDatasetError(f"{path} contains no samples")
    numeric = frame.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().any(axis=1)
    if bad.any():
        position = int(np.flatnonzero(bad.to_numpy())[0])
        raise DataFormatError("non-numeric or missing value", int(frame.index[position]) + 1)
    values = numeric.to_numpy(dtype=np.float64)
    labels = [
        _parse_label(str(float(value)), int(frame.index[position]) + 1, remap_binary)
        for position, value in enumerate(values[:, 0])
    ]
    return Dataset(features=values[:, 1:], labels=np.array(labels, dtype=np.int64))


def load_dataset(path: Path, *, remap_binary: bool = False) -> Dataset:
    path = Path(path)
    if path.suffix.casefold() in CSV_SUFFIXES:
        return load_dense_csv(path, remap_binary=remap_binary)
    return load_sparse_text(path, remap_binary=remap_binary)
