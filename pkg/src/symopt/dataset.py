"""Datasets: an input matrix with a target vector, plus CSV loading.

CSV files carry d feature columns followed by one target column; a header row
is detected and skipped. Parse errors report the offending row and column.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray  # (N, d) float64
    y: np.ndarray  # (N,) float64

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        object.__setattr__(self, "X", np.ascontiguousarray(X))
        object.__setattr__(self, "y", np.ascontiguousarray(y))
        if self.X.ndim != 2:
            raise ValueError("X must be 2-D (points x variables)")
        if self.y.ndim != 1 or self.y.shape[0] != self.X.shape[0]:
            raise ValueError("y must be a vector aligned with X rows")
        if self.X.shape[0] < 2:
            raise ValueError("need at least 2 data points")
        if not np.isfinite(self.X).all() or not np.isfinite(self.y).all():
            raise ValueError("dataset contains non-finite entries")

    @property
    def n_variables(self) -> int:
        return self.X.shape[1]

    def split(self, holdout_fraction: float, rng: np.random.Generator):
        """Shuffled (train, test) split; test gets ceil(fraction * N) rows."""
        n = self.X.shape[0]
        n_test = max(1, int(np.ceil(holdout_fraction * n)))
        if n_test >= n:
            raise ValueError("holdout fraction leaves no training data")
        order = rng.permutation(n)
        test_idx, train_idx = order[:n_test], order[n_test:]
        return (
            Dataset(self.X[train_idx], self.y[train_idx]),
            Dataset(self.X[test_idx], self.y[test_idx]),
        )


def load_csv(path, require_variance: bool = True) -> Dataset:
    """Read a feature+target CSV; raises ConfigError with row/col location."""
    rows: list[list[float]] = []
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read dataset: {exc}", field="dataset") from exc
    with handle as fh:
        reader = csv.reader(fh)
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            values = []
            bad_col = None
            for col_no, cell in enumerate(row, start=1):
                try:
                    values.append(float(cell))
                except ValueError:
                    bad_col = col_no
                    break
            if bad_col is not None:
                if row_no == 1 and not rows:
                    continue  # header row
                raise ConfigError(
                    f"{path}: non-numeric cell at row {row_no}, column {bad_col}",
                    field="dataset",
                )
            rows.append(values)
    if len(rows) < 2:
        raise ConfigError(f"{path}: need at least 2 data rows", field="dataset")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ConfigError(f"{path}: ragged rows (widths {sorted(widths)})", field="dataset")
    if widths == {1}:
        raise ConfigError(f"{path}: need at least one feature column", field="dataset")
    data = np.array(rows, dtype=np.float64)
    X, y = data[:, :-1], data[:, -1]
    if require_variance and np.var(y) == 0.0:
        raise ConfigError(f"{path}: target column has zero variance", field="dataset")
    try:
        return Dataset(X, y)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}", field="dataset") from exc
