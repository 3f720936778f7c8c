"""Labelled datasets, CSV ingestion, and unit-box normalisation."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = [
    "LabeledDataset",
    "NormalizationRecord",
    "load_dataset_csv",
    "normalize_unit_box",
]


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Ordered (x, y) pairs with a shared input dimension."""

    X: np.ndarray  # (N, n)
    y: np.ndarray  # (N,)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} inputs but {y.shape[0]} targets")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.X.shape[0]

    @property
    def dimension(self):
        return self.X.shape[1]


@dataclass(frozen=True)
class NormalizationRecord:
    """Invertible affine maps taking each column into [0, 1].

    Constant columns (max == min) map to 0.5 and are flagged; their inverse
    returns the original constant.
    """

    x_min: tuple
    x_max: tuple
    y_min: float
    y_max: float
    constant_x: tuple  # column indices with zero range
    constant_y: bool

    @classmethod
    def from_data(cls, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        x_min = X.min(axis=0)
        x_max = X.max(axis=0)
        const = tuple(int(j) for j in np.where(x_max == x_min)[0])
        y_min, y_max = float(y.min()), float(y.max())
        return cls(
            x_min=tuple(map(float, x_min)),
            x_max=tuple(map(float, x_max)),
            y_min=y_min,
            y_max=y_max,
            constant_x=const,
            constant_y=y_min == y_max,
        )

    @classmethod
    def from_bounds(cls, bounds):
        """Record for a known box [lo_j, hi_j] per dimension (no y map)."""
        lo = [float(b[0]) for b in bounds]
        hi = [float(b[1]) for b in bounds]
        const = tuple(j for j in range(len(lo)) if lo[j] == hi[j])
        return cls(
            x_min=tuple(lo), x_max=tuple(hi), y_min=0.0, y_max=1.0,
            constant_x=const, constant_y=False,
        )

    def _ranges(self):
        lo = np.asarray(self.x_min)
        span = np.asarray(self.x_max) - lo
        return lo, span

    def normalize_x(self, X):
        X = np.asarray(X, dtype=float)
        lo, span = self._ranges()
        safe = np.where(span == 0.0, 1.0, span)
        out = (X - lo) / safe
        if self.constant_x:
            out[..., list(self.constant_x)] = 0.5
        return out

    def denormalize_x(self, Xn):
        Xn = np.asarray(Xn, dtype=float)
        lo, span = self._ranges()
        out = lo + Xn * span
        if self.constant_x:
            out[..., list(self.constant_x)] = lo[list(self.constant_x)]
        return out

    def normalize_y(self, y):
        y = np.asarray(y, dtype=float)
        if self.constant_y:
            return np.full_like(y, 0.5)
        return (y - self.y_min) / (self.y_max - self.y_min)

    def denormalize_y(self, yn):
        yn = np.asarray(yn, dtype=float)
        if self.constant_y:
            return np.full_like(yn, self.y_min)
        return self.y_min + yn * (self.y_max - self.y_min)


def load_dataset_csv(path) -> LabeledDataset:
    """Read a dataset from a CSV file with header x1,...,xn,y."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        n = len(header) - 1
        expected = [f"x{i + 1}" for i in range(n)] + ["y"]
        if n < 1 or header != expected:
            raise ValueError(
                f"{path}: header must be x1,...,xn,y; got {','.join(header)}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != n + 1:
                raise ValueError(
                    f"{path}:{lineno}: expected {n + 1} cells, got {len(row)}"
                )
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric cell") from None
            if not all(np.isfinite(vals)):
                raise ValueError(f"{path}:{lineno}: non-finite value")
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=float)
    return LabeledDataset(X=arr[:, :n], y=arr[:, n])


def normalize_unit_box(data: LabeledDataset):
    """Map each input column and the target affinely into [0, 1].

    Returns the normalised dataset and the invertible record of the maps.
    """
    rec = NormalizationRecord.from_data(data.X, data.y)
    return LabeledDataset(X=rec.normalize_x(data.X), y=rec.normalize_y(data.y)), rec
