"""Causal rolling-window features over KPI series, plus train-time standardization.

Each KPI contributes its raw value and trailing mean/std over two windows,
so eight KPIs expand to 40 features per minute.  Windows look strictly
backward (inclusive of the current minute) and shrink near the start of a
segment, so features at minute ``t`` never depend on later minutes.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .types import KPI_NAMES

DEFAULT_WINDOWS: tuple[int, ...] = (5, 15)

#: Divisor floor applied when standardizing, to survive constant features.
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class FeatureSpec:
    """Names and layout of the feature matrix columns.

    Layout: ``[raw x8 | mean_w1 x8 | std_w1 x8 | mean_w2 x8 | std_w2 x8]``.
    """

    base_names: tuple[str, ...] = KPI_NAMES
    windows: tuple[int, ...] = DEFAULT_WINDOWS

    @property
    def dimension(self) -> int:
        return len(self.base_names) * (1 + 2 * len(self.windows))

    @property
    def names(self) -> tuple[str, ...]:
        cols = list(self.base_names)
        for w in self.windows:
            cols += [f"{b}_mean{w}" for b in self.base_names]
            cols += [f"{b}_std{w}" for b in self.base_names]
        return tuple(cols)

    def group_indices(self) -> dict[str, list[int]]:
        """Column indices belonging to each base KPI (used for grouped attribution)."""
        n = len(self.base_names)
        blocks = 1 + 2 * len(self.windows)
        return {b: [j * n + k for j in range(blocks)] for k, b in enumerate(self.base_names)}

    def to_dict(self) -> dict:
        return {"base_names": list(self.base_names), "windows": list(self.windows)}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        return cls(base_names=tuple(d["base_names"]), windows=tuple(d["windows"]))


def _rolling_mean_std(col: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Trailing mean and population std; the window expands over the first rows."""
    T = col.size
    means = np.empty(T)
    stds = np.empty(T)
    head = min(window - 1, T)
    for i in range(head):
        seg = col[: i + 1]
        means[i] = seg.mean()
        stds[i] = seg.std()
    if T >= window:
        sw = sliding_window_view(col, window)
        means[window - 1:] = sw.mean(axis=1)
        stds[window - 1:] = sw.std(axis=1)
    return means, stds


def featurize(values: np.ndarray, spec: FeatureSpec = FeatureSpec()) -> np.ndarray:
    """Expand a (T, n_kpi) matrix into a (T, dimension) causal feature matrix."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != len(spec.base_names):
        raise ValueError(f"expected (T, {len(spec.base_names)}) input, got {values.shape}")
    if values.shape[0] == 0:
        raise ValueError("cannot featurize an empty series")
    n = len(spec.base_names)
    out = np.empty((values.shape[0], spec.dimension))
    out[:, :n] = values
    off = n
    for w in spec.windows:
        for k in range(n):
            m, s = _rolling_mean_std(values[:, k], w)
            out[:, off + k] = m
            out[:, off + n + k] = s
        off += 2 * n
    return out


@dataclass
class Standardizer:
    """Column-wise (x - mean) / std, with the std floored to avoid blow-ups."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError("need a non-empty 2-D matrix to fit")
        return cls(mean=X.mean(axis=0), std=X.std(axis=0))

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.mean.size:
            raise ValueError(f"expected {self.mean.size} columns, got {X.shape[-1]}")
        return (X - self.mean) / np.maximum(self.std, STD_FLOOR)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(mean=np.asarray(d["mean"], dtype=np.float64),
                   std=np.asarray(d["std"], dtype=np.float64))


def save_features_csv(X: np.ndarray, path, spec: FeatureSpec = FeatureSpec(),
                      t: np.ndarray | None = None) -> None:
    """Persist a feature matrix with a named header (``t`` column first if given)."""
    names = spec.names
    if X.ndim != 2 or X.shape[1] != len(names):
        raise ValueError(f"expected (T, {len(names)}) matrix, got {X.shape}")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if t is None:
            writer.writerow(names)
            for row in X:
                writer.writerow([f"{v:.10g}" for v in row])
        else:
            writer.writerow(("t",) + names)
            for ti, row in zip(t, X):
                writer.writerow([int(ti)] + [f"{v:.10g}" for v in row])


def load_features_csv(path, spec: FeatureSpec = FeatureSpec()) -> tuple[np.ndarray | None, np.ndarray]:
    """Inverse of :func:`save_features_csv`; returns ``(t_or_None, X)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"empty feature CSV {path}")
    header = tuple(rows[0])
    names = spec.names
    if header == names:
        X = np.array([[float(v) for v in r] for r in rows[1:]])
        return None, X
    if header == ("t",) + names:
        t = np.array([int(r[0]) for r in rows[1:]], dtype=np.int64)
        X = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
        return t, X
    raise ValueError(f"unexpected feature CSV header in {path}")
