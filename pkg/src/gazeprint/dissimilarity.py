"""Dissimilarity scores between unit-mass feature grids and matrix assembly.

All scores follow the convention 0 = identical. Four metric tags exist:
``mse``, ``min``, ``kld`` and ``eucl``; the last one is not a pairwise score
but a transformation of a whole KLD matrix.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform

from ._validation import check_same_shape, check_unit_mass
from .core import TrialLabel, fmt
from .exceptions import DegenerateMatrix, MalformedFile, ShapeError

METRICS = ("mse", "min", "kld", "eucl")
DEFAULT_EPSILON = 1e-10


@dataclass(frozen=True, eq=False)
class FeatureGrid:
    cells: np.ndarray
    label: TrialLabel | None = None

    def __post_init__(self):
        cells = check_unit_mass(self.cells).copy()
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def from_map(cls, m) -> "FeatureGrid":
        """From a density map (whole grid) or a spectrum (retained box only)."""
        cells = m.retained() if hasattr(m, "retained") else m.grid
        return cls(cells, m.label)


def _cells(a) -> np.ndarray:
    return a.cells if isinstance(a, FeatureGrid) else np.asarray(a, dtype=float)


def d_mse(P, R) -> float:
    p, r = _cells(P), _cells(R)
    check_same_shape(p, r)
    return float(np.sum((p - r) ** 2))


def d_min(P, R) -> float:
    """One minus the histogram overlap sum(min(P, R)).

    Evaluated as half the L1 distance, which equals 1 - sum(min) for
    unit-mass inputs and is exactly zero and exactly symmetric.
    """
    p, r = _cells(P), _cells(R)
    check_same_shape(p, r)
    return float(min(max(0.5 * np.sum(np.abs(p - r)), 0.0), 1.0))


def _floor(a: np.ndarray, epsilon: float) -> np.ndarray:
    a = np.maximum(a, epsilon)
    return a / a.sum()


def _kld_pair(p, lp, r, lr, epsilon) -> float:
    d1 = float(np.sum(p * (lp - lr)))
    d2 = float(np.sum(r * (lr - lp)))
    if d1 <= epsilon and d2 <= epsilon:
        return 0.0
    d1, d2 = max(d1, 0.0), max(d2, 0.0)
    # harmonic mean 2 / (1/d1 + 1/d2), written to survive a zero term
    return 2.0 * d1 * d2 / (d1 + d2)


def d_kld_sym(P, R, epsilon: float = DEFAULT_EPSILON) -> float:
    """Harmonic mean of the two directed Kullback-Leibler divergences."""
    p, r = _cells(P), _cells(R)
    check_same_shape(p, r)
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    p, r = _floor(p, epsilon), _floor(r, epsilon)
    return _kld_pair(p, np.log(p), r, np.log(r), epsilon)


@dataclass(frozen=True, eq=False)
class DissimilarityMatrix:
    values: np.ndarray
    labels: tuple[TrialLabel, ...] | None
    metric_tag: str

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ShapeError(f"dissimilarity matrix must be square, got {v.shape}")
        if self.labels is not None:
            labels = tuple(self.labels)
            if len(labels) != v.shape[0]:
                raise ShapeError("one label per matrix row is required")
            object.__setattr__(self, "labels", labels)
        if self.metric_tag not in METRICS:
            raise ValueError(f"unknown metric {self.metric_tag!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def subset(self, indices: Sequence[int]) -> "DissimilarityMatrix":
        idx = list(indices)
        labels = None if self.labels is None else tuple(self.labels[i] for i in idx)
        return DissimilarityMatrix(self.values[np.ix_(idx, idx)], labels, self.metric_tag)


def _pairwise(features: list[np.ndarray], score) -> np.ndarray:
    k = len(features)
    out = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            out[i, j] = out[j, i] = score(i, j)
    return out


def build_matrix(features: Sequence, metric: str, epsilon: float = DEFAULT_EPSILON,
                 labels: Sequence[TrialLabel] | None = None) -> DissimilarityMatrix:
    """All pairwise scores of ``features`` under ``metric``.

    ``features`` may be :class:`FeatureGrid` objects or plain arrays. For
    ``eucl`` the KLD matrix is built first and then transformed.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {', '.join(METRICS)}")
    if len(features) < 2:
        raise ValueError("need at least two features to build a matrix")
    cells = [_cells(f) for f in features]
    if len({c.shape for c in cells}) != 1:
        raise ShapeError("features have inconsistent shapes")
    if labels is None and all(isinstance(f, FeatureGrid) and f.label is not None for f in features):
        labels = [f.label for f in features]

    if metric == "mse":
        values = _pairwise(cells, lambda i, j: d_mse(cells[i], cells[j]))
    elif metric == "min":
        values = _pairwise(cells, lambda i, j: d_min(cells[i], cells[j]))
    else:
        floored = [_floor(c, epsilon) for c in cells]
        logs = [np.log(c) for c in floored]
        values = _pairwise(cells, lambda i, j: _kld_pair(floored[i], logs[i], floored[j], logs[j], epsilon))
    out = DissimilarityMatrix(values, labels, "kld" if metric == "eucl" else metric)
    if metric == "eucl":
        out = d_eucl_from_kld(out)
    return out


def d_eucl_from_kld(m: DissimilarityMatrix) -> DissimilarityMatrix:
    """Euclidean distances between KLD matrix rows, scaled so the maximum is 1."""
    if m.metric_tag != "kld":
        raise ValueError(f"expected a KLD matrix, got {m.metric_tag!r}")
    if not np.any(m.values):
        raise DegenerateMatrix("KLD matrix is all zero")
    dist = squareform(pdist(m.values, metric="euclidean"))
    top = dist.max()
    if top == 0:
        raise DegenerateMatrix("all KLD rows are identical")
    return DissimilarityMatrix(dist / top, m.labels, "eucl")


def serialize_matrix(m: DissimilarityMatrix) -> str:
    if m.labels is None:
        raise ValueError("a matrix needs labels to be written")
    buf = io.StringIO()
    buf.write(f"# metric={m.metric_tag}\n")
    w = csv.writer(buf, lineterminator="\n")
    names = [str(lab) for lab in m.labels]
    w.writerow([""] + names)
    for name, row in zip(names, m.values):
        w.writerow([name] + [fmt(v) for v in row])
    return buf.getvalue()


def parse_matrix(text: str | bytes) -> DissimilarityMatrix:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    metric = None
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            for tok in line[1:].split():
                key, _, value = tok.partition("=")
                if key == "metric":
                    metric = value
        elif line.strip():
            body.append(line)
    rows = list(csv.reader(body))
    if metric is None or len(rows) < 2:
        raise MalformedFile("matrix file lacks a metric comment or data rows")
    labels = [TrialLabel.parse(s) for s in rows[0][1:]]
    if [TrialLabel.parse(r[0]) for r in rows[1:]] != labels:
        raise MalformedFile("row labels do not match column labels")
    try:
        values = np.array([[float(c) for c in r[1:]] for r in rows[1:]])
        return DissimilarityMatrix(values, labels, metric)
    except ValueError as exc:
        raise MalformedFile(f"bad matrix file: {exc}") from exc


def is_symmetric(m: DissimilarityMatrix, tol: float = 1e-9) -> bool:
    v = m.values
    return bool(np.all(np.abs(v - v.T) <= tol) and np.all(np.diag(v) == 0))

