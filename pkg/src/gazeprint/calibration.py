"""Affine recalibration of fixation positions against known target positions."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .core import EventKind, StimulusEvent
from .exceptions import DegenerateFit, MalformedFile
from .fixations import Fixation

CONDITION_LIMIT = 1e10

Point = tuple[float, float]


@dataclass(frozen=True)
class AffineTransform:
    """Maps a measured point p to ``A @ p + (tx, ty)``."""

    a11: float = 1.0
    a12: float = 0.0
    a21: float = 0.0
    a22: float = 1.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self):
        if self.determinant == 0:
            raise DegenerateFit("affine transform is not invertible")

    @property
    def determinant(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a11, self.a12, self.tx], [self.a21, self.a22, self.ty], [0.0, 0.0, 1.0]])

    @classmethod
    def from_matrix(cls, m) -> "AffineTransform":
        m = np.asarray(m, float)
        return cls(m[0, 0], m[0, 1], m[1, 0], m[1, 1], m[0, 2], m[1, 2])

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls()

    def inverse(self) -> "AffineTransform":
        return AffineTransform.from_matrix(np.linalg.inv(self.matrix))

    def compose(self, other: "AffineTransform") -> "AffineTransform":
        """``self`` applied after ``other``."""
        return AffineTransform.from_matrix(self.matrix @ other.matrix)

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, float).reshape(-1, 2)
        a = np.array([[self.a11, self.a12], [self.a21, self.a22]])
        return pts @ a.T + np.array([self.tx, self.ty])

    def params(self) -> np.ndarray:
        return np.array([self.a11, self.a12, self.a21, self.a22, self.tx, self.ty])

    def to_json(self) -> str:
        fields = ("a11", "a12", "a21", "a22", "tx", "ty")
        return json.dumps({k: float(getattr(self, k)) for k in fields}, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "AffineTransform":
        try:
            doc = json.loads(text)
            return cls(**{k: float(doc[k]) for k in ("a11", "a12", "a21", "a22", "tx", "ty")})
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedFile(f"invalid transform file: {exc}") from exc


def _split(pairs) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray([(m[0], m[1], t[0], t[1]) for m, t in pairs], float).reshape(-1, 4)
    return arr[:, :2], arr[:, 2:]


def _normalizer(pts: np.ndarray) -> np.ndarray:
    """Similarity that centers ``pts`` and scales them to unit RMS radius."""
    mean = pts.mean(axis=0)
    rms = math.sqrt(((pts - mean) ** 2).sum(axis=1).mean())
    if rms == 0:
        raise DegenerateFit("all measured points coincide")
    s = 1.0 / rms
    return np.array([[s, 0, -s * mean[0]], [0, s, -s * mean[1]], [0, 0, 1.0]])


def _solve(measured: np.ndarray, target: np.ndarray) -> AffineTransform:
    nm = _normalizer(measured)
    m = measured @ nm[:2, :2].T + nm[:2, 2]
    design = np.column_stack([m, np.ones(len(m))])
    normal = design.T @ design
    if np.linalg.cond(normal) > CONDITION_LIMIT:
        raise DegenerateFit("measured points are collinear or nearly so")
    coef = np.linalg.solve(normal, design.T @ target)  # 3x2, one column per output axis
    h = np.eye(3)
    h[:2, :] = coef.T
    return AffineTransform.from_matrix(h @ nm)


def fit_affine(pairs: Sequence[tuple[Point, Point]], trim: float = 0.0) -> AffineTransform:
    """Least-squares affine map taking measured points onto target points.

    The system is solved through its normal equations after centering and
    scaling the measured points. With ``trim > 0`` the fit is repeated once
    without the worst ``trim`` fraction of pairs by residual.
    """
    if len(pairs) < 3:
        raise DegenerateFit(f"need at least 3 point pairs, got {len(pairs)}")
    if not 0 <= trim < 1:
        raise ValueError("trim must be in [0, 1)")
    measured, target = _split(pairs)
    fit = _solve(measured, target)
    if trim > 0:
        err = ((fit.apply(measured) - target) ** 2).sum(axis=1)
        keep = max(3, int(round(len(err) * (1 - trim))))
        idx = np.sort(np.argsort(err, kind="stable")[:keep])
        fit = _solve(measured[idx], target[idx])
    return fit


def residual(t: AffineTransform, pairs: Sequence[tuple[Point, Point]]) -> float:
    """Sum of squared distances between mapped measured points and targets."""
    if not pairs:
        return 0.0
    measured, target = _split(pairs)
    return float(((t.apply(measured) - target) ** 2).sum())


def apply_affine(t: AffineTransform, fixs: Sequence[Fixation]) -> list[Fixation]:
    if not fixs:
        return []
    moved = t.apply([(f.cx, f.cy) for f in fixs])
    return [replace(f, cx=float(x), cy=float(y)) for f, (x, y) in zip(fixs, moved)]


def collect_pairs(fixs: Sequence[Fixation], events: Sequence[StimulusEvent], radius: float):
    """Pair each target with the first fixation that starts during it nearby.

    Returns ``(measured_centroid, target_center)`` tuples.
    """
    ordered = sorted(fixs, key=lambda f: f.t_start)
    starts = np.array([f.t_start for f in ordered])
    r2 = radius * radius
    pairs = []
    for e in events:
        if e.kind is not EventKind.TARGET:
            continue
        lo = np.searchsorted(starts, e.t_onset, side="left")
        hi = np.searchsorted(starts, e.t_offset, side="left")
        for f in ordered[lo:hi]:
            if (f.cx - e.center_x) ** 2 + (f.cy - e.center_y) ** 2 <= r2:
                pairs.append(((f.cx, f.cy), (e.center_x, e.center_y)))
                break
    return pairs


class AffineRecalibrator(TransformerMixin, BaseEstimator):
    """Fit on one trial's fixations and events, then correct its fixations.

    ``fit(fixations, events)`` learns ``transform_``; ``transform`` applies it.
    """

    def __init__(self, radius=120.0, trim=0.0):
        self.radius = radius
        self.trim = trim

    def fit(self, X, y):
        self.pairs_ = collect_pairs(X, y, self.radius)
        self.transform_ = fit_affine(self.pairs_, trim=self.trim)
        self.residual_ = residual(self.transform_, self.pairs_)
        return self

    def transform(self, X):
        check_is_fitted(self, "transform_")
        return apply_affine(self.transform_, X)

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y).transform(X)
