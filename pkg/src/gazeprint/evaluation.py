"""Verification performance from a labeled dissimilarity matrix.

A comparison is accepted as a match when its score is at or below the
threshold. Every unordered off-diagonal pair is one comparison; it is mated
when both trials belong to the same subject.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_feature_matrix
from .core import fmt
from .dissimilarity import DEFAULT_EPSILON, DissimilarityMatrix, build_matrix
from .exceptions import DegenerateGroundTruth

CURVE_HEADER = ["threshold", "tpr", "fpr", "fnr", "precision", "recall", "f1", "acc"]


@dataclass(frozen=True, eq=False)
class ComparisonSet:
    scores: np.ndarray
    mated: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float).reshape(-1)
        m = np.asarray(self.mated, dtype=bool).reshape(-1)
        if s.shape != m.shape:
            raise ValueError("scores and mated flags differ in length")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "mated", m)

    @property
    def is_degenerate(self) -> bool:
        return not self.mated.any() or bool(self.mated.all())

    def check(self) -> "ComparisonSet":
        if self.is_degenerate:
            raise DegenerateGroundTruth("need both mated and non-mated comparisons")
        return self

    @property
    def n_mated(self) -> int:
        return int(self.mated.sum())

    @property
    def n_nonmated(self) -> int:
        return int((~self.mated).sum())


def comparisons_from_values(values: np.ndarray, subjects: Sequence, strict: bool = True) -> ComparisonSet:
    """One comparison per unordered off-diagonal pair.

    With ``strict`` (the default) a set lacking either mated or non-mated
    pairs raises DegenerateGroundTruth.
    """
    values = np.asarray(values, dtype=float)
    iu, ju = np.triu_indices(values.shape[0], k=1)
    subjects = np.asarray([str(s) for s in subjects])
    c = ComparisonSet(values[iu, ju], subjects[iu] == subjects[ju])
    return c.check() if strict else c


def comparisons_from_matrix(m: DissimilarityMatrix, strict: bool = True) -> ComparisonSet:
    if m.labels is None:
        raise ValueError("matrix rows need trial labels to derive ground truth")
    return comparisons_from_values(m.values, [lab.subject_id for lab in m.labels], strict)


class SweepPoint(NamedTuple):
    threshold: float
    tpr: float
    fpr: float
    fnr: float
    precision: float
    recall: float
    f1: float
    acc: float


def sweep(c: ComparisonSet) -> list[SweepPoint]:
    """Operating points at -inf, every distinct score, and +inf."""
    c.check()
    mated = np.sort(c.scores[c.mated])
    non = np.sort(c.scores[~c.mated])
    thresholds = np.concatenate([[-np.inf], np.unique(c.scores), [np.inf]])
    tp = np.searchsorted(mated, thresholds, side="right")
    fp = np.searchsorted(non, thresholds, side="right")
    n_pos, n_neg = len(mated), len(non)
    points = []
    for th, tpi, fpi in zip(thresholds.tolist(), tp.tolist(), fp.tolist()):
        tpr = tpi / n_pos
        fpr = fpi / n_neg
        if tpi + fpi:
            precision = tpi / (tpi + fpi)
            f1 = 2 * tpi / (2 * tpi + fpi + (n_pos - tpi))
        else:
            precision = f1 = float("nan")
        acc = (tpi + n_neg - fpi) / (n_pos + n_neg)
        points.append(SweepPoint(th, tpr, fpr, 1.0 - tpr, precision, tpr, f1, acc))
    return points


def roc_points(points: Sequence[SweepPoint]) -> list[tuple[float, float]]:
    return [(p.fpr, p.tpr) for p in points]


def det_points(points: Sequence[SweepPoint]) -> list[tuple[float, float]]:
    return [(p.fpr, p.fnr) for p in points]


def roc_convex_hull(roc: Sequence[tuple[float, float]]) -> list[tuple[float, float]]:
    """Upper convex hull of ROC points, from (0, 0) to (1, 1)."""
    pts = sorted(set(roc) | {(0.0, 0.0), (1.0, 1.0)})
    hull: list[tuple[float, float]] = []
    for p in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) >= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    return hull


def auc(points: Sequence[tuple[float, float]], hull: bool = False) -> float:
    """Trapezoidal area under (fpr, tpr) points ordered by threshold.

    With ``hull=True`` the area under the ROC convex hull is returned.
    """
    pts = roc_convex_hull(points) if hull else list(points)
    # exact rational sum, rounded once: independent of summation order
    q = [(Fraction(x), Fraction(y)) for x, y in pts]
    twice = sum(((x1 - x0) * (y0 + y1) for (x0, y0), (x1, y1) in zip(q, q[1:])), Fraction(0))
    return float(twice / 2)


def eer(points: Sequence[tuple[float, float]], hull: bool = False) -> float:
    """Equal error rate from (fpr, fnr) points ordered by threshold.

    Interpolates linearly between the two neighbouring points where
    fpr - fnr changes sign. ``hull=True`` first replaces the curve by the
    ROC convex hull.
    """
    pts = list(points)
    if hull:
        pts = [(f, 1.0 - t) for f, t in roc_convex_hull([(f, 1.0 - n) for f, n in pts])]
    diff = [f - n for f, n in pts]
    for i, d in enumerate(diff):
        if d == 0:
            return float(pts[i][0])
        if d > 0:
            if i == 0:
                return float(pts[0][0])
            d0 = diff[i - 1]
            a = -d0 / (d - d0)
            (f0, _), (f1, _) = pts[i - 1], pts[i]
            return float(f0 + a * (f1 - f0))
    return float(pts[-1][0])


def acc_at_max_f1(points: Sequence[SweepPoint]) -> tuple[float, float]:
    """Accuracy and threshold at the highest F1 (lowest threshold on ties)."""
    best = None
    for p in points:
        if np.isnan(p.f1):
            continue
        if best is None or p.f1 > best.f1:
            best = p
    if best is None:
        raise DegenerateGroundTruth("F1 is undefined at every threshold")
    return best.acc, best.threshold


def error_level_curve(c: ComparisonSet) -> list[tuple[float, float]]:
    return [(p.threshold, 1.0 - p.acc) for p in sweep(c)]


@dataclass(frozen=True)
class EvalReport:
    acc_at_max_f1: float
    auc: float
    eer: float
    best_threshold: float
    n_mated: int
    n_nonmated: int
    curve: tuple[SweepPoint, ...] = field(repr=False, default=())

    @property
    def roc_points(self) -> list[tuple[float, float]]:
        return roc_points(self.curve)

    @property
    def det_points(self) -> list[tuple[float, float]]:
        return det_points(self.curve)

    def summary(self) -> dict:
        return {
            "acc": self.acc_at_max_f1,
            "auc": self.auc,
            "eer": self.eer,
            "threshold": self.best_threshold,
            "n_mated": self.n_mated,
            "n_nonmated": self.n_nonmated,
        }

    def to_json(self, **extra) -> str:
        return json.dumps({**self.summary(), **extra}, indent=2, sort_keys=True) + "\n"


def evaluate(c: ComparisonSet | DissimilarityMatrix, hull: bool = False) -> EvalReport:
    if isinstance(c, DissimilarityMatrix):
        c = comparisons_from_matrix(c)
    points = sweep(c)
    acc, threshold = acc_at_max_f1(points)
    return EvalReport(
        acc_at_max_f1=acc,
        auc=auc(roc_points(points), hull=hull),
        eer=eer(det_points(points), hull=hull),
        best_threshold=threshold,
        n_mated=c.n_mated,
        n_nonmated=c.n_nonmated,
        curve=tuple(points),
    )


def serialize_curve(points: Sequence[SweepPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_HEADER)
    for p in points:
        w.writerow([fmt(v) for v in p])
    return buf.getvalue()


class DissimilarityVerifier(BaseEstimator):
    """Score all pairs of feature rows and evaluate against subject labels.

    After ``fit(X, y)``: ``dissimilarity_`` holds the matrix, ``report_`` the
    :class:`EvalReport` and ``threshold_`` the max-F1 operating threshold.
    Euclidean-of-KLD scores depend on the whole set, so the threshold is only
    meaningful for the set it was fitted on.
    """

    def __init__(self, metric="eucl", epsilon=DEFAULT_EPSILON):
        self.metric = metric
        self.epsilon = epsilon

    def fit(self, X, y):
        X = check_feature_matrix(X)
        if len(y) != X.shape[0]:
            raise ValueError("one subject label per feature row is required")
        self.dissimilarity_ = self.decision_function(X)
        self.report_ = evaluate(comparisons_from_values(self.dissimilarity_, y))
        self.threshold_ = self.report_.best_threshold
        return self

    def decision_function(self, X) -> np.ndarray:
        X = check_feature_matrix(X)
        return build_matrix(list(X), self.metric, self.epsilon).values

    def score(self, X, y) -> float:
        """Accuracy of match decisions on all pairs of X at the fitted threshold."""
        c = comparisons_from_values(self.decision_function(X), y)
        accepted = c.scores <= self.threshold_
        return float(np.mean(accepted == c.mated))
