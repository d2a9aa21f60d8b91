"""Fixation detection and stimulus-locked epoching.

Fixations are found with a single time-ordered pass of density-based
clustering: a sample joins the open cluster when it lies within ``eps`` of
the cluster's running centroid and follows the last member by at most
``max_gap`` seconds. Samples that do not fit accumulate in a pending
candidate; the candidate replaces the open cluster once it has collected
``min_points`` samples of its own, and is thrown away as noise if the gaze
returns to the open cluster first.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .core import EventKind, GazeTrace, ScreenGeometry, StimulusEvent, degrees_to_pixels, fmt
from .exceptions import MalformedFile

FIXATION_HEADER = ["cx", "cy", "t_start", "duration", "n_samples"]


@dataclass(frozen=True)
class Fixation:
    cx: float
    cy: float
    t_start: float
    duration: float
    n_samples: int

    @property
    def t_end(self) -> float:
        return self.t_start + self.duration

    @property
    def midpoint(self) -> float:
        return self.t_start + self.duration / 2.0


@dataclass(frozen=True)
class ClusterParams:
    eps: float
    min_points: int = 5
    min_duration: float = 0.1
    max_gap: float = 0.1

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.min_points < 2:
            raise ValueError("min_points must be at least 2")
        if self.min_duration < 0:
            raise ValueError("min_duration must be non-negative")
        if not self.max_gap > 0:
            raise ValueError("max_gap must be positive")

    @classmethod
    def default(cls, geometry: ScreenGeometry, eps_deg: float = 1.0, **kw) -> "ClusterParams":
        return cls(eps=degrees_to_pixels(eps_deg, geometry), **kw)


class _Cluster:
    __slots__ = ("t", "sx", "sy", "n", "t0")

    def __init__(self, t, x, y):
        self.t0 = self.t = t
        self.sx, self.sy, self.n = x, y, 1

    def accepts(self, t, x, y, eps2, max_gap):
        if t - self.t > max_gap:
            return False
        dx = x - self.sx / self.n
        dy = y - self.sy / self.n
        return dx * dx + dy * dy <= eps2

    def add(self, t, x, y):
        self.t = t
        self.sx += x
        self.sy += y
        self.n += 1


def detect_fixations(trace: GazeTrace, p: ClusterParams) -> list[Fixation]:
    """Cluster the valid samples of ``trace`` into fixations.

    Returned fixations are ordered by onset and never overlap in time. A
    fixation's duration is the time from its first to its last member.
    """
    mask = trace.valid
    ts = trace.t[mask].tolist()
    xs = trace.x[mask].tolist()
    ys = trace.y[mask].tolist()
    eps2 = p.eps * p.eps
    out: list[Fixation] = []

    def close(c):
        if c is None or c.n < p.min_points:
            return
        duration = c.t - c.t0
        if duration > 0 and duration >= p.min_duration:
            out.append(Fixation(c.sx / c.n, c.sy / c.n, c.t0, duration, c.n))

    current = pending = None
    for t, x, y in zip(ts, xs, ys):
        if current is not None and t - current.t > p.max_gap:
            # the open cluster can no longer grow
            close(current)
            current, pending = pending, None
        if current is None:
            current = _Cluster(t, x, y)
        elif current.accepts(t, x, y, eps2, p.max_gap):
            current.add(t, x, y)
            pending = None
        elif pending is not None and pending.accepts(t, x, y, eps2, p.max_gap):
            pending.add(t, x, y)
        else:
            pending = _Cluster(t, x, y)
        if pending is not None and pending.n >= p.min_points:
            close(current)
            current, pending = pending, None
    close(current)
    return out


@dataclass(frozen=True)
class Epoch:
    kind: EventKind
    t_start: float
    t_end: float
    source_event: StimulusEvent

    def contains(self, t: float) -> bool:
        return self.t_start <= t < self.t_end


def build_epochs(events: Sequence[StimulusEvent]) -> list[Epoch]:
    return [Epoch(e.kind, e.t_onset, e.t_offset, e) for e in events]


def fixations_in_epochs(fixs: Sequence[Fixation], epochs: Sequence[Epoch], kind) -> list[Fixation]:
    """Keep fixations whose temporal midpoint lies in an epoch of ``kind``."""
    kind = EventKind(kind)
    spans = sorted((e.t_start, e.t_end) for e in epochs if e.kind is kind)
    if not spans:
        return []
    starts = np.array([s for s, _ in spans])
    ends = np.array([e for _, e in spans])
    kept = []
    for f in fixs:
        mid = f.midpoint
        i = np.searchsorted(starts, mid, side="right") - 1
        # overlapping epochs are allowed, so scan back over earlier starts
        while i >= 0:
            if mid < ends[i]:
                kept.append(f)
                break
            i -= 1
    return kept


def parse_fixations(data: bytes | str) -> list[Fixation]:
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != FIXATION_HEADER:
        raise MalformedFile(f"bad fixation header {header!r}")
    out = []
    for i, row in enumerate(reader, start=1):
        if not row:
            continue
        try:
            cx, cy, t0, dur, n = row
            out.append(Fixation(float(cx), float(cy), float(t0), float(dur), int(n)))
        except ValueError:
            raise MalformedFile(f"fixation row {i} is malformed") from None
    return out


def serialize_fixations(fixs: Sequence[Fixation]) -> str:
    lines = [",".join(FIXATION_HEADER)]
    lines += [f"{fmt(f.cx)},{fmt(f.cy)},{fmt(f.t_start)},{fmt(f.duration)},{f.n_samples}" for f in fixs]
    return "\n".join(lines) + "\n"


def shift_fixations(fixs: Sequence[Fixation], dt: float) -> list[Fixation]:
    return [replace(f, t_start=f.t_start + dt) for f in fixs]


class FixationDetector(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`detect_fixations`.

    ``transform`` maps a sequence of traces to a list of fixation lists. When
    ``eps`` is None it is derived per call from ``eps_deg`` and ``geometry``.
    """

    def __init__(self, eps=None, eps_deg=1.0, geometry=None, min_points=5,
                 min_duration=0.1, max_gap=0.1):
        self.eps = eps
        self.eps_deg = eps_deg
        self.geometry = geometry
        self.min_points = min_points
        self.min_duration = min_duration
        self.max_gap = max_gap

    def _params(self) -> ClusterParams:
        eps = self.eps
        if eps is None:
            if self.geometry is None:
                raise ValueError("either eps or geometry must be given")
            eps = degrees_to_pixels(self.eps_deg, self.geometry)
        return ClusterParams(eps, self.min_points, self.min_duration, self.max_gap)

    def fit(self, X, y=None):
        self.params_ = self._params()
        return self

    def transform(self, X):
        params = getattr(self, "params_", None) or self._params()
        if isinstance(X, GazeTrace):
            X = [X]
        return [detect_fixations(trace, params) for trace in X]
