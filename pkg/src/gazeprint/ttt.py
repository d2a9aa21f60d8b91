"""Time-to-target (saccadic latency) extraction and summary statistics."""
from __future__ import annotations

import csv
import enum
import io
import statistics
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import EventKind, StimulusEvent, TrialLabel, fmt
from .exceptions import UndefinedDirection
from .fixations import Fixation

DEFAULT_WINDOW = (0.1, 0.4)


class Direction(str, enum.Enum):
    UP = "up"
    RIGHT = "right"
    DOWN = "down"
    LEFT = "left"


@dataclass(frozen=True)
class TttRecord:
    latency: float
    direction: Direction
    event_index: int
    label: TrialLabel | None = None


@dataclass(frozen=True)
class TttStats:
    n: int
    mean: float | None = None
    median: float | None = None
    sigma: float | None = None


def classify_direction(prev_center, cur_center) -> Direction:
    """Bin the movement from ``prev_center`` to ``cur_center`` into four sectors.

    Sectors are 90 degrees wide and centered on the screen axes. A movement
    exactly on a diagonal goes to the clockwise neighbour (45 deg -> right).
    """
    dx = cur_center[0] - prev_center[0]
    up = prev_center[1] - cur_center[1]  # screen y grows downward
    if dx == 0 and up == 0:
        raise UndefinedDirection("previous and current centers coincide")
    if dx > 0 and -dx < up <= dx:
        return Direction.RIGHT
    if up > 0 and -up <= dx < up:
        return Direction.UP
    if dx < 0 and dx <= up < -dx:
        return Direction.LEFT
    return Direction.DOWN


def target_directions(events: Sequence[StimulusEvent], screen_center) -> list[tuple[int, Direction | None]]:
    """Direction of every target relative to the previous target.

    The first target after a blank (or at the start) is measured from
    ``screen_center``. Repeated positions get ``None``.
    """
    out = []
    prev = None
    for i, e in enumerate(events):
        if e.kind is EventKind.BLANK:
            prev = None
            continue
        origin = screen_center if prev is None else prev
        try:
            out.append((i, classify_direction(origin, e.center)))
        except UndefinedDirection:
            out.append((i, None))
        prev = e.center
    return out


def _default_center(events):
    centers = [e.center for e in events if e.kind is EventKind.TARGET]
    if not centers:
        return (0.0, 0.0)
    arr = np.array(centers)
    return tuple(((arr.min(axis=0) + arr.max(axis=0)) / 2).tolist())


def extract_ttt(fixs: Sequence[Fixation], events: Sequence[StimulusEvent], radius: float,
                window: tuple[float, float] = DEFAULT_WINDOW, screen_center=None,
                label: TrialLabel | None = None) -> list[TttRecord]:
    """Latency from each target onset to the first fixation that starts nearby.

    Latencies outside the closed ``window`` are dropped, as are targets with no
    nearby fixation. Without ``screen_center`` the middle of the bounding box
    of all target centers is used as the origin for first-in-sequence targets.
    """
    lo, hi = window
    if screen_center is None:
        screen_center = _default_center(events)
    ordered = sorted(fixs, key=lambda f: f.t_start)
    starts = np.array([f.t_start for f in ordered])
    r2 = radius * radius
    records = []
    for idx, direction in target_directions(events, screen_center):
        if direction is None:
            continue
        e = events[idx]
        k = int(np.searchsorted(starts, e.t_onset, side="left"))
        for f in ordered[k:]:
            latency = f.t_start - e.t_onset
            if latency > hi:
                break
            if (f.cx - e.center_x) ** 2 + (f.cy - e.center_y) ** 2 <= r2:
                if latency >= lo:
                    records.append(TttRecord(latency, direction, idx, label))
                break
    return records


def _stats(values: list[float]) -> TttStats:
    if not values:
        return TttStats(0)
    return TttStats(len(values), statistics.fmean(values), statistics.median(values),
                    statistics.pstdev(values))


def ttt_stats(records: Sequence[TttRecord], group_by: str = "all") -> dict:
    """Count, mean, median and population standard deviation per group.

    ``group_by`` is ``"trial"`` (keyed by label), ``"direction"`` (all four
    directions always present) or ``"all"``.
    """
    if group_by == "all":
        return {"all": _stats([r.latency for r in records])}
    if group_by == "direction":
        return {d: _stats([r.latency for r in records if r.direction is d]) for d in Direction}
    if group_by == "trial":
        groups: dict = {}
        for r in records:
            groups.setdefault(r.label, []).append(r.latency)
        return {k: _stats(v) for k, v in groups.items()}
    raise ValueError(f"unknown grouping {group_by!r}")


def serialize_records(records: Sequence[TttRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trial", "event_index", "latency", "direction"])
    for r in records:
        w.writerow([str(r.label) if r.label else "", r.event_index, fmt(r.latency), r.direction.value])
    return buf.getvalue()


def serialize_stats(stats: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["group", "n", "mean", "median", "sigma"])
    for key, s in stats.items():
        name = key.value if isinstance(key, Direction) else str(key)
        cells = ["" if v is None else fmt(v) for v in (s.mean, s.median, s.sigma)]
        w.writerow([name, s.n, *cells])
    return buf.getvalue()
