"""Domain data model, unit conversions and the trace/event/manifest file formats.

Coordinates are screen pixels with the origin at the top-left corner and y
growing downward. Times are floating point seconds since trial start.
"""
from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .exceptions import MalformedEvents, MalformedFile, MalformedTrace

DEFAULT_RATE = 60.0

TRACE_HEADER = ["t", "x", "y", "valid"]
EVENTS_HEADER = ["t_onset", "t_offset", "kind", "cx", "cy", "color"]


def fmt(value: float) -> str:
    """Shortest string that round-trips ``value`` exactly."""
    return repr(float(value))


def _text(data: bytes | str) -> str:
    if isinstance(data, bytes):
        return data.decode("utf-8")
    return data


@dataclass(frozen=True)
class ScreenGeometry:
    width_px: float
    height_px: float
    px_per_degree: float

    def __post_init__(self):
        for name in ("width_px", "height_px", "px_per_degree"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive number, got {value!r}")

    @property
    def center(self) -> tuple[float, float]:
        return (self.width_px / 2.0, self.height_px / 2.0)

    @property
    def diagonal_px(self) -> float:
        return math.hypot(self.width_px, self.height_px)

    def to_dict(self) -> dict:
        return {
            "width_px": self.width_px,
            "height_px": self.height_px,
            "px_per_degree": self.px_per_degree,
        }


def degrees_to_pixels(d: float, g: ScreenGeometry) -> float:
    if d < 0:
        raise ValueError("visual angle must be non-negative")
    return d * g.px_per_degree


class GazeSample(NamedTuple):
    t: float
    x: float
    y: float
    valid: bool


@dataclass(frozen=True, eq=False)
class GazeTrace:
    """A sequence of gaze samples stored column-wise.

    Invalid samples are kept so that downstream stages can see the gaps;
    their coordinates must not be used.
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    valid: np.ndarray
    nominal_rate: float = DEFAULT_RATE

    def __post_init__(self):
        cols = {}
        for name, dtype in (("t", float), ("x", float), ("y", float), ("valid", bool)):
            arr = np.array(getattr(self, name), dtype=dtype).reshape(-1)
            arr.setflags(write=False)
            cols[name] = arr
            object.__setattr__(self, name, arr)
        if len({len(a) for a in cols.values()}) != 1:
            raise ValueError("trace columns differ in length")
        if not self.nominal_rate > 0:
            raise ValueError("nominal_rate must be positive")
        t = cols["t"]
        if len(t) and (t[0] < 0 or np.any(np.diff(t) <= 0)):
            raise MalformedTrace("timestamps must be non-negative and strictly increasing")

    @classmethod
    def from_samples(cls, samples: Sequence[GazeSample], nominal_rate=DEFAULT_RATE) -> "GazeTrace":
        if not samples:
            return cls(np.empty(0), np.empty(0), np.empty(0), np.empty(0, bool), nominal_rate)
        t, x, y, v = zip(*samples)
        return cls(np.array(t), np.array(x), np.array(y), np.array(v, bool), nominal_rate)

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[GazeSample]:
        for i in range(len(self.t)):
            yield GazeSample(float(self.t[i]), float(self.x[i]), float(self.y[i]), bool(self.valid[i]))

    @property
    def samples(self) -> list[GazeSample]:
        return list(self)

    @property
    def span(self) -> float:
        return float(self.t[-1] - self.t[0]) if len(self.t) > 1 else 0.0

    def __eq__(self, other):
        if not isinstance(other, GazeTrace):
            return NotImplemented
        return (
            self.nominal_rate == other.nominal_rate
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.valid, other.valid)
        )


class EventKind(str, enum.Enum):
    TARGET = "target"
    BLANK = "blank"


@dataclass(frozen=True)
class StimulusEvent:
    t_onset: float
    t_offset: float
    kind: EventKind
    center_x: float | None = None
    center_y: float | None = None
    color_tag: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", EventKind(self.kind))
        if not self.t_offset > self.t_onset:
            raise MalformedEvents(f"event offset {self.t_offset} not after onset {self.t_onset}")
        has_center = self.center_x is not None or self.center_y is not None
        if self.kind is EventKind.BLANK and has_center:
            raise MalformedEvents("blank events carry no center")
        if self.kind is EventKind.TARGET and (self.center_x is None or self.center_y is None):
            raise MalformedEvents("target events need a center")

    @property
    def center(self) -> tuple[float, float] | None:
        if self.kind is EventKind.TARGET:
            return (self.center_x, self.center_y)
        return None

    @property
    def duration(self) -> float:
        return self.t_offset - self.t_onset


class TrialLabel(NamedTuple):
    subject_id: str
    week_id: str
    trial_index: int

    def __str__(self) -> str:
        return f"{self.subject_id}:{self.week_id}:{self.trial_index}"

    @property
    def slug(self) -> str:
        return f"{self.subject_id}_{self.week_id}_{self.trial_index}"

    @classmethod
    def parse(cls, text: str) -> "TrialLabel":
        parts = text.strip().split(":")
        if len(parts) != 3:
            raise MalformedFile(f"bad trial label {text!r}, expected subject:week:trial")
        try:
            return cls(parts[0], parts[1], int(parts[2]))
        except ValueError:
            raise MalformedFile(f"bad trial index in label {text!r}") from None


@dataclass(frozen=True)
class TrialManifest:
    subject_id: str
    week_id: str
    trial_index: int
    geometry: ScreenGeometry
    trace_path: str
    events_path: str
    base_dir: Path | None = field(default=None, compare=False)

    @property
    def label(self) -> TrialLabel:
        return TrialLabel(self.subject_id, self.week_id, self.trial_index)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        if not p.is_absolute() and self.base_dir is not None:
            p = self.base_dir / p
        return p

    def to_json(self) -> str:
        doc = {
            "subject_id": self.subject_id,
            "week_id": self.week_id,
            "trial_index": self.trial_index,
            "geometry": self.geometry.to_dict(),
            "trace_path": self.trace_path,
            "events_path": self.events_path,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str, base_dir: Path | None = None) -> "TrialManifest":
        try:
            doc = json.loads(text)
            geometry = ScreenGeometry(**doc["geometry"])
            return cls(
                subject_id=str(doc["subject_id"]),
                week_id=str(doc["week_id"]),
                trial_index=int(doc["trial_index"]),
                geometry=geometry,
                trace_path=doc["trace_path"],
                events_path=doc["events_path"],
                base_dir=base_dir,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedFile(f"invalid manifest: {exc}") from exc

    def load_trace(self) -> GazeTrace:
        return parse_trace(self.resolve(self.trace_path).read_bytes())

    def load_events(self) -> list[StimulusEvent]:
        return parse_events(self.resolve(self.events_path).read_bytes())


def load_manifest(path) -> TrialManifest:
    path = Path(path)
    return TrialManifest.from_json(path.read_text(encoding="utf-8"), base_dir=path.parent)


def check_unique_labels(manifests: Sequence[TrialManifest]) -> None:
    seen = set()
    for m in manifests:
        if m.label in seen:
            raise MalformedFile(f"duplicate trial {m.label} in dataset")
        seen.add(m.label)


# -- trace CSV --------------------------------------------------------------

def _rows(text: str, header: list[str], error):
    reader = csv.reader(io.StringIO(text))
    try:
        first = next(reader)
    except StopIteration:
        raise error("empty input, header missing") from None
    if [h.strip() for h in first] != header:
        raise error(f"bad header {first!r}, expected {','.join(header)}")
    for i, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        yield i, row


def parse_trace(data: bytes | str, rate: float = DEFAULT_RATE) -> GazeTrace:
    t, x, y, valid = [], [], [], []
    for i, row in _rows(_text(data), TRACE_HEADER, MalformedTrace):
        if len(row) != 4:
            raise MalformedTrace(f"row {i}: expected 4 fields, got {len(row)}")
        try:
            ti, xi, yi = float(row[0]), float(row[1]), float(row[2])
        except ValueError:
            raise MalformedTrace(f"row {i}: unparseable number") from None
        flag = row[3].strip()
        if flag not in ("0", "1"):
            raise MalformedTrace(f"row {i}: valid must be 0 or 1, got {flag!r}")
        if not math.isfinite(ti) or ti < 0:
            raise MalformedTrace(f"row {i}: invalid timestamp {row[0]!r}")
        if t and ti <= t[-1]:
            raise MalformedTrace(f"row {i}: timestamp {ti} does not increase")
        t.append(ti)
        x.append(xi)
        y.append(yi)
        valid.append(flag == "1")
    return GazeTrace(np.array(t, float), np.array(x, float), np.array(y, float),
                     np.array(valid, bool), nominal_rate=rate)


def serialize_trace(trace: GazeTrace) -> str:
    lines = [",".join(TRACE_HEADER)]
    for s in trace:
        lines.append(f"{fmt(s.t)},{fmt(s.x)},{fmt(s.y)},{int(s.valid)}")
    return "\n".join(lines) + "\n"


# -- events CSV -------------------------------------------------------------

def parse_events(data: bytes | str) -> list[StimulusEvent]:
    events = []
    for i, row in _rows(_text(data), EVENTS_HEADER, MalformedEvents):
        if len(row) != 6:
            raise MalformedEvents(f"row {i}: expected 6 fields, got {len(row)}")
        onset, offset, kind, cx, cy, color = (c.strip() for c in row)
        try:
            kind = EventKind(kind.lower())
        except ValueError:
            raise MalformedEvents(f"row {i}: unknown kind {kind!r}") from None
        try:
            cx_v = float(cx) if cx else None
            cy_v = float(cy) if cy else None
            events.append(StimulusEvent(float(onset), float(offset), kind, cx_v, cy_v, color))
        except ValueError as exc:
            if isinstance(exc, MalformedEvents):
                raise MalformedEvents(f"row {i}: {exc}") from None
            raise MalformedEvents(f"row {i}: unparseable number") from None
    events.sort(key=lambda e: e.t_onset)
    return events


def serialize_events(events: Sequence[StimulusEvent]) -> str:
    lines = [",".join(EVENTS_HEADER)]
    for e in events:
        cx = fmt(e.center_x) if e.center_x is not None else ""
        cy = fmt(e.center_y) if e.center_y is not None else ""
        lines.append(f"{fmt(e.t_onset)},{fmt(e.t_offset)},{e.kind.value},{cx},{cy},{e.color_tag}")
    return "\n".join(lines) + "\n"
