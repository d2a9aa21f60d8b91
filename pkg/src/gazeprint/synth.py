"""Synthetic gaze recordings under the colored-square / blank-screen protocol.

A schedule alternates 8 target squares (2 s each) with a 4 s blank screen,
24 times over. Simulated subjects saccade to each target after a log-normal
latency and, on blank screens, wander over fixation points drawn from a
subject-specific gaussian mixture. A per-trial affine miscalibration is
applied to every sample.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import optimize, stats

from .core import (
    EventKind,
    GazeTrace,
    ScreenGeometry,
    StimulusEvent,
    TrialManifest,
    degrees_to_pixels,
    serialize_events,
    serialize_trace,
)
from .ttt import DEFAULT_WINDOW, Direction, target_directions

PAPER_COLORS = ("blue", "yellow", "green", "yellow", "white", "black")
DEFAULT_GEOMETRY = ScreenGeometry(1440, 900, 35.0)
TARGET_WIDTH_DEG = 3.0
RING_RADIUS_DEG = 10.0
RATE = 60.0


@dataclass(frozen=True)
class StimulusSchedule:
    events: tuple[StimulusEvent, ...]
    total_duration: float
    geometry: ScreenGeometry
    target_width_px: float

    @property
    def targets(self) -> list[StimulusEvent]:
        return [e for e in self.events if e.kind is EventKind.TARGET]

    @property
    def blanks(self) -> list[StimulusEvent]:
        return [e for e in self.events if e.kind is EventKind.BLANK]


def ring_positions(geometry: ScreenGeometry, radius_deg: float = RING_RADIUS_DEG) -> list[tuple[float, float]]:
    """Eight compass points around the screen center, starting east, counter-clockwise."""
    cx, cy = geometry.center
    r = degrees_to_pixels(radius_deg, geometry)
    half = degrees_to_pixels(TARGET_WIDTH_DEG, geometry) / 2
    if r + half > min(cx, cy):
        raise ValueError("target ring does not fit on the screen")
    pts = []
    for k in range(8):
        a = k * math.pi / 4
        # screen y grows downward, so "north" is negative y
        pts.append((cx + round(r * math.cos(a), 9), cy - round(r * math.sin(a), 9)))
    return pts


def make_schedule(preset: str = "paper", geometry: ScreenGeometry = DEFAULT_GEOMETRY, seed=0,
                  n_sequences: int = 24, ring_deg: float = RING_RADIUS_DEG) -> StimulusSchedule:
    if preset != "paper":
        raise ValueError(f"unknown schedule preset {preset!r}")
    rng = np.random.default_rng(seed)
    ring = ring_positions(geometry, ring_deg)
    events = []
    t = 0.0
    for s in range(n_sequences):
        color = PAPER_COLORS[s % len(PAPER_COLORS)]
        for k in rng.permutation(8).tolist():
            x, y = ring[k]
            events.append(StimulusEvent(t, t + 2.0, EventKind.TARGET, x, y, color))
            t += 2.0
        events.append(StimulusEvent(t, t + 4.0, EventKind.BLANK, None, None, color))
        t += 4.0
    width = degrees_to_pixels(TARGET_WIDTH_DEG, geometry)
    return StimulusSchedule(tuple(events), t, geometry, width)


@dataclass(frozen=True)
class MixtureComponent:
    """Gaussian blob in normalized screen units (0..1 on both axes)."""

    mean: tuple[float, float]
    cov: tuple[tuple[float, float], tuple[float, float]]
    weight: float


@dataclass(frozen=True)
class SubjectProfile:
    """Generative parameters of one simulated subject.

    ``ttt_median`` is the overall median latency seen inside the 0.1-0.4 s
    extraction window; ``down_offset`` and ``direction_offsets`` shift the
    per-direction medians relative to each other. ``drift`` (pixels) bounds
    the per-trial miscalibration shift, ``drift_scale`` its linear part.
    ``placement_jitter`` (normalized screen units) bounds a per-trial
    translation of the whole blank-screen mixture; target fixations are not
    affected by it, so recalibration cannot remove it.
    """

    ttt_median: float
    ttt_spread: float
    down_offset: float
    fdm_mixture: tuple[MixtureComponent, ...]
    drift: float = 0.0
    noise_sigma: float = 0.0
    drift_scale: float = 0.0
    direction_offsets: dict = field(default_factory=dict)
    placement_jitter: float = 0.0

    def __post_init__(self):
        comps = tuple(c if isinstance(c, MixtureComponent) else MixtureComponent(**c) for c in self.fdm_mixture)
        object.__setattr__(self, "fdm_mixture", comps)
        if not comps:
            raise ValueError("at least one mixture component is required")
        if abs(sum(c.weight for c in comps) - 1.0) > 1e-9:
            raise ValueError("mixture weights must sum to 1")
        for c in comps:
            if np.any(np.linalg.eigvalsh(np.array(c.cov, float)) <= 0):
                raise ValueError("mixture covariances must be positive definite")
        if not 0.1 < self.ttt_median < 0.4:
            raise ValueError("ttt_median must lie inside (0.1, 0.4)")
        if self.ttt_spread <= 0 or min(self.drift, self.noise_sigma, self.drift_scale, self.placement_jitter) < 0:
            raise ValueError("spread must be positive; drift and noise non-negative")

    def replace(self, **kw) -> "SubjectProfile":
        return dataclasses.replace(self, **kw)

    def to_json(self) -> str:
        doc = {
            "ttt_median": self.ttt_median,
            "ttt_spread": self.ttt_spread,
            "down_offset": self.down_offset,
            "fdm_mixture": [
                {"mean": list(c.mean), "cov": [list(r) for r in c.cov], "weight": c.weight}
                for c in self.fdm_mixture
            ],
            "drift": self.drift,
            "noise_sigma": self.noise_sigma,
            "drift_scale": self.drift_scale,
            "placement_jitter": self.placement_jitter,
            "direction_offsets": {str(Direction(k).value): v for k, v in self.direction_offsets.items()},
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SubjectProfile":
        doc = json.loads(text)
        doc["fdm_mixture"] = tuple(
            MixtureComponent(tuple(c["mean"]), tuple(tuple(r) for r in c["cov"]), c["weight"])
            for c in doc["fdm_mixture"]
        )
        doc["direction_offsets"] = {Direction(k): v for k, v in doc.get("direction_offsets", {}).items()}
        return cls(**doc)


def paper_presets() -> tuple[SubjectProfile, SubjectProfile]:
    """Subject A (slower, diffuse blank-screen gaze) and B (faster, compact)."""
    a = SubjectProfile(
        ttt_median=0.255,
        ttt_spread=0.22,
        down_offset=0.055,
        direction_offsets={Direction.UP: -0.002, Direction.RIGHT: 0.011, Direction.LEFT: -0.009},
        fdm_mixture=(
            MixtureComponent((0.46, 0.50), ((0.010, 0.0), (0.0, 0.012)), 0.5),
            MixtureComponent((0.32, 0.42), ((0.006, 0.002), (0.002, 0.008)), 0.3),
            MixtureComponent((0.62, 0.60), ((0.012, 0.0), (0.0, 0.006)), 0.2),
        ),
        placement_jitter=0.08,
        drift=0.02 * DEFAULT_GEOMETRY.diagonal_px,
        noise_sigma=8.0,
        drift_scale=0.02,
    )
    b = SubjectProfile(
        ttt_median=0.209,
        ttt_spread=0.22,
        down_offset=0.048,
        direction_offsets={Direction.UP: -0.004, Direction.RIGHT: 0.002, Direction.LEFT: 0.001},
        fdm_mixture=(
            MixtureComponent((0.50, 0.47), ((0.003, 0.0), (0.0, 0.002)), 0.75),
            MixtureComponent((0.56, 0.55), ((0.004, 0.001), (0.001, 0.003)), 0.25),
        ),
        placement_jitter=0.08,
        drift=0.02 * DEFAULT_GEOMETRY.diagonal_px,
        noise_sigma=8.0,
        drift_scale=0.02,
    )
    return a, b


# -- latency model ----------------------------------------------------------

def _windowed_cdf(x, mu, s, window=DEFAULT_WINDOW):
    lo, hi = window
    za, zx, zb = ((math.log(v) - mu) / s for v in (lo, x, hi))
    if mu < (math.log(lo) + math.log(hi)) / 2:
        # mass sits low: survival functions keep their precision there
        sf = stats.norm.sf
        return (sf(za) - sf(zx)) / (sf(za) - sf(zb))
    cdf = stats.norm.cdf
    return (cdf(zx) - cdf(za)) / (cdf(zb) - cdf(za))


def lognormal_location(windowed_median: float, spread: float, window=DEFAULT_WINDOW) -> float:
    """Log-location whose log-normal has the given median once cut to ``window``."""
    lo, hi = window
    f = lambda mu: _windowed_cdf(windowed_median, mu, spread, window) - 0.5  # noqa: E731
    return optimize.brentq(f, math.log(lo) - 12 * spread, math.log(hi) + 12 * spread, xtol=1e-14)


def direction_locations(profile: SubjectProfile, weights: dict, window=DEFAULT_WINDOW) -> dict:
    """Log-normal location per direction.

    Per-direction windowed medians are ``base + offset``; ``base`` is solved so
    that the direction mixture (with the given frequencies) has windowed
    median ``profile.ttt_median``.
    """
    offsets = {d: profile.direction_offsets.get(d, 0.0) for d in Direction}
    offsets[Direction.DOWN] = profile.down_offset
    total = sum(weights.values())
    lo, hi = window
    x = profile.ttt_median

    def mix(base):
        acc = 0.0
        for d, w in weights.items():
            mu = lognormal_location(base + offsets[d], profile.ttt_spread, window)
            acc += w / total * _windowed_cdf(x, mu, profile.ttt_spread, window)
        return acc - 0.5

    margin = 0.03
    lo_b = lo + margin - min(offsets.values())
    hi_b = hi - margin - max(offsets.values())
    base = optimize.brentq(mix, lo_b, hi_b, xtol=1e-12)
    return {d: lognormal_location(base + offsets[d], profile.ttt_spread, window) for d in Direction}


# -- blank-screen fixation points -------------------------------------------

def sample_mixture(profile: SubjectProfile, geometry: ScreenGeometry, rng, size: int,
                   offset=(0.0, 0.0)) -> np.ndarray:
    """Draw ``size`` points (pixels) from the profile's mixture, clipped to the screen.

    ``offset`` translates every component mean (normalized units).
    """
    comps = profile.fdm_mixture
    which = rng.choice(len(comps), size=size, p=[c.weight for c in comps])
    scale = np.array([geometry.width_px, geometry.height_px])
    out = np.empty((size, 2))
    for k, c in enumerate(comps):
        idx = np.flatnonzero(which == k)
        if len(idx):
            out[idx] = rng.multivariate_normal(np.add(c.mean, offset), c.cov, size=len(idx))
    out *= scale
    np.clip(out, 0, scale - 1e-6, out=out)
    return out


def mixture_marginal_cdf(profile: SubjectProfile, geometry: ScreenGeometry, axis: int):
    scale = geometry.width_px if axis == 0 else geometry.height_px
    parts = [(c.weight, c.mean[axis] * scale, math.sqrt(c.cov[axis][axis]) * scale) for c in profile.fdm_mixture]

    def cdf(v):
        return sum(w * stats.norm.cdf(v, m, s) for w, m, s in parts)
    return cdf


# -- trial simulation -------------------------------------------------------

def _drift_matrix(profile: SubjectProfile, geometry: ScreenGeometry, rng) -> np.ndarray:
    scale = 1.0 + rng.uniform(-profile.drift_scale, profile.drift_scale)
    angle = rng.uniform(-profile.drift_scale, profile.drift_scale)
    r = profile.drift * math.sqrt(rng.uniform())
    phi = rng.uniform(0, 2 * math.pi)
    a = scale * np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    c = np.array(geometry.center)
    t = c - a @ c + r * np.array([math.cos(phi), math.sin(phi)])
    m = np.eye(3)
    m[:2, :2] = a
    m[:2, 2] = t
    return m


def simulate_trial(profile: SubjectProfile, schedule: StimulusSchedule, seed=0,
                   rate: float = RATE, return_drift: bool = False):
    """Simulate one recording; returns ``(trace, events)``.

    With ``return_drift=True`` a third element holds the 3x3 homogeneous
    matrix of the miscalibration applied to the samples.
    """
    rng = np.random.default_rng(seed)
    g = schedule.geometry
    events = list(schedule.events)
    directions = dict(target_directions(events, g.center))
    counts = {d: 0 for d in Direction}
    for d in directions.values():
        if d is not None:
            counts[d] += 1
    weights = {d: n for d, n in counts.items() if n}
    locs = direction_locations(profile, weights) if weights else {}

    # the tracker clock is not locked to the display: random sub-sample phase
    phase = rng.uniform(0.0, 1.0 / rate)
    n_samples = int((schedule.total_duration - phase) * rate) + 1

    def index(t):
        return int(round((t - phase) * rate))

    land_sigma = 0.3 * g.px_per_degree
    r = profile.placement_jitter * math.sqrt(rng.uniform())
    phi = rng.uniform(0, 2 * math.pi)
    placement = (r * math.cos(phi), r * math.sin(phi))
    # change points: (sample index, x, y); gaze holds each point until the next
    idx_list, xs, ys = [0], [g.center[0]], [g.center[1]]

    def move_to(arrival, x, y):
        x0, y0 = xs[-1], ys[-1]
        n_flight = int(rng.integers(1, 3))
        arrival = max(arrival, idx_list[-1] + n_flight + 1)
        for k in range(n_flight, 0, -1):
            frac = 1.0 - k / (n_flight + 1)
            idx_list.append(arrival - k)
            xs.append(x0 + frac * (x - x0))
            ys.append(y0 + frac * (y - y0))
        idx_list.append(arrival)
        xs.append(x)
        ys.append(y)

    for i, e in enumerate(events):
        if e.kind is EventKind.TARGET:
            d = directions.get(i)
            mu = locs.get(d, math.log(profile.ttt_median))
            latency = min(math.exp(mu + profile.ttt_spread * rng.standard_normal()), 1.5)
            x, y = rng.normal(e.center, land_sigma)
            move_to(index(e.t_onset + latency), x, y)
        else:
            end = index(e.t_offset)
            t = index(e.t_onset + rng.uniform(0.15, 0.35))
            while t < end:
                x, y = sample_mixture(profile, g, rng, 1, placement)[0]
                move_to(t, x, y)
                t = idx_list[-1] + int(round(rng.uniform(0.3, 1.0) * rate))

    cp = np.array(idx_list)
    k = np.arange(n_samples)
    pos = np.searchsorted(cp, k, side="right") - 1
    pts = np.column_stack([np.array(xs)[pos], np.array(ys)[pos]])
    if profile.noise_sigma > 0:
        pts = pts + rng.normal(0.0, profile.noise_sigma, pts.shape)
    drift = _drift_matrix(profile, g, rng)
    pts = pts @ drift[:2, :2].T + drift[:2, 2]
    trace = GazeTrace(phase + k / rate, pts[:, 0], pts[:, 1], np.ones(n_samples, bool), nominal_rate=rate)
    if return_drift:
        return trace, events, drift
    return trace, events


# -- datasets on disk ---------------------------------------------------------

def trial_seed(seed: int, subject: int, week: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, subject, week, trial])


def generate_dataset(out_dir, seed: int, profiles: dict[str, SubjectProfile] | None = None,
                     trials: dict[str, int] | int = 8, weeks: Sequence[str] = ("1", "2"),
                     geometry: ScreenGeometry = DEFAULT_GEOMETRY) -> list[Path]:
    """Write traces, events and one manifest per trial; returns manifest paths.

    ``trials`` is the number of trials per subject per week, either shared or
    per subject id.
    """
    if profiles is None:
        a, b = paper_presets()
        profiles = {"A": a, "B": b}
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for wi, week in enumerate(weeks):
        for si, (subject, profile) in enumerate(profiles.items()):
            n = trials if isinstance(trials, int) else trials[subject]
            for ti in range(1, n + 1):
                ss = trial_seed(seed, si, wi, ti)
                sched_seed, sim_seed = ss.spawn(2)
                schedule = make_schedule("paper", geometry, sched_seed)
                trace, events = simulate_trial(profile, schedule, sim_seed)
                stem = f"{subject}_{week}_{ti}"
                (out / f"{stem}.trace.csv").write_text(serialize_trace(trace), encoding="utf-8")
                (out / f"{stem}.events.csv").write_text(serialize_events(events), encoding="utf-8")
                manifest = TrialManifest(subject, week, ti, geometry,
                                         f"{stem}.trace.csv", f"{stem}.events.csv")
                path = out / f"{stem}.manifest.json"
                path.write_text(manifest.to_json(), encoding="utf-8")
                paths.append(path)
    return paths
