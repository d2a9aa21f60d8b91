"""Fixation density maps: duration-weighted grids, gaussian smoothing, unit-mass norming."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_square_grid
from .core import ScreenGeometry, TrialLabel, fmt
from .exceptions import EmptyMap, MalformedFile
from .fixations import Fixation

DEFAULT_GRID = 64
DEFAULT_SIGMA = 2.0


@dataclass(frozen=True, eq=False)
class FixationDensityMap:
    """Square grid of dwell mass; ``grid[row, col]`` with rows along screen y."""

    grid: np.ndarray
    geometry: ScreenGeometry | None = None
    label: TrialLabel | None = None

    def __post_init__(self):
        grid = check_square_grid(self.grid).copy()
        if np.any(grid < 0):
            raise ValueError("density map cells must be non-negative")
        grid.setflags(write=False)
        object.__setattr__(self, "grid", grid)

    @property
    def n(self) -> int:
        return self.grid.shape[0]

    @property
    def mass(self) -> float:
        return float(self.grid.sum())


def build_fdm(fixs: Sequence[Fixation], g: ScreenGeometry, n: int = DEFAULT_GRID,
              label: TrialLabel | None = None) -> FixationDensityMap:
    """Deposit each fixation's duration in the cell holding its centroid.

    The full screen rectangle is stretched onto the n x n grid.
    """
    if n < 8:
        raise ValueError("grid size must be at least 8")
    grid = np.zeros((n, n))
    for f in fixs:
        col = min(max(math.floor(f.cx * n / g.width_px), 0), n - 1)
        row = min(max(math.floor(f.cy * n / g.height_px), 0), n - 1)
        grid[row, col] += f.duration
    return FixationDensityMap(grid, g, label)


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Sampled gaussian truncated at radius ceil(3 sigma), normalized to sum 1."""
    radius = math.ceil(3 * sigma)
    x = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_kernel2d(sigma: float) -> np.ndarray:
    k = gaussian_kernel1d(sigma)
    return np.outer(k, k)


def smooth_gaussian(m: FixationDensityMap, sigma: float = DEFAULT_SIGMA) -> FixationDensityMap:
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return m
    k = gaussian_kernel1d(sigma)
    out = ndimage.correlate1d(m.grid, k, axis=0, mode="constant", cval=0.0)
    out = ndimage.correlate1d(out, k, axis=1, mode="constant", cval=0.0)
    return replace(m, grid=out)


UNIT_MASS_TOL = 1e-12


def norm_unit_mass(m: FixationDensityMap) -> FixationDensityMap:
    """Divide by the total mass; maps already at unit mass (to 1e-12) pass through.

    The pass-through makes norming exactly idempotent: a second division by a
    sum of 1 +- 1 ulp could otherwise perturb the last bit of some cells.
    """
    total = m.grid.sum()
    if not total > 0:
        raise EmptyMap(f"density map {m.label or ''} has no mass")
    if abs(total - 1.0) <= UNIT_MASS_TOL:
        return m
    return replace(m, grid=m.grid / total)


def density_map(fixs: Sequence[Fixation], g: ScreenGeometry, n: int = DEFAULT_GRID,
                sigma: float = DEFAULT_SIGMA, label: TrialLabel | None = None) -> FixationDensityMap:
    """Build, smooth and norm in one step."""
    return norm_unit_mass(smooth_gaussian(build_fdm(fixs, g, n, label), sigma))


# -- grid files -------------------------------------------------------------

def serialize_grid(grid: np.ndarray, meta: dict) -> str:
    head = " ".join(f"{k}={v}" for k, v in meta.items())
    lines = [f"# {head}"]
    lines += [",".join(fmt(v) for v in row) for row in np.asarray(grid)]
    return "\n".join(lines) + "\n"


def parse_grid(text: str | bytes) -> tuple[np.ndarray, dict]:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    meta: dict[str, str] = {}
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                key, _, value = tok.partition("=")
                meta[key] = value
            continue
        try:
            rows.append([float(c) for c in line.split(",")])
        except ValueError:
            raise MalformedFile("grid file contains a non-numeric cell") from None
    if not rows or len({len(r) for r in rows}) != 1:
        raise MalformedFile("grid file rows are empty or ragged")
    return np.array(rows), meta


def label_meta(label: TrialLabel | None) -> dict:
    if label is None:
        return {}
    return {"subject": label.subject_id, "week": label.week_id, "trial": label.trial_index}


def label_from_meta(meta: dict) -> TrialLabel | None:
    if {"subject", "week", "trial"} <= meta.keys():
        return TrialLabel(meta["subject"], meta["week"], int(meta["trial"]))
    return None


def serialize_fdm(m: FixationDensityMap) -> str:
    return serialize_grid(m.grid, {**label_meta(m.label), "n": m.n})


def parse_fdm(text: str | bytes) -> FixationDensityMap:
    grid, meta = parse_grid(text)
    if meta.get("kind", "fdm") != "fdm":
        raise MalformedFile(f"expected a density map file, got kind={meta['kind']}")
    try:
        return FixationDensityMap(grid, None, label_from_meta(meta))
    except ValueError as exc:
        raise MalformedFile(str(exc)) from exc


class DensityMapTransformer(TransformerMixin, BaseEstimator):
    """Turn fixation lists into flattened unit-mass density maps.

    ``transform`` returns an array of shape ``(n_trials, n * n)``.
    """

    def __init__(self, geometry=None, n=DEFAULT_GRID, sigma=DEFAULT_SIGMA):
        self.geometry = geometry
        self.n = n
        self.sigma = sigma

    def fit(self, X, y=None):
        if self.geometry is None:
            raise ValueError("DensityMapTransformer needs a screen geometry")
        return self

    def transform(self, X):
        if self.geometry is None:
            raise ValueError("DensityMapTransformer needs a screen geometry")
        maps = [density_map(fixs, self.geometry, self.n, self.sigma).grid.ravel() for fixs in X]
        return np.array(maps).reshape(len(maps), self.n * self.n)
