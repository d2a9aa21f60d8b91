"""Phase-free 2D DFT features of fixation density maps.

Spectra are stored *centered*: grid index ``i`` holds signed frequency
``i - n // 2``, so the low-frequency box around DC is a contiguous block.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_feature_matrix, check_square_grid, square_side
from .core import TrialLabel
from .exceptions import MalformedFile
from .fdm import FixationDensityMap, label_from_meta, label_meta, parse_grid, serialize_grid

BOX_FRACTION = 0.05


@dataclass(frozen=True, eq=False)
class MagnitudeSpectrum:
    grid: np.ndarray
    box_limit: int | None = None
    label: TrialLabel | None = None

    def __post_init__(self):
        grid = check_square_grid(self.grid).copy()
        if np.any(grid < 0):
            raise ValueError("magnitudes must be non-negative")
        grid.setflags(write=False)
        object.__setattr__(self, "grid", grid)

    @property
    def n(self) -> int:
        return self.grid.shape[0]

    def retained(self) -> np.ndarray:
        """The (2l+1) x (2l+1) block inside the box (whole grid if unfiltered)."""
        if self.box_limit is None:
            return self.grid
        c, l = self.n // 2, self.box_limit
        return self.grid[max(c - l, 0):c + l + 1, max(c - l, 0):c + l + 1]


def signed_frequencies(n: int) -> np.ndarray:
    return np.arange(n) - n // 2


def default_box_limit(n: int) -> int:
    return math.floor(BOX_FRACTION * n)


def _mirror_index(n: int) -> np.ndarray:
    # centered index holding the negated frequency (aliasing -n/2 onto itself)
    c = n // 2
    return (2 * c - np.arange(n)) % n


def dft2_magnitude(m: FixationDensityMap | np.ndarray) -> MagnitudeSpectrum:
    """|F_ab| for all signed frequencies a (rows), b (columns)."""
    grid = m.grid if isinstance(m, FixationDensityMap) else check_square_grid(m)
    label = m.label if isinstance(m, FixationDensityMap) else None
    mag = np.abs(np.fft.fftshift(np.fft.fft2(grid)))
    # a real map has |F(a,b)| == |F(-a,-b)|; enforce it bit-exactly
    j = _mirror_index(mag.shape[0])
    mag = 0.5 * (mag + mag[np.ix_(j, j)])
    return MagnitudeSpectrum(mag, None, label)


def box_filter(s: MagnitudeSpectrum, l: int) -> MagnitudeSpectrum:
    """Zero every component with |a| > l or |b| > l."""
    if not 0 <= l <= s.n / 2:
        raise ValueError(f"box limit must lie in [0, n/2], got {l}")
    keep = np.abs(signed_frequencies(s.n)) <= l
    out = np.where(np.outer(keep, keep), s.grid, 0.0)
    return replace(s, grid=out, box_limit=int(l))


def spectral_feature(m: FixationDensityMap | np.ndarray, l: int | None = None) -> MagnitudeSpectrum:
    """DFT magnitude, low-pass box, then unit mass over the retained cells."""
    spec = dft2_magnitude(m)
    if l is None:
        l = default_box_limit(spec.n)
    spec = box_filter(spec, l)
    total = spec.grid.sum()
    assert total > 0, "an all-zero map has no spectral feature"
    return replace(spec, grid=spec.grid / total)


def serialize_spectrum(s: MagnitudeSpectrum) -> str:
    meta = {"kind": "spectrum", **label_meta(s.label), "n": s.n}
    if s.box_limit is not None:
        meta["l"] = s.box_limit
    return serialize_grid(s.grid, meta)


def parse_spectrum(text: str | bytes) -> MagnitudeSpectrum:
    grid, meta = parse_grid(text)
    if meta.get("kind") != "spectrum":
        raise MalformedFile("expected a spectrum file (kind=spectrum)")
    l = int(meta["l"]) if "l" in meta else None
    try:
        return MagnitudeSpectrum(grid, l, label_from_meta(meta))
    except ValueError as exc:
        raise MalformedFile(str(exc)) from exc


class SpectralFeatures(TransformerMixin, BaseEstimator):
    """Map flattened density maps to flattened retained-box spectral features.

    Input rows are n*n density maps; output rows hold the (2l+1)^2 retained
    magnitudes, each row normed to unit mass.
    """

    def __init__(self, box_limit=None):
        self.box_limit = box_limit

    def fit(self, X, y=None):
        X = check_feature_matrix(X)
        self.n_ = square_side(X.shape[1])
        self.box_limit_ = default_box_limit(self.n_) if self.box_limit is None else self.box_limit
        return self

    def transform(self, X):
        X = check_feature_matrix(X)
        n = square_side(X.shape[1])
        l = default_box_limit(n) if self.box_limit is None else self.box_limit
        rows = [spectral_feature(row.reshape(n, n), l).retained().ravel() for row in X]
        return np.array(rows)
