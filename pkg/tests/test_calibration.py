import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from gazeprint.calibration import (AffineRecalibrator, AffineTransform, apply_affine, collect_pairs, fit_affine,
                                   residual)
from gazeprint.core import EventKind, StimulusEvent
from gazeprint.exceptions import DegenerateFit, MalformedFile
from gazeprint.fixations import Fixation
from gazeprint.synth import make_schedule

CORNERS = [(0, 0), (1280, 0), (0, 720), (1280, 720)]


def lstsq_oracle(pairs):
    """Direct least squares on the 6-parameter system (independent route)."""
    rows, rhs = [], []
    for (mx, my), (tx, ty) in pairs:
        rows.append([mx, my, 0, 0, 1, 0])
        rows.append([0, 0, mx, my, 0, 1])
        rhs += [tx, ty]
    a11, a12, a21, a22, bx, by = np.linalg.lstsq(np.array(rows, float), np.array(rhs, float), rcond=None)[0]
    return np.array([a11, a12, a21, a22, bx, by])


def random_affine(rng, diag=1468.6):
    s = rng.uniform(0.9, 1.1, 2)
    rot = math.radians(rng.uniform(-5, 5))
    r = np.array([[math.cos(rot), -math.sin(rot)], [math.sin(rot), math.cos(rot)]])
    a = r @ np.diag(s)
    t = rng.uniform(-1, 1, 2) * 0.05 * diag / math.sqrt(2)
    return AffineTransform(a[0, 0], a[0, 1], a[1, 0], a[1, 1], t[0], t[1])


def test_identity_from_corners():
    t = fit_affine([(p, p) for p in CORNERS])
    assert np.allclose(t.params(), AffineTransform.identity().params(), atol=1e-9)
    assert residual(t, [(p, p) for p in CORNERS]) < 1e-12


def test_pure_translation():
    pairs = [((x - 10, y - 5), (x, y)) for x, y in CORNERS]
    t = fit_affine(pairs)
    assert (t.tx, t.ty) == pytest.approx((10, 5), abs=1e-9)
    assert residual(t, pairs) < 1e-9


def test_three_exact_pairs_under_scale():
    truth = AffineTransform(1.1, 0, 0, 1.1, 0, 0)
    pts = [(100, 100), (900, 200), (400, 650)]
    pairs = [(p, tuple(truth.apply(p)[0])) for p in pts]
    assert np.allclose(fit_affine(pairs).params(), truth.params(), atol=1e-9)


def test_degenerate_inputs():
    with pytest.raises(DegenerateFit):
        fit_affine([((0, 0), (0, 0)), ((1, 1), (1, 1))])
    with pytest.raises(DegenerateFit):
        fit_affine([((k, 2 * k), (k, k)) for k in range(6)])
    with pytest.raises(DegenerateFit):
        fit_affine([((5, 5), (k, k)) for k in range(4)])
    with pytest.raises(DegenerateFit):
        AffineTransform(1, 2, 2, 4, 0, 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 30))
def test_matches_lstsq_oracle(seed, n):
    rng = np.random.default_rng(seed)
    measured = rng.uniform(0, 1400, (n, 2))
    target = measured @ rng.normal(1, 0.1, (2, 2)) + rng.normal(0, 30, (n, 2))
    pairs = list(zip(map(tuple, measured), map(tuple, target)))
    got = fit_affine(pairs).params()
    want = lstsq_oracle(pairs)
    assert np.allclose(got, want, rtol=1e-7, atol=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_residual_not_increased_by_exact_points(seed):
    rng = np.random.default_rng(seed)
    measured = rng.uniform(0, 1000, (6, 2))
    pairs = list(zip(map(tuple, measured), map(tuple, measured + rng.normal(0, 20, (6, 2)))))
    t = fit_affine(pairs)
    extra = [(p, tuple(t.apply(p)[0])) for p in map(tuple, rng.uniform(0, 1000, (3, 2)))]
    t2 = fit_affine(pairs + extra)
    assert residual(t2, pairs + extra) <= residual(t, pairs) + 1e-6


def test_trim_drops_outlier():
    truth = AffineTransform(1.02, 0.01, -0.01, 0.98, 12, -7)
    pts = np.random.default_rng(3).uniform(0, 1000, (12, 2))
    pairs = [(tuple(p), tuple(truth.apply(p)[0])) for p in pts]
    pairs[4] = (pairs[4][0], (pairs[4][1][0] + 300, pairs[4][1][1]))
    plain, trimmed = fit_affine(pairs), fit_affine(pairs, trim=0.1)
    assert np.abs(plain.params() - truth.params()).max() > 1e-3
    assert np.allclose(trimmed.params(), truth.params(), atol=1e-8)


def test_inverse_compose_and_json():
    t = AffineTransform(1.05, 0.02, -0.03, 0.97, 14, -9)
    assert np.allclose(t.compose(t.inverse()).matrix, np.eye(3))
    assert AffineTransform.from_json(t.to_json()) == t
    with pytest.raises(MalformedFile):
        AffineTransform.from_json('{"a11": 1}')


def test_apply_affine_examples():
    f = Fixation(100, 100, 1.0, 0.3, 9)
    moved = apply_affine(AffineTransform(tx=10), [f])
    assert (moved[0].cx, moved[0].cy) == (110, 100)
    assert (moved[0].t_start, moved[0].duration, moved[0].n_samples) == (1.0, 0.3, 9)
    assert apply_affine(AffineTransform.identity(), [f]) == [f]
    assert apply_affine(AffineTransform(tx=3), []) == []


def _target(cx, cy, t0=0.0):
    return StimulusEvent(t0, t0 + 2.0, EventKind.TARGET, cx, cy, "blue")


def test_collect_pairs_rules():
    ev = [_target(640, 360)]
    near = Fixation(640, 360, 0.3, 0.2, 10)
    assert collect_pairs([near], ev, 120) == [((640, 360), (640, 360))]
    far = Fixation(840, 360, 0.3, 0.2, 10)
    assert collect_pairs([far], ev, 120) == []
    early, late = Fixation(650, 360, 0.3, 0.2, 10), Fixation(630, 360, 0.8, 0.2, 10)
    assert collect_pairs([late, early], ev, 120) == [((650, 360), (640, 360))]
    outside = Fixation(640, 360, 2.5, 0.2, 10)
    assert collect_pairs([outside], ev, 120) == []


def test_recovers_known_drift_end_to_end():
    rng = np.random.default_rng(11)
    events = make_schedule("paper", seed=2).events
    for _ in range(10):
        drift = random_affine(rng)
        fixs = []
        for e in events:
            if e.kind is EventKind.TARGET:
                x, y = drift.apply(e.center)[0]
                fixs.append(Fixation(float(x), float(y), e.t_onset + 0.25, 0.5, 30))
        fit = fit_affine(collect_pairs(fixs, events, radius=200))
        ident = fit.compose(drift).params()
        assert np.allclose(ident, [1, 0, 0, 1, 0, 0], atol=1e-6)


def test_recalibrator_estimator():
    drift = AffineTransform(1.03, 0, 0, 0.98, 15, -10)
    events = [_target(200 + 300 * (k % 4), 150 + 200 * (k // 4), 2.0 * k) for k in range(8)]
    fixs = [Fixation(*drift.apply(e.center)[0], e.t_onset + 0.3, 0.4, 20) for e in events]
    rec = AffineRecalibrator(radius=150)
    out = rec.fit(fixs, events).transform(fixs)
    assert rec.residual_ < 1e-12
    for f, e in zip(out, events):
        assert (f.cx, f.cy) == pytest.approx(e.center)
    assert clone(rec).get_params() == {"radius": 150, "trim": 0.0}
