import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gazeprint.core import (EventKind, GazeTrace, ScreenGeometry, StimulusEvent, TrialLabel, TrialManifest,
                            check_unique_labels, degrees_to_pixels, load_manifest, parse_events, parse_trace,
                            serialize_events, serialize_trace)
from gazeprint.exceptions import MalformedEvents, MalformedFile, MalformedTrace


def test_geometry_rejects_nonpositive():
    with pytest.raises(ValueError):
        ScreenGeometry(0, 720, 40)
    with pytest.raises(ValueError):
        ScreenGeometry(1280, 720, -1)


@pytest.mark.parametrize("deg, px", [(0, 0), (3, 120), (1.5, 60)])
def test_degrees_to_pixels(deg, px):
    assert degrees_to_pixels(deg, ScreenGeometry(1280, 720, 40)) == px


def test_parse_trace_basic():
    tr = parse_trace(b"t,x,y,valid\n0.0,100,100,1\n0.0167,101,99,1\n")
    assert len(tr) == 2
    assert tr.valid.all()
    assert tr.samples[1].x == 101.0


def test_parse_trace_keeps_invalid_rows():
    tr = parse_trace("t,x,y,valid\n0.0,0,0,0\n0.1,5,5,1\n")
    assert len(tr) == 2
    assert list(tr.valid) == [False, True]


@pytest.mark.parametrize("body", [
    "t,x,y,valid\n0.1,1,1,1\n0.05,1,1,1\n",
    "t,x,y,valid\n0.1,1,1,1\n0.1,1,1,1\n",
    "t,x,y,valid\n0.1,abc,1,1\n",
    "t,x,y,valid\n0.1,1,1,2\n",
    "t,x,y,valid\n0.1,1,1\n",
    "x,y,t,valid\n0.1,1,1,1\n",
    "",
])
def test_parse_trace_rejects(body):
    with pytest.raises(MalformedTrace):
        parse_trace(body)


def test_parse_trace_error_names_row():
    with pytest.raises(MalformedTrace, match="row 2"):
        parse_trace("t,x,y,valid\n0.0,1,1,1\n0.1,nope,1,1\n")


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e4, 1e4), st.floats(-1e4, 1e4), st.booleans()), min_size=0, max_size=40),
       st.floats(0, 100))
def test_trace_round_trip(rows, t0):
    t = t0 + np.cumsum(np.full(len(rows), 0.01337))
    tr = GazeTrace(t, [r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows])
    again = parse_trace(serialize_trace(tr))
    assert again == tr
    assert serialize_trace(again) == serialize_trace(tr)


def test_event_invariants():
    with pytest.raises(MalformedEvents):
        StimulusEvent(1.0, 1.0, EventKind.TARGET, 1, 1, "blue")
    with pytest.raises(MalformedEvents):
        StimulusEvent(0.0, 4.0, EventKind.BLANK, 1, 1, "black")
    with pytest.raises(MalformedEvents):
        StimulusEvent(0.0, 2.0, EventKind.TARGET, None, None, "blue")


def test_parse_events_single_target():
    ev = parse_events("t_onset,t_offset,kind,cx,cy,color\n0.0,2.0,target,640,360,blue\n")
    assert len(ev) == 1
    assert ev[0].kind is EventKind.TARGET and ev[0].center == (640.0, 360.0)


def test_parse_events_sorts_and_rejects():
    text = ("t_onset,t_offset,kind,cx,cy,color\n"
            "4.0,8.0,blank,,,black\n"
            "0.0,2.0,target,10,10,blue\n")
    assert [e.t_onset for e in parse_events(text)] == [0.0, 4.0]
    with pytest.raises(MalformedEvents, match="row 1"):
        parse_events("t_onset,t_offset,kind,cx,cy,color\n1.0,1.0,target,1,1,blue\n")
    with pytest.raises(MalformedEvents):
        parse_events("t_onset,t_offset,kind,cx,cy,color\n1.0,5.0,blank,3,3,black\n")


def test_protocol_events_round_trip():
    from gazeprint.synth import make_schedule

    events = make_schedule("paper", seed=4).events
    again = parse_events(serialize_events(events))
    assert again == list(events)
    assert len(again) == 216
    assert again[-1].t_offset - again[0].t_onset == pytest.approx(480.0)


def test_label_forms():
    lab = TrialLabel("A", "2", 7)
    assert str(lab) == "A:2:7" and lab.slug == "A_2_7"
    assert TrialLabel.parse("A:2:7") == lab


def test_manifest_round_trip(tmp_path, geometry):
    m = TrialManifest("S1", "1", 3, geometry, "t.csv", "e.csv")
    doc = json.loads(m.to_json())
    assert set(doc) == {"subject_id", "week_id", "trial_index", "geometry", "trace_path", "events_path"}
    path = tmp_path / "m.json"
    path.write_text(m.to_json())
    loaded = load_manifest(path)
    assert loaded == m
    assert loaded.resolve("t.csv") == tmp_path / "t.csv"


def test_manifest_malformed():
    with pytest.raises(MalformedFile):
        TrialManifest.from_json('{"subject_id": "A"}')


def test_duplicate_labels_rejected(geometry):
    m = TrialManifest("S1", "1", 3, geometry, "t.csv", "e.csv")
    with pytest.raises(MalformedFile):
        check_unique_labels([m, m])
