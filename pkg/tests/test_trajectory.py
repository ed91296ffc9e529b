import json

import numpy as np
import pytest

from helpers import META, Y_LEFT, Y_RIGHT, constant_speed, recording, trajectory
from lcbench.trajectory import (
    LEFT, RIGHT, TRACK_COLUMNS, RecordingIntegrityError, RecordingMeta, RecordingParseError, centerline_crossings,
    lane_of, load_recording, meta_path_for, resolve_neighbors, write_recording,
)


def _write_tracks(path, rows, meta=META):
    with open(path, "w") as fh:
        fh.write(",".join(TRACK_COLUMNS) + "\n")
        for r in rows:
            fh.write(",".join(str(v) for v in r) + "\n")
    meta_path_for(path).write_text(json.dumps(meta.to_dict()))
    return path


def _row(frame, vid, x, y=1.0, vx=30.0, vy=0.0, ax=0.0, ay=0.0, lane=2, length=4.5, width=1.8, cls="Car"):
    return (frame, vid, x, y, vx, vy, ax, ay, lane, length, width, cls)


@pytest.mark.parametrize("direction", ["lower", "upper"])
def test_write_load_round_trip(tmp_path, direction):
    meta = RecordingMeta("rt", 25.0, 420.0, (0.0, 3.75, 7.5), direction)
    c = meta.internal_centerline
    rng = np.random.default_rng(0)
    trajs = []
    for vid in range(1, 6):
        n = int(rng.integers(20, 60))
        y = c + rng.choice([-1.875, 1.875]) + 0.1 * np.sin(np.arange(n) / 7)
        trajs.append(trajectory(vid, int(rng.integers(0, 30)), rng.uniform(0, 100) + 30 * np.arange(n) / 25, y,
                                length=float(rng.uniform(4, 15)), vclass="truck" if vid == 3 else "car", meta=meta))
    rec = recording(*trajs, meta=meta)
    path = write_recording(rec, tmp_path / "rt_tracks.csv")
    back = load_recording(path)
    assert back.meta == meta
    assert sorted(back.trajectories) == sorted(rec.trajectories)
    for t in rec:
        b = back[t.vehicle_id]
        assert np.array_equal(b.frames, t.frames)
        for name in ("x", "y", "vx", "vy", "ax", "ay"):
            np.testing.assert_allclose(getattr(b, name), getattr(t, name), atol=2e-6)
        assert np.array_equal(b.lane, t.lane)
        assert b.vclass == t.vclass
        assert b.length == pytest.approx(t.length, abs=1e-6)


def test_lower_direction_normalization(tmp_path):
    # top-left corner (10, 1) of a 4.5 x 1.8 box; centre (12.25, 1.9), lateral axis flipped
    path = _write_tracks(tmp_path / "a_tracks.csv", [_row(0, 1, 10.0, 1.0, vy=0.5, ay=0.2),
                                                     _row(1, 1, 11.2, 1.0, vy=0.5, ay=0.2)])
    t = load_recording(path)[1]
    assert t.x[0] == pytest.approx(12.25)
    assert t.y[0] == pytest.approx(-1.9)
    assert t.vy[0] == pytest.approx(-0.5)
    assert t.ay[0] == pytest.approx(-0.2)
    # file y in [0, 3.75] lies on the side of the median for this direction
    assert t.lane[0] == LEFT


def test_upper_direction_runs_towards_positive_x(tmp_path):
    meta = RecordingMeta("u", 25.0, 400.0, (0.0, 3.75, 7.5), "upper")
    path = _write_tracks(tmp_path / "u_tracks.csv", [_row(0, 7, 300.0, 5.0, vx=-30.0, ax=-1.0, length=4.0),
                                                     _row(1, 7, 298.8, 5.0, vx=-30.0, ax=-1.0, length=4.0)], meta)
    t = load_recording(path)[7]
    assert t.x[0] == pytest.approx(400.0 - 302.0)
    assert t.x[1] > t.x[0]
    assert t.vx[0] == pytest.approx(30.0)
    assert t.ax[0] == pytest.approx(1.0)
    assert t.y[0] == pytest.approx(5.9)
    assert t.lane[0] == LEFT


def test_empty_file_is_a_parse_error(tmp_path):
    p = tmp_path / "e_tracks.csv"
    p.write_text("")
    with pytest.raises(RecordingParseError, match="header"):
        load_recording(p, META)


def test_header_only_gives_empty_recording(tmp_path):
    rec = load_recording(_write_tracks(tmp_path / "h_tracks.csv", []))
    assert len(rec) == 0


def test_missing_column(tmp_path):
    p = tmp_path / "m_tracks.csv"
    p.write_text("frame,id,x\n0,1,2\n")
    with pytest.raises(RecordingParseError, match="missing columns"):
        load_recording(p, META)


def test_parse_error_names_the_line(tmp_path):
    rows = [_row(0, 1, 10.0), _row(1, 1, 11.0), _row(2, 1, "abc")]
    with pytest.raises(RecordingParseError, match="line 4"):
        load_recording(_write_tracks(tmp_path / "p_tracks.csv", rows))


def test_zero_length_vehicle_rejected(tmp_path):
    with pytest.raises(RecordingIntegrityError, match="vehicle 1: non-positive length"):
        load_recording(_write_tracks(tmp_path / "z_tracks.csv", [_row(0, 1, 10.0, length=0.0)]))


@pytest.mark.parametrize("frames", [(0, 2), (3, 2), (1, 1)])
def test_frame_gaps_and_disorder_rejected(tmp_path, frames):
    rows = [_row(f, 1, 10.0 + i) for i, f in enumerate(frames)]
    with pytest.raises(RecordingIntegrityError):
        load_recording(_write_tracks(tmp_path / "g_tracks.csv", rows))


def test_other_carriageway_dropped(tmp_path):
    rows = [_row(0, 1, 10.0, 1.0), _row(0, 2, 10.0, 30.0)]
    rec = load_recording(_write_tracks(tmp_path / "o_tracks.csv", rows))
    assert list(rec.trajectories) == [1]


def test_lane_of_centerline_is_right():
    assert lane_of(-3.75, -3.75) == RIGHT
    assert lane_of(-3.7499, -3.75) == LEFT


def _brute_neighbors(rec, vid, frame):
    me = rec[vid].at(frame)
    key = (me.x, vid)
    out = {}
    for same, ahead_slot, behind_slot in ((True, "P", "F"), (False, "PA", "FA")):
        others = [t.at(frame) for t in rec if t.vehicle_id != vid and t.has_frame(frame)
                  and ((t.at(frame).lane == me.lane) == same)]
        ahead = [o for o in others if (o.x, o.vehicle_id) > key]
        behind = [o for o in others if (o.x, o.vehicle_id) < key]
        out[ahead_slot] = min(ahead, key=lambda o: (o.x, o.vehicle_id)).vehicle_id if ahead else None
        out[behind_slot] = max(behind, key=lambda o: (o.x, o.vehicle_id)).vehicle_id if behind else None
    return out


def test_neighbors_match_brute_force():
    rng = np.random.default_rng(3)
    trajs = []
    for vid in range(1, 41):
        x0 = float(rng.choice([50.0, 100.0, rng.uniform(0, 400)]))  # repeated x values exercise the id tie-break
        y = Y_LEFT if rng.random() < 0.5 else Y_RIGHT
        trajs.append(constant_speed(vid, int(rng.integers(0, 5)), 10, x0, 0.0, y=y))
    rec = recording(*trajs)
    for frame in (5, 8):
        for t in rec:
            if not t.has_frame(frame):
                continue
            got = resolve_neighbors(t.vehicle_id, frame, rec)
            want = _brute_neighbors(rec, t.vehicle_id, frame)
            for slot, vid in want.items():
                assert (got[slot].vehicle_id if got[slot] else None) == vid


def test_predecessor_follower_antisymmetry():
    rng = np.random.default_rng(5)
    trajs = [constant_speed(v, 0, 3, float(rng.uniform(0, 400)), 0.0, y=Y_LEFT if v % 3 else Y_RIGHT)
             for v in range(1, 30)]
    rec = recording(*trajs)
    for t in rec:
        nb = resolve_neighbors(t.vehicle_id, 1, rec)
        if nb.P is not None:
            assert resolve_neighbors(nb.P.vehicle_id, 1, rec).F.vehicle_id == t.vehicle_id
        if nb.F is not None:
            assert resolve_neighbors(nb.F.vehicle_id, 1, rec).P.vehicle_id == t.vehicle_id


def test_lone_vehicle_has_no_neighbors():
    rec = recording(constant_speed(1, 0, 5, 10.0, 30.0))
    nb = resolve_neighbors(1, 2, rec)
    assert all(nb[s] is None for s in ("P", "F", "PA", "FA"))


def test_crossings_straight_and_single():
    c = META.internal_centerline
    assert centerline_crossings(constant_speed(1, 0, 50, 0, 30), c) == []
    y = np.linspace(Y_RIGHT, Y_LEFT, 41)  # passes the line at index 20
    t = trajectory(2, 100, np.arange(41.0), y)
    first_left = int(np.flatnonzero(y > c)[0])
    assert centerline_crossings(t, META) == [(100 + first_left, "OV")]


def test_crossings_zigzag():
    c = META.internal_centerline
    y = np.array([Y_RIGHT, Y_LEFT, Y_LEFT, Y_RIGHT, c, Y_LEFT, Y_RIGHT])
    t = trajectory(3, 10, np.arange(7.0), y)
    # the centre line itself counts as the right lane
    assert centerline_crossings(t, c) == [(11, "OV"), (13, "FD"), (15, "OV"), (16, "FD")]
