import math

import numpy as np
import pytest

from helpers import Y_LEFT, Y_RIGHT, constant_speed, recording, trajectory
from lcbench.features import (
    FULL24, MOBIL8, MOBIL_INPUTS, SLOTS, FeatureSpec, extract_samples, finite_difference_kinematics,
    impute_missing, measure, read_samples, to_arrays, write_samples,
)
from lcbench.trajectory import RecordingMeta, centerline_crossings

META20 = RecordingMeta("t20", frame_rate=20.0)


def test_column_sets():
    assert len(FULL24) == 24 and len(set(FULL24)) == 24
    assert len(MOBIL8) == 8 and set(MOBIL8) <= set(FULL24)
    assert MOBIL_INPUTS == ("vx",) + MOBIL8
    assert FeatureSpec().columns == MOBIL8
    assert FeatureSpec(subset="full24").columns == FULL24
    with pytest.raises(ValueError):
        FeatureSpec(subset="full25")


def test_linear_motion_exact():
    t = trajectory(1, 0, 3.0 + 27.5 * np.arange(100) / 25, Y_RIGHT + 0.4 * np.arange(100) / 25)
    vx, vy, ax, ay = finite_difference_kinematics(t, 50, 25.0)
    assert vx == pytest.approx(27.5, abs=1e-9)
    assert vy == pytest.approx(0.4, abs=1e-9)
    assert ax == pytest.approx(0.0, abs=1e-8)
    assert ay == pytest.approx(0.0, abs=1e-8)


def test_quadratic_motion_exact_on_grid():
    # at 20 frames/s the 0.1 s stencil lands on frames, where centred differences are exact for quadratics
    s = np.arange(200) / 20.0
    t = trajectory(1, 0, 5.0 + 20.0 * s + 0.5 * 1.3 * s ** 2, Y_RIGHT - 0.5 * 0.2 * s ** 2, meta=META20)
    vx, vy, ax, ay = finite_difference_kinematics(t, 100, 20.0)
    assert vx == pytest.approx(20.0 + 1.3 * 5.0, abs=1e-9)
    assert ax == pytest.approx(1.3, abs=1e-8)
    assert vy == pytest.approx(-0.2 * 5.0, abs=1e-9)
    assert ay == pytest.approx(-0.2, abs=1e-8)


def test_sine_motion_second_order_error():
    A, w, fps, dt = 2.0, 1.5, 20.0, 0.1
    s = np.arange(400) / fps
    t = trajectory(1, 0, A * np.sin(w * s), Y_RIGHT, meta=META20)
    frame = 137
    ts = frame / fps
    vx, _, ax, _ = finite_difference_kinematics(t, frame, fps, dt)
    # Taylor remainders of the centred stencils
    assert abs(vx - A * w * math.cos(w * ts)) <= A * w ** 3 * dt ** 2 / 24 * 1.01
    assert abs(ax + A * w ** 2 * math.sin(w * ts)) <= A * w ** 4 * dt ** 2 / 12 * 1.01


def test_stencil_needs_track_on_both_sides():
    t = constant_speed(1, 0, 10, 0.0, 30.0)
    assert finite_difference_kinematics(t, 1, 25.0) is None
    assert finite_difference_kinematics(t, 5, 25.0) is not None
    assert finite_difference_kinematics(t, 8, 25.0) is None


def _crossing_track(vid, n, cross_index, first_frame=0, start_y=Y_RIGHT, end_y=Y_LEFT, v=30.0):
    """Constant speed; lateral move centred on ``cross_index`` (the first sample past the centre line)."""
    k = np.arange(n)
    frac = np.clip((k - cross_index + 26.0) / 51.0, 0.0, 1.0)
    y = start_y + (end_y - start_y) * (1 - np.cos(np.pi * frac)) / 2
    return trajectory(vid, first_frame, 10.0 + v * k / 25.0, y)


def test_horizon_shifts_sample_before_crossing():
    t = _crossing_track(1, 300, 200)
    rec = recording(t)
    assert centerline_crossings(t, rec.centerline) == [(200, "OV")]
    res = extract_samples(rec, FeatureSpec(horizon=2.0))
    assert len(res) == 1
    s = res[0]
    assert (s.frame, s.maneuver, s.label, s.tau) == (150, "OV", 1, 2.0)


def test_fold_down_and_lane_keeping():
    fd = _crossing_track(1, 300, 200, start_y=Y_LEFT, end_y=Y_RIGHT)
    lk = constant_speed(2, 0, 101, 400.0, 30.0, y=Y_LEFT)
    res = extract_samples(recording(fd, lk), FeatureSpec(horizon=1.0))
    by_vid = {s.vehicle_id: s for s in res}
    assert by_vid[1].maneuver == "FD" and by_vid[1].frame == 175
    assert by_vid[2].maneuver == "LKL" and by_vid[2].frame == 50


def test_short_history_and_trucks_skipped():
    short = _crossing_track(1, 100, 30)
    truck = constant_speed(2, 0, 100, 200.0, 25.0, vclass="truck", length=14.0)
    res = extract_samples(recording(short, truck), FeatureSpec(horizon=2.0))
    assert len(res) == 0
    assert res.skipped["short_history"] == 1 and res.skipped["not_a_car"] == 1
    with_trucks = extract_samples(recording(truck), FeatureSpec(include_trucks=True))
    assert [s.maneuver for s in with_trucks] == ["LKR"]


def test_measured_neighbor_variables():
    me = constant_speed(1, 0, 60, 100.0, 30.0)
    lead = constant_speed(2, 0, 60, 140.0, 25.0, length=12.0, vclass="truck")
    adj_follow = constant_speed(3, 0, 60, 80.0, 35.0, y=Y_LEFT)
    s = measure(recording(me, lead, adj_follow), 1, 30, "LKR", FeatureSpec())
    f = s.features
    assert f["vx"] == pytest.approx(30.0)
    # 1.2 s after the start the 5 m/s speed differences have moved the neighbours by 6 m
    assert f["dx_P"] == pytest.approx(34.0)
    assert f["dv_P"] == pytest.approx(-5.0)
    assert f["T_P"] == pytest.approx((34.0 - (4.5 + 12.0) / 2) / 30.0)
    assert f["C_P"] == 1.0
    assert f["dx_FA"] == pytest.approx(14.0)
    assert f["dv_FA"] == pytest.approx(5.0)
    assert f["C_FA"] == 0.0
    assert s.present == {"P": True, "F": False, "PA": False, "FA": True}
    assert math.isnan(f["dx_F"]) and math.isnan(f["T_PA"])


def test_imputation_places_free_road_vehicle():
    rec = recording(constant_speed(1, 0, 60, 100.0, 25.0))
    raw = measure(rec, 1, 30, "LKR", FeatureSpec())
    full = impute_missing(raw, FeatureSpec(free_gap=400.0))
    for slot in SLOTS:
        assert full.features[f"dx_{slot}"] == 400.0
        assert full.features[f"dv_{slot}"] == 0.0
        assert full.features[f"ax_{slot}"] == 0.0
        assert full.features[f"C_{slot}"] == 0.0
        assert full.features[f"T_{slot}"] == pytest.approx((400.0 - 4.5) / 25.0)
    # the presence flags still tell imputed slots apart
    assert not any(full.present.values())


def test_samples_round_trip(tmp_path):
    me = constant_speed(1, 0, 60, 100.0, 30.0)
    other = constant_speed(2, 0, 60, 130.0, 28.0, y=Y_LEFT)
    rec = recording(me, other)
    samples = [measure(rec, 1, 30, "LKR", FeatureSpec()), impute_missing(measure(rec, 2, 30, "LKL", FeatureSpec()),
                                                                          FeatureSpec())]
    path = write_samples(samples, tmp_path / "s.csv", comment="first\nsecond")
    assert path.read_text().startswith("# first\n# second\n")
    back = read_samples(path)
    assert len(back) == 2
    for a, b in zip(samples, back):
        assert (a.recording_id, a.vehicle_id, a.frame, a.maneuver, a.present) == \
               (b.recording_id, b.vehicle_id, b.frame, b.maneuver, b.present)
        np.testing.assert_array_equal(a.vector(FULL24), b.vector(FULL24))


def test_to_arrays_layout():
    rec = recording(constant_speed(1, 0, 60, 100.0, 30.0))
    s = impute_missing(measure(rec, 1, 30, "LKR", FeatureSpec()), FeatureSpec())
    X, y = to_arrays([s, s], MOBIL_INPUTS)
    assert X.shape == (2, 9) and y.tolist() == [0, 0]
    X0, y0 = to_arrays([], FULL24)
    assert X0.shape == (0, 24) and len(y0) == 0
