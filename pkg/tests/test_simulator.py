import numpy as np
import pytest

from lcbench.features import MOBIL_INPUTS, to_arrays
from lcbench.mobil import IdmParams, mobil_predict
from lcbench.simulator import (
    SIM_MOBIL, ScenarioConfig, ScenarioError, VehicleSpec, equilibrium_speed, generate_benchmark, load_config,
    read_events, save_config, simulate,
)
from lcbench.trajectory import LEFT, RIGHT, centerline_crossings, load_recording

SHORT = ScenarioConfig(seed=1, duration=120.0, n_cars=50, n_trucks=8)


@pytest.fixture(scope="module")
def short_run():
    return simulate(SHORT)


def test_no_collisions(short_run):
    assert short_run.min_bumper_gap > 0


def test_deterministic(short_run):
    again = simulate(SHORT)
    assert again.events == short_run.events
    for a, b in zip(again.recordings, short_run.recordings):
        assert list(a.trajectories) == list(b.trajectories)
        for t in a:
            u = b[t.vehicle_id]
            assert np.array_equal(t.x, u.x) and np.array_equal(t.y, u.y) and np.array_equal(t.vx, u.vx)


def test_seed_changes_the_run(short_run):
    other = simulate(ScenarioConfig(seed=2, duration=120.0, n_cars=50, n_trucks=8))
    assert other.events != short_run.events


def test_zero_duration_is_empty():
    res = simulate(ScenarioConfig(duration=0.0))
    assert res.events == [] and all(len(r) == 0 for r in res.recordings)


def test_no_lane_changes_keeps_lanes():
    res = simulate(ScenarioConfig(seed=3, duration=60.0, lane_changes=False))
    assert res.events == []
    for rec in res.recordings:
        for t in rec:
            assert len(np.unique(t.lane)) == 1


def test_trucks_never_change_lanes(short_run):
    for rec in short_run.recordings:
        for t in rec:
            if t.vclass == "truck":
                assert np.all(t.lane == RIGHT)


def test_vehicles_conserved(short_run):
    # the windows never show more vehicles at once than the ring holds
    n = SHORT.n_cars + SHORT.n_trucks
    seen = {}
    for k, rec in enumerate(short_run.recordings):
        for t in rec:
            for f in t.frames:
                seen[int(f)] = seen.get(int(f), 0) + 1
    assert max(seen.values()) <= n
    assert sum(len(r) for r in short_run.recordings) > n  # vehicles re-enter windows around the ring


def test_events_match_recorded_crossings(short_run):
    logged = {(e.window, e.vehicle_id, e.crossing_frame, e.direction) for e in short_run.events if e.vehicle_id >= 0}
    found = set()
    for k, rec in enumerate(short_run.recordings):
        for t in rec:
            for frame, direction in centerline_crossings(t, rec.centerline):
                found.add((k, t.vehicle_id, frame, direction))
    assert found <= logged
    assert len(found) > 0
    for e in short_run.events:
        assert e.decision_frame < e.crossing_frame


def test_speeds_physical(short_run):
    for rec in short_run.recordings:
        for t in rec:
            assert np.all(t.vx >= 0) and np.all(t.vx < 45)
            assert np.all(np.diff(t.x) >= 0)


def test_free_vehicle_approaches_desired_speed():
    idm = IdmParams(v0=30.0, T=1.2, alpha=1.5, beta=2.0, length=8.0)
    cfg = ScenarioConfig(duration=120.0, n_windows=1, window_length=2000.0, jitter=0.0,
                         vehicles=(VehicleSpec(RIGHT, 0.0, "car", v=10.0, idm=idm),))
    t = next(iter(simulate(cfg).recording))
    assert np.all(np.diff(t.vx) >= -1e-12)
    assert t.vx[-1] == pytest.approx(30.0, abs=0.5)


def test_equilibrium_speed_zeroes_the_acceleration():
    p = IdmParams(v0=36.0, T=1.2, alpha=1.5, beta=2.0, length=8.5)
    for spacing in (18.0, 30.0, 60.0, 200.0):
        v = equilibrium_speed(spacing, p)
        gap = spacing - p.length
        acc = p.alpha * (1 - (v / p.v0) ** 4 - ((p.length + p.T * v) / gap) ** 2)
        assert abs(acc) < 1e-9
    # net gap below the standstill distance: a jam
    assert equilibrium_speed(12.0, p) == 0.0
    assert equilibrium_speed(5.0, p) == 0.0


def test_decision_noise_adds_changes():
    base = ScenarioConfig(seed=6, duration=120.0, n_cars=50, n_trucks=8)
    quiet = len(simulate(base).events)
    noisy = len(simulate(ScenarioConfig(**{**base.__dict__, "decision_noise": 0.2})).events)
    assert noisy > quiet


def test_mobil_truth_labels_follow_the_generator():
    data = generate_benchmark(ScenarioConfig(seed=2, duration=300.0, n_cars=50, n_trucks=8), "mobil_truth")
    for lane in (RIGHT, LEFT):
        sub = [s for s in data.samples if s.lane == lane]
        X, y = to_arrays(sub, MOBIL_INPUTS)
        assert np.array_equal(mobil_predict(X, SIM_MOBIL[lane], lane), y)


def test_label_noise_flips_labels():
    cfg = ScenarioConfig(seed=2, duration=300.0, n_cars=50, n_trucks=8)
    a = generate_benchmark(cfg, "mobil_truth")
    b = generate_benchmark(cfg, "mobil_truth", label_noise=0.2)
    flipped = np.mean([s.label != u.label for s, u in zip(a.samples, b.samples)])
    assert 0.1 < flipped < 0.3
    with pytest.raises(ValueError):
        generate_benchmark(cfg, "oracle")


def test_bad_scenarios():
    with pytest.raises(ScenarioError):
        ScenarioConfig(dt=0.0)
    with pytest.raises(ScenarioError):
        ScenarioConfig(window_length=600.0, n_windows=4)
    with pytest.raises(ScenarioError):
        ScenarioConfig(lane_change_jitter=1.0)
    with pytest.raises(ScenarioError):
        simulate(ScenarioConfig(n_cars=600, n_trucks=0, duration=1.0))


def test_config_and_output_round_trip(tmp_path, short_run):
    cfg = ScenarioConfig(seed=9, hidden_term=5.0, vehicles=(VehicleSpec(LEFT, 10.0, v=20.0),))
    save_config(cfg, tmp_path / "c.json")
    assert load_config(tmp_path / "c.json") == cfg
    written = short_run.write(tmp_path, "run")
    assert len(written["tracks"]) == SHORT.n_windows
    rec = load_recording(written["tracks"][0])
    assert sorted(rec.trajectories) == sorted(short_run.recordings[0].trajectories)
    assert read_events(written["events"][0]) == short_run.events
