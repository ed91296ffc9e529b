"""Small builders shared by the test modules."""

from __future__ import annotations

import numpy as np

from lcbench.features import FULL24, SLOTS, ManeuverSample
from lcbench.trajectory import Recording, RecordingMeta, Trajectory, lane_of

META = RecordingMeta("t0", frame_rate=25.0, road_length=420.0, lane_markings=(0.0, 3.75, 7.5))
# internal (normalized) lateral lane centres for META
Y_RIGHT = -5.625
Y_LEFT = -1.875


def trajectory(vid, first_frame, x, y, length=4.5, vclass="car", meta=META, fps=None) -> Trajectory:
    """Trajectory from position arrays; velocities and accelerations by np.gradient."""
    x = np.asarray(x, dtype=float)
    y = np.broadcast_to(np.asarray(y, dtype=float), x.shape).copy()
    fps = meta.frame_rate if fps is None else fps
    frames = np.arange(first_frame, first_frame + len(x), dtype=np.int64)
    if len(x) > 1:
        vx, vy = np.gradient(x) * fps, np.gradient(y) * fps
        ax, ay = np.gradient(vx) * fps, np.gradient(vy) * fps
    else:
        vx = vy = ax = ay = np.zeros(1)
    return Trajectory(vid, frames, x, y, vx, vy, ax, ay, lane_of(y, meta.internal_centerline), length,
                      1.8, vclass, None)


def constant_speed(vid, first_frame, n, x0, v, y=Y_RIGHT, length=4.5, vclass="car", meta=META) -> Trajectory:
    t = np.arange(n) / meta.frame_rate
    return trajectory(vid, first_frame, x0 + v * t, y, length, vclass, meta)


def recording(*trajs, meta=META) -> Recording:
    return Recording(meta, {t.vehicle_id: t for t in trajs})


def sample(maneuver="LKR", **features) -> ManeuverSample:
    """A fully present sample with neutral defaults overridden by ``features``."""
    f = {c: 0.0 for c in FULL24}
    f.update({"vx": 30.0, "dx_P": 60.0, "dx_F": 60.0, "dx_PA": 60.0, "dx_FA": 60.0})
    f.update(features)
    return ManeuverSample("r", 1, 100, maneuver, 2.0, 4.5, f, {s: True for s in SLOTS})


def random_dataset(n, p, rng, shift=1.0):
    """Two Gaussian classes whose means differ by ``shift`` along every axis."""
    y = (rng.random(n) < 0.4).astype(np.int64)
    X = rng.normal(size=(n, p)) + shift * y[:, None]
    return X, y
