"""Maneuver samples and the explanatory variables measured on them."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .trajectory import LEFT, RIGHT, Recording, Trajectory, centerline_crossings, resolve_neighbors

SLOTS = ("P", "F", "PA", "FA")
MANEUVERS = ("LKR", "LKL", "FD", "OV")
SUBJECT_FEATURES = ("vx", "vy", "ax", "ay")
NEIGHBOR_FEATURES = ("dx", "dv", "T", "ax", "C")
FULL24 = SUBJECT_FEATURES + tuple(f"{f}_{s}" for s in SLOTS for f in NEIGHBOR_FEATURES)
MOBIL8 = tuple(f"{f}_{s}" for s in SLOTS for f in ("dx", "dv"))
# what the rule-based model reads: ego speed plus the eight spacing/speed-difference variables
MOBIL_INPUTS = ("vx",) + MOBIL8

MANEUVER_LANE = {"LKR": RIGHT, "OV": RIGHT, "LKL": LEFT, "FD": LEFT}
LANE_CHANGES = frozenset(("FD", "OV"))


@dataclass(frozen=True)
class FeatureSpec:
    subset: str = "mobil8"
    horizon: float = 2.0
    dt: float = 0.1
    free_gap: float = 500.0
    min_speed: float = 0.1
    use_recorded_kinematics: bool = False
    include_trucks: bool = False

    def __post_init__(self):
        if self.subset not in ("mobil8", "full24"):
            raise ValueError(f"unknown feature subset {self.subset!r}")
        if self.horizon < 0:
            raise ValueError("horizon must be non-negative")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def columns(self) -> tuple[str, ...]:
        return MOBIL8 if self.subset == "mobil8" else FULL24

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class ManeuverSample:
    recording_id: str
    vehicle_id: int
    frame: int
    maneuver: str
    tau: float
    length: float
    features: dict[str, float]
    present: dict[str, bool]

    @property
    def lane(self) -> int:
        return MANEUVER_LANE[self.maneuver]

    @property
    def label(self) -> int:
        return int(self.maneuver in LANE_CHANGES)

    def vector(self, columns) -> np.ndarray:
        return np.array([self.features[c] for c in columns], dtype=float)


@dataclass
class ExtractionResult:
    samples: list[ManeuverSample] = field(default_factory=list)
    skipped: Counter = field(default_factory=Counter)

    def __iter__(self):
        return iter(self.samples)

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, i):
        return self.samples[i]


def _half_step(dt: float, frame_rate: float) -> float:
    return dt * frame_rate / 2.0


def finite_difference_kinematics(trajectory: Trajectory, frame: int, frame_rate: float,
                                 dt: float = 0.1, use_recorded: bool = False):
    """Centred-difference (v_x, v_y, a_x, a_y) at ``frame``, or None without enough track.

    Velocities difference positions at t +/- dt/2 and accelerations difference
    those velocities, so the stencil reaches t +/- dt. Off-grid stencil points
    are linearly interpolated between frames.
    """
    if use_recorded:
        if not trajectory.has_frame(frame):
            return None
        tf = trajectory.at(frame)
        return tf.v_x, tf.v_y, tf.a_x, tf.a_y
    h = _half_step(dt, frame_rate)
    if not (trajectory.has_frame(frame - 2 * h) and trajectory.has_frame(frame + 2 * h)):
        return None
    f = trajectory.frames
    pts = np.array([frame - 2 * h, frame - h, frame, frame + h, frame + 2 * h])
    xs = np.interp(pts, f, trajectory.x)
    ys = np.interp(pts, f, trajectory.y)
    out = []
    for pos in (xs, ys):
        v = (pos[3] - pos[1]) / dt
        v_plus = (pos[4] - pos[2]) / dt
        v_minus = (pos[2] - pos[0]) / dt
        out.append((v, (v_plus - v_minus) / dt))
    (vx, ax), (vy, ay) = out
    return float(vx), float(vy), float(ax), float(ay)


def _neighbor_kinematics(traj: Trajectory, frame: int, frame_rate: float, spec: FeatureSpec):
    k = finite_difference_kinematics(traj, frame, frame_rate, spec.dt, spec.use_recorded_kinematics)
    if k is None:
        # neighbours entering or leaving the segment: fall back to the recorded values
        tf = traj.at(frame)
        return tf.v_x, tf.a_x
    return k[0], k[2]


def measure(recording: Recording, vehicle_id: int, frame: int, maneuver: str,
            spec: FeatureSpec) -> ManeuverSample | None:
    """All 24 variables for one subject at one frame; absent neighbours stay NaN."""
    traj = recording[vehicle_id]
    fps = recording.meta.frame_rate
    kin = finite_difference_kinematics(traj, frame, fps, spec.dt, spec.use_recorded_kinematics)
    if kin is None:
        return None
    vx, vy, ax, ay = kin
    feats = {"vx": vx, "vy": vy, "ax": ax, "ay": ay}
    present = {}
    me = traj.at(frame)
    nb = resolve_neighbors(vehicle_id, frame, recording)
    for slot in SLOTS:
        other = nb[slot]
        present[slot] = other is not None
        if other is None:
            for f in NEIGHBOR_FEATURES:
                feats[f"{f}_{slot}"] = float("nan")
            continue
        v_s, a_s = _neighbor_kinematics(recording[other.vehicle_id], frame, fps, spec)
        dx = abs(other.x - me.x)
        feats[f"dx_{slot}"] = dx
        feats[f"dv_{slot}"] = v_s - vx
        feats[f"T_{slot}"] = (dx - (me.length + other.length) / 2.0) / max(vx, spec.min_speed)
        feats[f"ax_{slot}"] = a_s
        feats[f"C_{slot}"] = 1.0 if other.vclass == "truck" else 0.0
    feats = {c: float(feats[c]) for c in FULL24}
    return ManeuverSample(recording.meta.recording_id, vehicle_id, int(frame), maneuver,
                          spec.horizon, me.length, feats, present)


def impute_missing(sample: ManeuverSample, spec: FeatureSpec) -> ManeuverSample:
    """Fill absent neighbours with a free-road vehicle ``spec.free_gap`` metres away."""
    if all(sample.present.values()):
        return sample
    feats = dict(sample.features)
    v = max(feats["vx"], spec.min_speed)
    for slot, here in sample.present.items():
        if here:
            continue
        feats[f"dx_{slot}"] = spec.free_gap
        feats[f"dv_{slot}"] = 0.0
        # unknown neighbour length taken equal to the subject's
        feats[f"T_{slot}"] = (spec.free_gap - sample.length) / v
        feats[f"ax_{slot}"] = 0.0
        feats[f"C_{slot}"] = 0.0
    return replace(sample, features=feats)


def extract_samples(recording: Recording, spec: FeatureSpec = FeatureSpec(), impute: bool = True) -> ExtractionResult:
    """Labelled samples of one recording.

    Every centre-line crossing with ``spec.horizon`` seconds of track before it
    gives one FD/OV sample; every vehicle that never crosses gives one
    lane-keeping sample at the middle frame of its track.
    """
    fps = recording.meta.frame_rate
    shift = int(np.floor(spec.horizon * fps + 0.5))
    result = ExtractionResult()
    for traj in recording:
        if traj.vclass != "car" and not spec.include_trucks:
            result.skipped["not_a_car"] += 1
            continue
        events = centerline_crossings(traj, recording.centerline)
        if not events:
            frame = int(traj.frames[len(traj) // 2])
            maneuver = "LKL" if traj.lane[len(traj) // 2] == LEFT else "LKR"
            _append(result, recording, traj.vehicle_id, frame, maneuver, spec, impute)
            continue
        for crossing, direction in events:
            frame = crossing - shift
            if not traj.has_frame(frame):
                result.skipped["short_history"] += 1
                continue
            if traj.lane[traj.index(frame)] != MANEUVER_LANE[direction]:
                result.skipped["lane_mismatch"] += 1
                continue
            _append(result, recording, traj.vehicle_id, frame, direction, spec, impute)
    result.samples.sort(key=lambda s: (s.recording_id, s.vehicle_id, s.frame))
    return result


def _append(result, recording, vid, frame, maneuver, spec, impute):
    s = measure(recording, vid, frame, maneuver, spec)
    if s is None:
        result.skipped["short_history"] += 1
        return
    result.samples.append(impute_missing(s, spec) if impute else s)


def lane_subset(samples, lane: int) -> list[ManeuverSample]:
    return [s for s in samples if s.lane == lane]


def to_arrays(samples, columns=FULL24) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix and 0/1 lane-change labels."""
    samples = list(samples)
    X = np.array([[s.features[c] for c in columns] for s in samples], dtype=float).reshape(len(samples), len(columns))
    y = np.array([s.label for s in samples], dtype=np.int64)
    return X, y


SAMPLE_HEADER = (("recording_id", "vehicle_id", "frame", "maneuver", "tau", "length")
                 + FULL24 + tuple(f"present_{s}" for s in SLOTS))


def write_samples(samples, path, comment: str | None = None) -> Path:
    """CSV with one row per sample; ``comment`` goes on leading '#' lines, which the reader skips."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SAMPLE_HEADER)
        for s in samples:
            w.writerow([s.recording_id, s.vehicle_id, s.frame, s.maneuver, repr(float(s.tau)),
                        repr(float(s.length))]
                       + [repr(s.features[c]) for c in FULL24]
                       + [int(s.present[slot]) for slot in SLOTS])
    return path


def read_samples(path) -> list[ManeuverSample]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        for row in reader:
            out.append(ManeuverSample(
                recording_id=row["recording_id"], vehicle_id=int(row["vehicle_id"]),
                frame=int(row["frame"]), maneuver=row["maneuver"], tau=float(row["tau"]),
                length=float(row["length"]),
                features={c: float(row[c]) for c in FULL24},
                present={slot: row[f"present_{slot}"] == "1" for slot in SLOTS},
            ))
    return out
