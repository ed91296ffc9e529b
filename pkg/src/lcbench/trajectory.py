"""Two-lane highway trajectory recordings.

Recordings use a HighD-compatible tracks file plus a small JSON sidecar with
the recording metadata. On load every position is converted to vehicle
centres in a normalized frame where +x is the direction of travel and +y
points towards the left (fast) lane, so downstream code never has to care
which carriageway a recording came from.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

RIGHT = 0
LEFT = 1
LANE_NAMES = {RIGHT: "right", LEFT: "left"}

TRACK_COLUMNS = (
    "frame", "id", "x", "y", "xVelocity", "yVelocity",
    "xAcceleration", "yAcceleration", "laneId", "width", "height", "class",
)


class TrajectoryError(Exception):
    """Base class for recording problems."""


class RecordingParseError(TrajectoryError):
    pass


class RecordingIntegrityError(TrajectoryError):
    pass


@dataclass(frozen=True)
class RecordingMeta:
    """Recording-level metadata.

    ``lane_markings`` are lateral positions in file coordinates (image y,
    pointing down, as in HighD) for the one carriageway being studied: outer
    edge, centre line, median edge. ``direction`` is ``"lower"`` for traffic
    moving towards +x in the file and ``"upper"`` for traffic moving towards -x.
    """

    recording_id: str
    frame_rate: float = 25.0
    road_length: float = 420.0
    lane_markings: tuple[float, ...] = (0.0, 3.75, 7.5)
    direction: str = "lower"

    def __post_init__(self):
        if not self.frame_rate > 0:
            raise ValueError("frame_rate must be positive")
        if not self.road_length > 0:
            raise ValueError("road_length must be positive")
        marks = np.asarray(self.lane_markings, dtype=float)
        if len(marks) < 3:
            raise ValueError("need at least three lane markings for two lanes")
        d = np.diff(marks)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("lane_markings must be strictly monotone")
        if self.direction not in ("lower", "upper"):
            raise ValueError(f"unknown direction {self.direction!r}")
        object.__setattr__(self, "lane_markings", tuple(float(m) for m in marks))

    @property
    def centerline(self) -> float:
        """Centre line in file coordinates."""
        marks = sorted(self.lane_markings)
        return marks[len(marks) // 2]

    @property
    def internal_centerline(self) -> float:
        return -self.centerline if self.direction == "lower" else self.centerline

    def to_dict(self) -> dict:
        return {
            "recording_id": self.recording_id,
            "frame_rate": self.frame_rate,
            "road_length": self.road_length,
            "lane_markings": list(self.lane_markings),
            "direction": self.direction,
        }

    @classmethod
    def from_dict(cls, d: dict) -> RecordingMeta:
        return cls(
            recording_id=str(d["recording_id"]),
            frame_rate=float(d.get("frame_rate", 25.0)),
            road_length=float(d["road_length"]),
            lane_markings=tuple(d["lane_markings"]),
            direction=d.get("direction", "lower"),
        )


class TrackFrame(NamedTuple):
    vehicle_id: int
    frame: int
    x: float
    y: float
    v_x: float
    v_y: float
    a_x: float
    a_y: float
    lane: int
    length: float
    vclass: str


@dataclass(frozen=True)
class NeighborSet:
    P: TrackFrame | None = None
    F: TrackFrame | None = None
    PA: TrackFrame | None = None
    FA: TrackFrame | None = None

    def __getitem__(self, slot: str) -> TrackFrame | None:
        return getattr(self, slot)


@dataclass(eq=False)
class Trajectory:
    """One vehicle's contiguous track in normalized coordinates."""

    vehicle_id: int
    frames: np.ndarray
    x: np.ndarray
    y: np.ndarray
    vx: np.ndarray
    vy: np.ndarray
    ax: np.ndarray
    ay: np.ndarray
    lane: np.ndarray
    length: float
    width: float = 1.8
    vclass: str = "car"
    lane_id: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def first_frame(self) -> int:
        return int(self.frames[0])

    @property
    def last_frame(self) -> int:
        return int(self.frames[-1])

    def has_frame(self, frame: float) -> bool:
        return self.first_frame <= frame <= self.last_frame

    def index(self, frame: int) -> int:
        i = int(frame) - self.first_frame
        if not 0 <= i < len(self.frames):
            raise KeyError(f"vehicle {self.vehicle_id} has no frame {frame}")
        return i

    def at(self, frame: int) -> TrackFrame:
        i = self.index(frame)
        return TrackFrame(
            self.vehicle_id, int(self.frames[i]), float(self.x[i]), float(self.y[i]),
            float(self.vx[i]), float(self.vy[i]), float(self.ax[i]), float(self.ay[i]),
            int(self.lane[i]), self.length, self.vclass,
        )


@dataclass(eq=False)
class Recording:
    meta: RecordingMeta
    trajectories: dict[int, Trajectory] = field(default_factory=dict)

    def __post_init__(self):
        self.trajectories = dict(sorted(self.trajectories.items()))
        self._index = None

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self):
        return iter(self.trajectories.values())

    def __getitem__(self, vehicle_id: int) -> Trajectory:
        return self.trajectories[vehicle_id]

    @property
    def centerline(self) -> float:
        return self.meta.internal_centerline

    def frame_slice(self, frame: int):
        """Rows present at ``frame`` as arrays (vehicle ids, x, lane), sorted by (x, id)."""
        if self._index is None:
            self._build_index()
        frames, ids, xs, lanes = self._index
        lo = np.searchsorted(frames, frame, side="left")
        hi = np.searchsorted(frames, frame, side="right")
        return ids[lo:hi], xs[lo:hi], lanes[lo:hi]

    def _build_index(self):
        trajs = list(self.trajectories.values())
        if not trajs:
            empty = np.zeros(0)
            self._index = (empty.astype(int), empty.astype(int), empty, empty.astype(int))
            return
        frames = np.concatenate([t.frames for t in trajs])
        ids = np.concatenate([np.full(len(t), t.vehicle_id) for t in trajs])
        xs = np.concatenate([t.x for t in trajs])
        lanes = np.concatenate([t.lane for t in trajs])
        order = np.lexsort((ids, xs, frames))
        self._index = (frames[order], ids[order], xs[order], lanes[order])


def lane_of(y, centerline: float):
    """Lane code from normalized lateral position; the centre line itself counts as right."""
    return np.where(np.asarray(y) > centerline, LEFT, RIGHT).astype(np.int8)


def read_meta(path) -> RecordingMeta:
    with open(path) as fh:
        return RecordingMeta.from_dict(json.load(fh))


def meta_path_for(tracks_path) -> Path:
    p = Path(tracks_path)
    return p.with_name(p.stem + ".meta.json")


def _vehicle_class(raw: str) -> str:
    return "truck" if raw.strip().lower() in ("truck", "bus", "1") else "car"


def load_recording(path, meta: RecordingMeta | None = None) -> Recording:
    """Read a tracks file into a :class:`Recording`.

    When ``meta`` is omitted the sidecar next to ``path`` is read. Vehicles
    whose mean lateral position lies outside the studied carriageway (the
    other driving direction in a full HighD file) are dropped.
    """
    path = Path(path)
    if meta is None:
        meta = read_meta(meta_path_for(path))

    rows: dict[int, list] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise RecordingParseError(f"{path}: missing header") from None
        header = [h.strip() for h in header]
        missing = [c for c in TRACK_COLUMNS if c not in header]
        if missing:
            raise RecordingParseError(f"{path}: missing columns {missing}")
        col = {name: header.index(name) for name in TRACK_COLUMNS}
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            try:
                frame = int(rec[col["frame"]])
                vid = int(rec[col["id"]])
                nums = [float(rec[col[c]]) for c in TRACK_COLUMNS[2:8]]
                lane_raw = rec[col["laneId"]].strip()
                lane_id = int(float(lane_raw)) if lane_raw else 0
                width = float(rec[col["width"]])
                height = float(rec[col["height"]])
                vclass = _vehicle_class(rec[col["class"]])
            except (ValueError, IndexError) as exc:
                raise RecordingParseError(f"{path}: line {lineno}: {exc}") from None
            rows.setdefault(vid, []).append((frame, *nums, lane_id, width, height, vclass, lineno))

    return _assemble(meta, rows)


def _assemble(meta: RecordingMeta, rows: dict[int, list]) -> Recording:
    lower = meta.direction == "lower"
    c_int = meta.internal_centerline
    band_lo, band_hi = min(meta.lane_markings), max(meta.lane_markings)
    lane_width = abs(meta.lane_markings[1] - meta.lane_markings[0])
    trajectories = {}
    for vid, recs in rows.items():
        frames = np.array([r[0] for r in recs], dtype=np.int64)
        if np.any(np.diff(frames) <= 0):
            raise RecordingIntegrityError(f"vehicle {vid}: frames are not strictly increasing")
        if np.any(np.diff(frames) != 1):
            raise RecordingIntegrityError(f"vehicle {vid}: frames are not contiguous")
        data = np.array([r[1:7] for r in recs], dtype=float)
        lane_ids = np.array([r[7] for r in recs], dtype=np.int64)
        lengths = np.array([r[8] for r in recs], dtype=float)
        widths = np.array([r[9] for r in recs], dtype=float)
        if np.any(lengths <= 0):
            raise RecordingIntegrityError(f"vehicle {vid}: non-positive length")
        length = float(lengths[0])
        width = float(widths[0])
        xc = data[:, 0] + lengths / 2.0
        yc = data[:, 1] + widths / 2.0
        if not (band_lo - lane_width <= yc.mean() <= band_hi + lane_width):
            continue
        vx, vy, ax, ay = data[:, 2], data[:, 3], data[:, 4], data[:, 5]
        if lower:
            x, y = xc, -yc
            vy, ay = -vy, -ay
        else:
            x, y = meta.road_length - xc, yc
            vx, ax = -vx, -ax
        trajectories[vid] = Trajectory(
            vehicle_id=vid, frames=frames, x=x, y=y, vx=vx, vy=vy, ax=ax, ay=ay,
            lane=lane_of(y, c_int), length=length, width=width,
            vclass=recs[0][10], lane_id=lane_ids,
        )
    return Recording(meta, trajectories)


def write_recording(recording: Recording, path, precision: int = 6) -> Path:
    """Write tracks in file coordinates plus the metadata sidecar; rows ordered by (frame, id)."""
    path = Path(path)
    meta = recording.meta
    lower = meta.direction == "lower"
    out = []
    for t in recording:
        if lower:
            xc, yc = t.x, -t.y
            vx, vy, ax, ay = t.vx, -t.vy, t.ax, -t.ay
        else:
            xc, yc = meta.road_length - t.x, t.y
            vx, vy, ax, ay = -t.vx, t.vy, -t.ax, t.ay
        lane_ids = t.lane_id if t.lane_id is not None else t.lane + 1
        cls = "Truck" if t.vclass == "truck" else "Car"
        for i in range(len(t)):
            out.append((int(t.frames[i]), t.vehicle_id, xc[i] - t.length / 2, yc[i] - t.width / 2,
                        vx[i], vy[i], ax[i], ay[i], int(lane_ids[i]), t.length, t.width, cls))
    out.sort(key=lambda r: (r[0], r[1]))
    fmt = f"{{:.{precision}f}}"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACK_COLUMNS)
        for r in out:
            w.writerow([r[0], r[1], *(fmt.format(v) for v in r[2:8]), r[8],
                        fmt.format(r[9]), fmt.format(r[10]), r[11]])
    with open(meta_path_for(path), "w") as fh:
        json.dump(meta.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def resolve_neighbors(vehicle_id: int, frame: int, recording: Recording) -> NeighborSet:
    """The four surrounding vehicles of ``vehicle_id`` at ``frame``.

    Vehicles are totally ordered by (x, vehicle_id); the predecessor is the
    next vehicle in that order on the relevant lane and the follower the
    previous one, which makes equal-x ties deterministic.
    """
    subject = recording[vehicle_id].at(frame)
    ids, xs, lanes = recording.frame_slice(frame)
    slots = {}
    for same, ahead_slot, behind_slot in ((True, "P", "F"), (False, "PA", "FA")):
        mask = (lanes == subject.lane) if same else (lanes != subject.lane)
        mask &= ids != vehicle_id
        cand_ids, cand_x = ids[mask], xs[mask]
        ahead = (cand_x > subject.x) | ((cand_x == subject.x) & (cand_ids > vehicle_id))
        # rows are sorted by (x, id): nearest ahead is the first, nearest behind the last
        a_idx = np.flatnonzero(ahead)
        b_idx = np.flatnonzero(~ahead)
        slots[ahead_slot] = recording[int(cand_ids[a_idx[0]])].at(frame) if len(a_idx) else None
        slots[behind_slot] = recording[int(cand_ids[b_idx[-1]])].at(frame) if len(b_idx) else None
    return NeighborSet(**slots)


def centerline_crossings(trajectory: Trajectory, centerline: float | RecordingMeta) -> list[tuple[int, str]]:
    """Centre-line crossings as (first frame past the line, "OV" or "FD")."""
    if isinstance(centerline, RecordingMeta):
        centerline = centerline.internal_centerline
    side = lane_of(trajectory.y, centerline)
    changes = np.flatnonzero(side[1:] != side[:-1]) + 1
    return [(int(trajectory.frames[i]), "OV" if side[i] == LEFT else "FD") for i in changes]
