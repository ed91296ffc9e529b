"""Two-lane ring-road traffic simulator producing recordings with known maneuvers.

Longitudinal motion follows the IDM, lane changes follow the asymmetric MOBIL
rule with per-lane parameters, and an observation window plays the role of
the drone footage: every pass of a vehicle through the window becomes one
track in the output recording.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit as sigmoid

from .features import MOBIL_INPUTS, FeatureSpec, ManeuverSample, extract_samples, to_arrays
from .mobil import IdmParams, MobilParams, _margins
from .trajectory import LEFT, RIGHT, Recording, RecordingMeta, Trajectory, lane_of, write_recording


# generator rule: keep-right asymmetry, overtaking needs a gain, folding down tolerates a loss;
# low politeness on the right lane leaves the safety criterion something to decide
SIM_MOBIL = {
    RIGHT: MobilParams(IdmParams(v0=40.0, T=1.2, alpha=1.5, beta=2.0, length=8.0), p=0.15, b=0.3),
    LEFT: MobilParams(IdmParams(v0=40.0, T=1.5, alpha=1.5, beta=2.0, length=8.0), p=0.6, b=-1.0),
}


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class VehicleSpec:
    lane: int
    x: float
    vclass: str = "car"
    v: float | None = None
    idm: IdmParams | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    road_length: float = 2000.0
    window_length: float = 420.0
    n_windows: int = 4
    n_cars: int = 80
    n_trucks: int = 12
    left_share: float = 0.5
    car_idm: IdmParams = IdmParams(v0=36.0, T=1.2, alpha=1.5, beta=2.0, length=8.5)
    truck_idm: IdmParams = IdmParams(v0=24.0, T=1.6, alpha=0.8, beta=1.5, length=14.0)
    jitter: float = 0.3
    mobil_right: MobilParams = SIM_MOBIL[RIGHT]
    mobil_left: MobilParams = SIM_MOBIL[LEFT]
    car_size: tuple[float, float] = (4.5, 1.8)
    truck_size: tuple[float, float] = (12.0, 2.5)
    lane_width: float = 3.75
    dt: float = 0.1
    duration: float = 600.0
    decision_interval: float = 1.0
    lane_change_duration: float = 3.0
    lane_change_jitter: float = 0.0
    accel_noise: float = 0.0
    decision_noise: float = 0.0
    hidden_term: float = 0.0
    lane_changes: bool = True
    free_gap: float = 500.0
    min_change_gap: float = 2.0
    seed: int = 0
    vehicles: tuple[VehicleSpec, ...] | None = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ScenarioError("time step must be positive")
        if self.duration < 0:
            raise ScenarioError("duration must be non-negative")
        if self.n_windows < 1 or not 0 < self.window_length * self.n_windows <= self.road_length:
            raise ScenarioError("observation windows must fit inside the ring without overlapping")
        if not 0.0 <= self.lane_change_jitter < 1.0:
            raise ScenarioError("lane-change duration jitter is a fraction below one")
        if not 0.0 <= self.decision_noise <= 1.0:
            raise ScenarioError("decision noise is a probability")

    def mobil(self, lane: int) -> MobilParams:
        return self.mobil_right if lane == RIGHT else self.mobil_left

    def to_dict(self) -> dict:
        d = asdict(self)
        d["car_size"] = list(self.car_size)
        d["truck_size"] = list(self.truck_size)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ScenarioConfig:
        d = dict(d)
        for key in ("car_idm", "truck_idm"):
            if key in d and isinstance(d[key], dict):
                d[key] = IdmParams(**d[key])
        for key in ("mobil_right", "mobil_left"):
            if key in d and isinstance(d[key], dict):
                d[key] = MobilParams.from_dict(d[key])
        for key in ("car_size", "truck_size"):
            if key in d:
                d[key] = tuple(d[key])
        if d.get("vehicles") is not None:
            d["vehicles"] = tuple(
                VehicleSpec(**{**v, "idm": IdmParams(**v["idm"]) if v.get("idm") else None})
                for v in d["vehicles"])
        return cls(**d)


@dataclass(frozen=True)
class LaneChangeEvent:
    vehicle_id: int
    sim_vehicle: int
    decision_frame: int
    crossing_frame: int
    direction: str
    window: int = 0


@dataclass
class SimulationResult:
    """One recording per observation window plus the ground-truth event log."""

    recordings: list[Recording]
    events: list[LaneChangeEvent]
    config: ScenarioConfig
    min_bumper_gap: float = math.inf

    @property
    def recording(self) -> Recording:
        return self.recordings[0]

    def write(self, directory, stem: str = "sim") -> dict[str, list[Path]]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        tracks = []
        for k, rec in enumerate(self.recordings):
            name = f"{stem}_tracks.csv" if len(self.recordings) == 1 else f"{stem}_w{k}_tracks.csv"
            tracks.append(write_recording(rec, directory / name))
        events = directory / f"{stem}_events.csv"
        write_events(self.events, events)
        return {"tracks": tracks, "events": [events]}


def write_events(events, path) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("vehicle_id", "decision_frame", "crossing_frame", "direction", "sim_vehicle", "window"))
        for e in events:
            w.writerow((e.vehicle_id, e.decision_frame, e.crossing_frame, e.direction, e.sim_vehicle, e.window))
    return Path(path)


def read_events(path) -> list[LaneChangeEvent]:
    with open(path, newline="") as fh:
        return [LaneChangeEvent(int(r["vehicle_id"]), int(r["sim_vehicle"]), int(r["decision_frame"]),
                                int(r["crossing_frame"]), r["direction"], int(r.get("window") or 0))
                for r in csv.DictReader(fh)]


def equilibrium_speed(spacing: float, p: IdmParams) -> float:
    """Speed at which the IDM is stationary for a given centre-to-centre spacing."""
    gap = spacing - p.length
    if gap <= 0:
        return 0.0

    def resid(v):
        return 1.0 - (v / p.v0) ** 4 - ((p.length + p.T * v) / gap) ** 2

    if resid(0.0) <= 0:
        return 0.0
    return brentq(resid, 0.0, p.v0, xtol=1e-12)


def _jittered(base: IdmParams, jitter: float, rng) -> IdmParams:
    if jitter <= 0:
        return base
    f = rng.uniform(1 - jitter, 1 + jitter, size=4)
    return replace(base, v0=base.v0 * f[0], T=base.T * f[1], alpha=base.alpha * f[2], beta=base.beta * f[3])


def _initial_state(cfg: ScenarioConfig, rng):
    if cfg.vehicles is not None:
        specs = list(cfg.vehicles)
        vehicles = []
        for s in specs:
            base = cfg.truck_idm if s.vclass == "truck" else cfg.car_idm
            vehicles.append((s.lane, s.x % cfg.road_length, s.vclass, s.idm or base, s.v))
    else:
        n_left = int(round(cfg.n_cars * cfg.left_share))
        classes_right = ["truck"] * cfg.n_trucks + ["car"] * (cfg.n_cars - n_left)
        rng.shuffle(classes_right)
        vehicles = []
        for lane, classes in ((RIGHT, classes_right), (LEFT, ["car"] * n_left)):
            n = len(classes)
            if n == 0:
                continue
            spacing = cfg.road_length / n
            offset = rng.uniform(0, spacing)
            for k, vclass in enumerate(classes):
                base = cfg.truck_idm if vclass == "truck" else cfg.car_idm
                idm = _jittered(base, cfg.jitter, rng)
                if spacing <= idm.length + 1.0:
                    raise ScenarioError(
                        f"initial spacing {spacing:.2f} m on lane {lane} is too dense for length {idm.length:.2f} m")
                vehicles.append((lane, offset + k * spacing, vclass, idm, equilibrium_speed(spacing, idm)))
    for lane in (RIGHT, LEFT):
        xs = sorted(v[1] for v in vehicles if v[0] == lane)
        if len(xs) > 1:
            gaps = np.diff(xs + [xs[0] + cfg.road_length])
            lengths = [v[3].length for v in vehicles if v[0] == lane]
            if np.min(gaps) <= min(lengths) + 1.0:
                raise ScenarioError(f"initial spacing on lane {lane} is too dense")
    return vehicles


class _Ring:
    """Neighbour lookup on the ring for the current state."""

    def __init__(self, x, lane, L):
        self.L = L
        self.x = x
        self.order = {}
        self.xs = {}
        for l in (RIGHT, LEFT):
            idx = np.flatnonzero(lane == l)
            o = idx[np.argsort(x[idx], kind="stable")]
            self.order[l] = o
            self.xs[l] = x[o]
        n = len(x)
        self.leader = np.full(n, -1)
        self.follower = np.full(n, -1)
        for l in (RIGHT, LEFT):
            o = self.order[l]
            if len(o) > 1:
                self.leader[o] = np.roll(o, -1)
                self.follower[o] = np.roll(o, 1)

    def ahead_dist(self, i, j):
        return (self.x[j] - self.x[i]) % self.L

    def adjacent(self, i, l):
        """(ahead, behind) vehicle indices on lane ``l`` relative to vehicle i's position."""
        o = self.order[l]
        if len(o) == 0:
            return -1, -1
        pos = np.searchsorted(self.xs[l], self.x[i], side="right")
        ahead = o[pos % len(o)]
        behind = o[(pos - 1) % len(o)]
        if ahead == i:
            ahead = o[(pos + 1) % len(o)] if len(o) > 1 else -1
        if behind == i:
            behind = o[(pos - 2) % len(o)] if len(o) > 1 else -1
        return ahead, behind


def _hidden_term(feats: np.ndarray, lane: int) -> np.ndarray:
    """Extra lane-change urge in (0, 1) that IDM accelerations cannot express.

    Right lane: a close, faster follower pushes the driver out. Left lane: an
    open road ahead invites a return to the right lane. Each is a sigmoid of
    one linear combination of spacings and speed differences.
    """
    col = MOBIL_INPUTS.index
    if lane == RIGHT:
        z = (feats[:, col("dv_F")] - 1.0) / 0.5 - (feats[:, col("dx_F")] - 30.0) / 5.0
    else:
        z = (feats[:, col("dx_P")] - 80.0) / 10.0
    return sigmoid(z)


def simulate(config: ScenarioConfig) -> SimulationResult:
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    vehicles = _initial_state(cfg, rng)
    n = len(vehicles)
    L = cfg.road_length
    lane = np.array([v[0] for v in vehicles], dtype=np.int8)
    x = np.array([v[1] for v in vehicles], dtype=float)
    is_truck = np.array([v[2] == "truck" for v in vehicles])
    P = {k: np.array([getattr(v[3], k) for v in vehicles], dtype=float)
         for k in ("v0", "T", "alpha", "beta", "length")}
    v = np.array([v[4] if v[4] is not None else v[3].v0 for v in vehicles], dtype=float)
    size = np.array([cfg.truck_size if t else cfg.car_size for t in is_truck], dtype=float).reshape(n, 2)
    phys_len, phys_wid = size[:, 0], size[:, 1]

    w = cfg.lane_width
    centerline = -2.0 * w
    lane_center = {RIGHT: centerline - w / 2, LEFT: centerline + w / 2}
    y = np.array([lane_center[l] for l in lane], dtype=float)
    vy = np.zeros(n)
    ay = np.zeros(n)
    trans_start = np.full(n, -1)
    trans_from = np.zeros(n)
    trans_to = np.zeros(n)
    pending = {}

    dt = cfg.dt
    n_steps = int(round(cfg.duration / dt))
    interval = max(1, int(round(cfg.decision_interval / dt)))
    K = max(1, int(round(cfg.lane_change_duration / dt)))
    trans_k = np.full(n, K)
    offsets = np.arange(n) % interval
    spacing_w = L / cfg.n_windows

    track_of = np.full(n, -1)
    next_track = 1
    rows = []
    events = []
    min_gap = math.inf
    sqrt_ab = np.sqrt(P["alpha"] * P["beta"])

    for step in range(n_steps):
        ring = _Ring(x, lane, L)
        lead = ring.leader
        has_lead = lead >= 0
        dx = np.where(has_lead, (x[np.maximum(lead, 0)] - x) % L, np.inf)
        dx = np.where(has_lead & (dx == 0), L, dx)
        if has_lead.any():
            bumper = dx[has_lead] - (phys_len[has_lead] + phys_len[lead[has_lead]]) / 2
            min_gap = min(min_gap, float(bumper.min()))
        v_lead = np.where(has_lead, v[np.maximum(lead, 0)], v)
        gap = np.maximum(dx - P["length"], 0.1)
        f = P["length"] + P["T"] * v + v * (v - v_lead) / (2 * sqrt_ab)
        interaction = np.where(has_lead, (f / gap) ** 2, 0.0)
        acc = P["alpha"] * (1.0 - (v / P["v0"]) ** 4 - interaction)
        if cfg.accel_noise > 0:
            acc = acc + rng.normal(0.0, cfg.accel_noise, size=n)

        # record the frame; windows are disjoint so a vehicle is in at most one
        window = (x // spacing_w).astype(np.int64)
        local = x - window * spacing_w
        inside = (local < cfg.window_length) & (window < cfg.n_windows)
        entering = np.flatnonzero(inside & (track_of < 0))
        track_of[entering] = next_track + np.arange(len(entering))
        next_track += len(entering)
        track_of[~inside] = -1
        idx = np.flatnonzero(inside)
        rows.append(np.column_stack((track_of[idx], np.full(len(idx), step), local[idx], y[idx], v[idx],
                                     vy[idx], acc[idx], ay[idx], idx, window[idx])))

        # lane-change decisions
        if cfg.lane_changes:
            due = np.flatnonzero(((step + offsets) % interval == 0) & ~is_truck & (trans_start < 0))
            if len(due):
                _decide(cfg, rng, step, due, ring, lane, x, v, phys_len, trans_start, trans_from, trans_to,
                        trans_k, lane_center, pending)

        # lateral profile
        moving = np.flatnonzero(trans_start >= 0)
        for i in moving:
            k = step + 1 - trans_start[i]
            kk = trans_k[i]
            d = trans_to[i] - trans_from[i]
            phase = math.pi * min(k, kk) / kk
            y_new = trans_from[i] + d * (1 - math.cos(phase)) / 2
            old_side = y[i] > centerline
            y[i] = y_new
            if k >= kk:
                vy[i], ay[i] = 0.0, 0.0
                trans_start[i] = -1
            else:
                vy[i] = d * math.pi / (2 * kk * dt) * math.sin(phase)
                ay[i] = d * math.pi ** 2 / (2 * (kk * dt) ** 2) * math.cos(phase)
            if (y_new > centerline) != old_side:
                decision_frame, direction = pending.pop(i)
                events.append((i, decision_frame, step + 1, direction))

        x = (x + v * dt) % L
        v = np.maximum(v + acc * dt, 0.0)

    rows = np.concatenate(rows) if rows else np.zeros((0, 10))
    recordings = [_assemble_recording(cfg, rows[rows[:, 9] == k], k, phys_len, phys_wid, is_truck, centerline)
                  for k in range(cfg.n_windows)]
    # events outside every window keep vehicle_id -1
    lookup = {(int(r[8]), int(r[1])): (int(r[0]), int(r[9]))
              for r in rows[np.isin(rows[:, 1], [e[2] for e in events])]}
    log_events = []
    for i, df, cf, d in events:
        tid, win = lookup.get((i, cf), (-1, -1))
        log_events.append(LaneChangeEvent(tid, int(i), int(df), int(cf), d, win))
    return SimulationResult(recordings, log_events, cfg, min_gap)


def _decide(cfg, rng, step, due, ring, lane, x, v, phys_len, trans_start, trans_from, trans_to,
            trans_k, lane_center, pending):
    feats = np.empty((len(due), len(MOBIL_INPUTS)))
    # the rule's desired gap is unclipped and can go negative next to a much slower
    # vehicle, so physical room in the target lane is checked separately
    room = np.ones(len(due), dtype=bool)
    neigh = np.full((len(due), 4), -1)
    col = {name: k for k, name in enumerate(MOBIL_INPUTS)}
    for r, i in enumerate(due):
        other = LEFT if lane[i] == RIGHT else RIGHT
        p_i, f_i = ring.leader[i], ring.follower[i]
        pa_i, fa_i = ring.adjacent(i, other)
        neigh[r] = (p_i, f_i, pa_i, fa_i)
        feats[r, col["vx"]] = v[i]
        for slot, j, ahead in (("P", p_i, True), ("F", f_i, False), ("PA", pa_i, True), ("FA", fa_i, False)):
            if j < 0:
                feats[r, col[f"dx_{slot}"]] = cfg.free_gap
                feats[r, col[f"dv_{slot}"]] = 0.0
            else:
                d = ring.ahead_dist(i, j) if ahead else ring.ahead_dist(j, i)
                feats[r, col[f"dx_{slot}"]] = d
                feats[r, col[f"dv_{slot}"]] = v[j] - v[i]
                if slot in ("PA", "FA") and d - (phys_len[i] + phys_len[j]) / 2 < cfg.min_change_gap:
                    room[r] = False
    decide = np.zeros(len(due), dtype=bool)
    for l in (RIGHT, LEFT):
        m = lane[due] == l
        if not m.any():
            continue
        params = cfg.mobil(l)
        safety, incentive = _margins(feats[m], params.as_vector(), l, params.b_safe)
        if cfg.hidden_term:
            # centred, so the urge can also hold back a change the incentive alone would make
            incentive = incentive + cfg.hidden_term * (_hidden_term(feats[m], l) - 0.5)
        want = incentive > 0
        if cfg.decision_noise > 0:
            flip = rng.random(m.sum()) < cfg.decision_noise
            want = want ^ flip
        decide[m] = want & (safety >= 0) & room[m]
    touched = set()
    for r, i in enumerate(due):
        if not decide[r]:
            continue
        group = {int(i), *(int(j) for j in neigh[r] if j >= 0)}
        if group & touched:
            continue
        touched |= group
        new_lane = LEFT if lane[i] == RIGHT else RIGHT
        trans_start[i] = step
        if cfg.lane_change_jitter > 0:
            j = cfg.lane_change_jitter
            trans_k[i] = max(1, int(round(cfg.lane_change_duration * rng.uniform(1 - j, 1 + j) / cfg.dt)))
        trans_from[i] = lane_center[lane[i]]
        trans_to[i] = lane_center[new_lane]
        pending[int(i)] = (step, "OV" if new_lane == LEFT else "FD")
        lane[i] = new_lane


def _assemble_recording(cfg, rows, window, phys_len, phys_wid, is_truck, centerline) -> Recording:
    meta = RecordingMeta(
        recording_id=f"sim{cfg.seed}" if cfg.n_windows == 1 else f"sim{cfg.seed}w{window}",
        frame_rate=1.0 / cfg.dt,
        road_length=cfg.window_length,
        lane_markings=(-centerline - cfg.lane_width, -centerline, -centerline + cfg.lane_width),
        direction="lower",
    )
    trajectories = {}
    if len(rows):
        arr = rows
        order = np.lexsort((arr[:, 1], arr[:, 0]))
        arr = arr[order]
        tids, starts = np.unique(arr[:, 0], return_index=True)
        bounds = list(starts) + [len(arr)]
        for k, tid in enumerate(tids):
            seg = arr[bounds[k]:bounds[k + 1]]
            i = int(seg[0, 8])
            y = seg[:, 3]
            lanes = lane_of(y, centerline)
            trajectories[int(tid)] = Trajectory(
                vehicle_id=int(tid), frames=seg[:, 1].astype(np.int64), x=seg[:, 2], y=y,
                vx=seg[:, 4], vy=seg[:, 5], ax=seg[:, 6], ay=seg[:, 7], lane=lanes,
                length=float(phys_len[i]), width=float(phys_wid[i]),
                vclass="truck" if is_truck[i] else "car", lane_id=lanes.astype(np.int64) + 1,
            )
    return Recording(meta, trajectories)


@dataclass
class BenchmarkData:
    samples: list[ManeuverSample]
    simulation: SimulationResult
    label_rule: str
    skipped: dict = field(default_factory=dict)


LABEL_RULES = ("mobil_truth", "noisy_nonlinear")


def generate_benchmark(config: ScenarioConfig, label_rule: str = "mobil_truth",
                       spec: FeatureSpec = FeatureSpec(), label_noise: float = 0.0,
                       hidden_strength: float = 20.0) -> BenchmarkData:
    """Simulate and extract labelled samples.

    ``mobil_truth`` relabels every extracted sample with the generator's own
    MOBIL rule for the sample's lane, so a correctly specified calibration can
    reproduce the labels exactly. ``noisy_nonlinear`` adds a hidden term to the
    simulated drivers' incentive and keeps the maneuvers actually driven.
    ``label_noise`` flips each final label independently with that probability.
    """
    if label_rule not in LABEL_RULES:
        raise ValueError(f"unknown label rule {label_rule!r}")
    if label_rule == "noisy_nonlinear" and not config.hidden_term:
        config = replace(config, hidden_term=hidden_strength)
    sim = simulate(config)
    samples, skipped = [], Counter()
    for rec in sim.recordings:
        extracted = extract_samples(rec, spec)
        samples.extend(extracted.samples)
        skipped.update(extracted.skipped)
    if label_rule == "mobil_truth" and samples:
        X, _ = to_arrays(samples, MOBIL_INPUTS)
        lanes = np.array([s.lane for s in samples])
        y = np.zeros(len(samples), dtype=bool)
        for l in (RIGHT, LEFT):
            m = lanes == l
            if m.any():
                params = config.mobil(l)
                safety, incentive = _margins(X[m], params.as_vector(), l, params.b_safe)
                y[m] = (safety >= 0) & (incentive > 0)
        samples = [_relabel(s, bool(lab)) for s, lab in zip(samples, y)]
    if label_noise > 0 and samples:
        rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(7,)))
        flips = rng.random(len(samples)) < label_noise
        samples = [_relabel(s, bool(s.label) ^ bool(fl)) for s, fl in zip(samples, flips)]
    return BenchmarkData(samples, sim, label_rule, dict(skipped))


def _relabel(s: ManeuverSample, change: bool) -> ManeuverSample:
    if s.lane == RIGHT:
        m = "OV" if change else "LKR"
    else:
        m = "FD" if change else "LKL"
    return s if m == s.maneuver else replace(s, maneuver=m)


def save_config(config: ScenarioConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path) -> ScenarioConfig:
    with open(path) as fh:
        return ScenarioConfig.from_dict(json.load(fh))
