"""Intelligent Driver Model, the asymmetric MOBIL lane-change rule, and its calibration."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from .features import MOBIL_INPUTS, ManeuverSample, to_arrays
from .trajectory import LEFT, RIGHT

log = logging.getLogger(__name__)

B_SAFE = -4.0
PARAM_NAMES = ("v0", "T", "alpha", "beta", "length", "p", "b")
# tested ranges used by the least-squares estimation
DEFAULT_BOUNDS = ((20.0, 80.0), (0.0, 5.0), (0.0, 5.0), (0.0, 5.0), (0.0, 10.0), (0.0, 1.0), (-4.0, 4.0))
# alpha and beta enter through sqrt(alpha*beta); keep them off zero
_POSITIVE_FLOOR = 1e-3
# overlapping vehicles get this net gap in the tolerant (vectorized) path
_GAP_FLOOR = 0.1


class IdmDomainError(ValueError):
    pass


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class IdmParams:
    v0: float = 33.0
    T: float = 1.5
    alpha: float = 1.0
    beta: float = 1.5
    length: float = 7.0

    def __post_init__(self):
        for name in ("v0", "T", "alpha", "beta", "length"):
            if not getattr(self, name) > 0:
                raise ValueError(f"IDM parameter {name} must be positive")


@dataclass(frozen=True)
class MobilParams:
    idm: IdmParams
    p: float
    b: float
    b_safe: float = B_SAFE

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("politeness must lie in [0, 1]")
        if not math.isfinite(self.b):
            raise ValueError("threshold must be finite")

    def as_vector(self) -> np.ndarray:
        i = self.idm
        return np.array([i.v0, i.T, i.alpha, i.beta, i.length, self.p, self.b])

    @classmethod
    def from_vector(cls, theta) -> MobilParams:
        v0, T, alpha, beta, length, p, b = (float(t) for t in theta)
        return cls(IdmParams(v0, max(T, 1e-9), max(alpha, _POSITIVE_FLOOR), max(beta, _POSITIVE_FLOOR),
                             max(length, 1e-9)), min(max(p, 0.0), 1.0), b)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> MobilParams:
        return cls(IdmParams(**d["idm"]), d["p"], d["b"], d.get("b_safe", B_SAFE))


# per-lane estimates reported for two-lane German highways
REFERENCE_PARAMS = {
    RIGHT: MobilParams(IdmParams(63.16, 1.04, 1.45, 2.60, 7.27), p=0.53, b=1.56),
    LEFT: MobilParams(IdmParams(58.77, 3.97, 2.76, 1.37, 6.17), p=0.64, b=-1.14),
}


def idm_acceleration(v: float, v_lead: float, dx: float, params: IdmParams) -> float:
    """IDM acceleration behind a leader ``dx`` metres ahead (centre to centre).

    ``dx = inf`` is the free road.
    """
    if v < 0:
        raise IdmDomainError("speed must be non-negative")
    free = 1.0 - (v / params.v0) ** 4
    if math.isinf(dx):
        return params.alpha * free
    gap = dx - params.length
    if gap <= 0:
        raise IdmDomainError(f"spacing {dx:.3f} m does not exceed vehicle length {params.length:.3f} m")
    f = params.length + params.T * v + v * (v - v_lead) / (2.0 * math.sqrt(params.alpha * params.beta))
    return params.alpha * (free - (f / gap) ** 2)


def equilibrium_spacing(v: float, params: IdmParams) -> float:
    """Spacing at which a vehicle at speed ``v`` behind an equally fast leader does not accelerate."""
    free = 1.0 - (v / params.v0) ** 4
    if free <= 0:
        return math.inf
    return params.length + (params.length + params.T * v) / math.sqrt(free)


def _idm_grad(v, v_lead, dx, theta):
    """Vectorized IDM acceleration and its gradient w.r.t. (v0, T, alpha, beta, length).

    Net gaps below ``_GAP_FLOOR`` are floored instead of rejected.
    """
    v0, T, alpha, beta, ell = theta[:5]
    sq = math.sqrt(alpha * beta)
    raw_gap = dx - ell
    floored = raw_gap < _GAP_FLOOR
    s = np.where(floored, _GAP_FLOOR, raw_gap)
    dv = v - v_lead
    f = ell + T * v + v * dv / (2.0 * sq)
    r = f / s
    ratio4 = (v / v0) ** 4
    a = alpha * (1.0 - ratio4 - r * r)
    g = np.empty((5,) + np.shape(a))
    g[0] = alpha * 4.0 * ratio4 / v0
    g[1] = -2.0 * alpha * r * v / s
    df_dalpha = -v * dv / (4.0 * alpha * sq)
    df_dbeta = -v * dv / (4.0 * beta * sq)
    g[2] = (1.0 - ratio4 - r * r) - 2.0 * alpha * r * df_dalpha / s
    g[3] = -2.0 * alpha * r * df_dbeta / s
    dr_dell = np.where(floored, 1.0 / s, (s + f) / (s * s))
    g[4] = -2.0 * alpha * r * dr_dell
    return a, g


def _split(X):
    X = np.asarray(X, dtype=float)
    cols = {name: X[:, i] for i, name in enumerate(MOBIL_INPUTS)}
    v = np.maximum(cols["vx"], 0.0)
    return v, cols


def _margins(X, theta, lane: int, b_safe: float = B_SAFE, grad: bool = False):
    """Safety and incentive margins; lane change iff safety >= 0 and incentive > 0."""
    v, c = _split(X)
    v_p = np.maximum(v + c["dv_P"], 0.0)
    v_pa = np.maximum(v + c["dv_PA"], 0.0)
    v_fa = np.maximum(v + c["dv_FA"], 0.0)
    v_f = np.maximum(v + c["dv_F"], 0.0)
    p, b = theta[5], theta[6]

    a_cur, g_cur = _idm_grad(v, v_p, c["dx_P"], theta)
    a_new, g_new = _idm_grad(v, v_pa, c["dx_PA"], theta)
    # adjacent follower behind the subject after the change, and behind PA before it
    fa_after, g_fa_after = _idm_grad(v_fa, v, c["dx_FA"], theta)
    if lane == RIGHT:
        other_after, g_oa = fa_after, g_fa_after
        other_before, g_ob = _idm_grad(v_fa, v_pa, c["dx_FA"] + c["dx_PA"], theta)
    else:
        # fold-down: politeness towards the current follower, who gains P as leader
        other_after, g_oa = _idm_grad(v_f, v_p, c["dx_F"] + c["dx_P"], theta)
        other_before, g_ob = _idm_grad(v_f, v, c["dx_F"], theta)

    safety = fa_after - b_safe
    incentive = a_new - a_cur + p * (other_after - other_before) - b
    if not grad:
        return safety, incentive
    n = len(v)
    gs = np.zeros((7, n))
    gs[:5] = g_fa_after
    gi = np.zeros((7, n))
    gi[:5] = g_new - g_cur + p * (g_oa - g_ob)
    gi[5] = other_after - other_before
    gi[6] = -1.0
    return safety, incentive, gs, gi


def mobil_predict(X, params: MobilParams, lane: int) -> np.ndarray:
    """Vectorized decisions over rows laid out as :data:`MOBIL_INPUTS`."""
    safety, incentive = _margins(X, params.as_vector(), lane, params.b_safe)
    return ((safety >= 0) & (incentive > 0)).astype(np.int64)


def mobil_decide(sample: ManeuverSample, params: MobilParams, lane: int | None = None) -> int:
    """1 for lane change, 0 for lane keeping; strict about overlapping vehicles."""
    lane = sample.lane if lane is None else lane
    f = sample.features
    idm = params.idm
    v = f["vx"]

    def acc(speed, lead_speed, dx):
        return idm_acceleration(max(speed, 0.0), max(lead_speed, 0.0), dx, idm)

    a = acc(v, v + f["dv_P"], f["dx_P"])
    a_new = acc(v, v + f["dv_PA"], f["dx_PA"])
    fa_after = acc(v + f["dv_FA"], v, f["dx_FA"])
    if lane == RIGHT:
        gain = fa_after - acc(v + f["dv_FA"], v + f["dv_PA"], f["dx_FA"] + f["dx_PA"])
    else:
        gain = (acc(v + f["dv_F"], v + f["dv_P"], f["dx_F"] + f["dx_P"])
                - acc(v + f["dv_F"], v, f["dx_F"]))
    if fa_after < params.b_safe:
        return 0
    return int(a_new - a + params.p * gain > params.b)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def surrogate_objective(theta, X, y, lane: int, kappa: float, b_safe: float = B_SAFE, grad: bool = False):
    """Mean squared error of sigmoid(margin / kappa) against the labels."""
    safety, incentive, gs, gi = _margins(X, theta, lane, b_safe, grad=True)
    use_safety = safety < incentive
    m = np.where(use_safety, safety, incentive)
    s = _sigmoid(m / kappa)
    resid = s - y
    loss = float(np.mean(resid * resid))
    if not grad:
        return loss
    dm = np.where(use_safety, gs, gi)
    w = 2.0 * resid * s * (1.0 - s) / kappa / len(y)
    return loss, dm @ w


def hard_objective(theta, X, y, lane: int, b_safe: float = B_SAFE) -> float:
    safety, incentive = _margins(X, theta, lane, b_safe)
    pred = (safety >= 0) & (incentive > 0)
    return float(np.mean((pred.astype(float) - y) ** 2))


@dataclass
class StartResult:
    index: int
    theta: np.ndarray
    objective: float


@dataclass
class CalibrationResult:
    params: MobilParams
    objective: float
    lane: int
    seed: int
    n_starts: int
    starts: list[StartResult] = field(default_factory=list)

    @property
    def std(self) -> dict[str, float]:
        th = np.array([s.theta for s in self.starts])
        sd = th.std(axis=0, ddof=1) if len(th) > 1 else np.zeros(7)
        return dict(zip(PARAM_NAMES, map(float, sd)))

    def to_dict(self) -> dict:
        return {
            "lane": "right" if self.lane == RIGHT else "left",
            "seed": self.seed,
            "n_starts": self.n_starts,
            "objective": self.objective,
            "params": dict(zip(PARAM_NAMES, map(float, self.params.as_vector()))),
            "b_safe": self.params.b_safe,
            "std": self.std,
            "starts": [{"index": s.index, "objective": s.objective,
                        "params": dict(zip(PARAM_NAMES, map(float, s.theta)))} for s in self.starts],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _run_start(index, u0, X, y, lane, lo, hi, kappas, maxiter, polish=True):
    span = hi - lo

    def decode(u):
        theta = lo + np.clip(u, 0.0, 1.0) * span
        theta[2] = max(theta[2], _POSITIVE_FLOOR)
        theta[3] = max(theta[3], _POSITIVE_FLOOR)
        return theta

    def fun(u, kappa):
        loss, g = surrogate_objective(decode(u), X, y, lane, kappa, grad=True)
        return loss, g * span

    u = np.asarray(u0, dtype=float)
    best_theta = decode(u)
    best_obj = hard_objective(best_theta, X, y, lane)
    for kappa in kappas:
        res = minimize(fun, u, args=(kappa,), jac=True, method="L-BFGS-B",
                       bounds=[(0.0, 1.0)] * 7, options={"maxiter": maxiter})
        u = np.clip(res.x, 0.0, 1.0)
        theta = decode(u)
        obj = hard_objective(theta, X, y, lane)
        if obj <= best_obj:
            best_theta, best_obj = theta, obj
    if best_obj > 0 and polish:
        best_theta, best_obj = _polish(best_theta, best_obj, X, y, lane, lo, hi)
    return StartResult(index, best_theta, best_obj)


_POLISH_STEPS = (-0.2, -0.1, -0.05, -0.02, -0.01, 0.01, 0.02, 0.05, 0.1, 0.2)


def _polish(theta, obj, X, y, lane, lo, hi, sweeps: int = 5):
    """Coordinate search on the 0/1 objective itself.

    The surrogate saturates on badly misclassified samples, so a few of them
    can survive the annealing with no gradient left to fix them. Only strict
    improvements are accepted.
    """
    theta = theta.copy()
    for _ in range(sweeps):
        improved = False
        for k in range(7):
            cands = np.concatenate((np.linspace(lo[k], hi[k], 25), theta[k] * (1.0 + np.array(_POLISH_STEPS))))
            cands = np.clip(cands, lo[k], hi[k])
            if k in (2, 3):
                cands = np.maximum(cands, _POSITIVE_FLOOR)
            for c in cands:
                trial = theta.copy()
                trial[k] = c
                o = hard_objective(trial, X, y, lane)
                if o < obj:
                    theta, obj, improved = trial, o, True
        # (alpha*c, beta/c, b*c) scales every acceleration and the threshold alike,
        # leaving the incentive labels unchanged and moving only the safety margin
        for c in np.geomspace(0.25, 4.0, 49):
            trial = theta.copy()
            trial[2], trial[3], trial[6] = theta[2] * c, theta[3] / c, theta[6] * c
            if np.any(trial < lo) or np.any(trial > hi):
                continue
            o = hard_objective(trial, X, y, lane)
            if o < obj:
                theta, obj, improved = trial, o, True
        if not improved or obj == 0:
            break
    return theta, obj


def calibrate_mobil(data, lane: int, bounds=DEFAULT_BOUNDS, n_starts: int = 50, seed: int = 0,
                    kappas=(1.0, 0.1, 0.01), maxiter: int = 200, labels=None) -> CalibrationResult:
    """Least-squares fit of the seven IDM+MOBIL parameters for one lane.

    ``data`` is either a sequence of samples or a matrix laid out as
    :data:`MOBIL_INPUTS` (then ``labels`` is required). Each start draws a
    uniform point inside ``bounds`` and runs L-BFGS-B on the smoothed
    objective for each temperature in ``kappas``; the start with the lowest
    0/1 objective wins, ties going to the lower start index.
    """
    if labels is None:
        X, y = to_arrays(data, MOBIL_INPUTS)
    else:
        X, y = np.asarray(data, dtype=float), np.asarray(labels)
    y = y.astype(float)
    if len(np.unique(y)) < 2:
        raise CalibrationError("calibration needs both lane-change and lane-keeping samples")
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    if np.any(hi < lo):
        raise ValueError("upper bound below lower bound")
    streams = np.random.SeedSequence(seed).spawn(n_starts)
    starts = []
    for i, ss in enumerate(streams):
        u0 = np.random.default_rng(ss).uniform(0.0, 1.0, size=7)
        starts.append(_run_start(i, u0, X, y, lane, lo, hi, kappas, maxiter))
    best = min(starts, key=lambda s: (s.objective, s.index))
    log.debug("lane %d calibration: best objective %.4f from start %d", lane, best.objective, best.index)
    return CalibrationResult(MobilParams.from_vector(best.theta), best.objective, lane, seed, n_starts, starts)


@dataclass
class MobilModel:
    """Calibrated rule-based predictor with the classifier interface."""

    lane: int
    params: MobilParams
    objective: float = float("nan")
    kind: str = "MOBIL"
    threshold: float = 0.5

    def margin(self, X) -> np.ndarray:
        safety, incentive = _margins(X, self.params.as_vector(), self.lane, self.params.b_safe)
        return np.minimum(safety, incentive)

    def predict(self, X) -> np.ndarray:
        return mobil_predict(X, self.params, self.lane)

    def score(self, X) -> np.ndarray:
        return _sigmoid(self.margin(X))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lane": self.lane, "params": self.params.to_dict(),
                "objective": self.objective}

    @classmethod
    def from_dict(cls, d: dict) -> MobilModel:
        return cls(d["lane"], MobilParams.from_dict(d["params"]), d.get("objective", float("nan")))


def train_mobil(X, y, lane: int, n_starts: int = 50, seed: int = 0, bounds=DEFAULT_BOUNDS, **kw) -> MobilModel:
    res = calibrate_mobil(X, lane, bounds=bounds, n_starts=n_starts, seed=seed, labels=y, **kw)
    return MobilModel(lane, res.params, res.objective)
