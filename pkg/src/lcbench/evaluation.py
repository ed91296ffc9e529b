"""Error decomposition, repeated 80/20 cross-validation, ROC sweeps and descriptive statistics."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .classifiers import BASE_KINDS, LogisticConfig, default_config, train_classifier
from .classifiers.logistic import fit_coefficients
from .ensemble import BAGGING_KINDS, ENSEMBLE_KINDS, train_bases, train_ensemble
from .features import FULL24, MANEUVERS, MOBIL_INPUTS, SLOTS, FeatureSpec, extract_samples, lane_subset, to_arrays
from .mobil import train_mobil
from .trajectory import LEFT, RIGHT

log = logging.getLogger(__name__)

MODEL_KINDS = BASE_KINDS + ("MOBIL",) + ENSEMBLE_KINDS
LANE_NAMES = {RIGHT: "right", LEFT: "left"}
QUANTILES = (0.025, 0.5, 0.975)


def canonical_kind(name: str) -> str:
    """Case-insensitive lookup of a model name ("stack-ann" -> "stack-ANN")."""
    for k in MODEL_KINDS:
        if k.lower() == name.strip().lower():
            return k
    raise ValueError(f"unknown model {name!r}; expected one of {', '.join(MODEL_KINDS)}")


# --------------------------------------------------------------------------- errors

@dataclass(frozen=True)
class ErrorTriple:
    """Misclassification counts of one prediction run; rates are derived from them."""

    n_lc: int
    n_lk: int
    wrong_lc: int
    wrong_lk: int

    @property
    def n(self) -> int:
        return self.n_lc + self.n_lk

    @property
    def total(self) -> float:
        return (self.wrong_lc + self.wrong_lk) / self.n

    @property
    def error_lc(self) -> float | None:
        return self.wrong_lc / self.n_lc if self.n_lc else None

    @property
    def error_lk(self) -> float | None:
        return self.wrong_lk / self.n_lk if self.n_lk else None

    def identity_holds(self) -> bool:
        """total*N == error_LC*N_LC + error_LK*N_LK in exact rational arithmetic."""
        lhs = Fraction(self.wrong_lc + self.wrong_lk, self.n) * self.n
        rhs = Fraction(0)
        if self.n_lc:
            rhs += Fraction(self.wrong_lc, self.n_lc) * self.n_lc
        if self.n_lk:
            rhs += Fraction(self.wrong_lk, self.n_lk) * self.n_lk
        return lhs == rhs

    def to_dict(self) -> dict:
        return {"n": self.n, "n_lc": self.n_lc, "n_lk": self.n_lk, "wrong_lc": self.wrong_lc,
                "wrong_lk": self.wrong_lk, "total": self.total, "error_lc": self.error_lc,
                "error_lk": self.error_lk}


def error_triple(predictions, labels) -> ErrorTriple:
    p = np.asarray(predictions).astype(np.int64).ravel()
    y = np.asarray(labels).astype(np.int64).ravel()
    if len(p) != len(y):
        raise ValueError(f"{len(p)} predictions for {len(y)} labels")
    if len(y) == 0:
        raise ValueError("no predictions to score")
    lc = y == 1
    return ErrorTriple(int(lc.sum()), int((~lc).sum()), int(np.sum(p[lc] != 1)), int(np.sum(p[~lc] != 0)))


# --------------------------------------------------------------------------- model suite

@dataclass
class SuiteSettings:
    """How each model kind is trained inside the harness."""

    subset: str = "mobil8"
    mobil_starts: int = 50
    mobil_maxiter: int = 200
    configs: dict = field(default_factory=dict)

    @property
    def columns(self) -> tuple[str, ...]:
        return FeatureSpec(subset=self.subset).columns

    def to_dict(self) -> dict:
        cfg = {}
        for k in BASE_KINDS:
            c = self.configs.get(k, default_config(k))
            cfg[k] = asdict(c)
        return {"subset": self.subset, "mobil_starts": self.mobil_starts, "mobil_maxiter": self.mobil_maxiter,
                "classifiers": cfg}


_IDX = {c: i for i, c in enumerate(FULL24)}


def column_index(columns) -> np.ndarray:
    return np.array([_IDX[c] for c in columns], dtype=np.int64)


class Suite:
    """Models fitted on one training split; bases are shared by every ensemble."""

    def __init__(self, models: dict, settings: SuiteSettings):
        self.models = models
        self.settings = settings
        self.cols = column_index(settings.columns)
        self.mobil_cols = column_index(MOBIL_INPUTS)

    def predict(self, kind: str, X_full, rng=None) -> np.ndarray:
        m = self.models[kind]
        if kind == "MOBIL":
            return m.predict(X_full[:, self.mobil_cols])
        if kind in BAGGING_KINDS:
            return m.predict(X_full[:, self.cols], rng)
        return m.predict(X_full[:, self.cols])

    def score(self, kind: str, X_full) -> np.ndarray:
        m = self.models[kind]
        if kind == "MOBIL":
            return m.score(X_full[:, self.mobil_cols])
        return m.score(X_full[:, self.cols])


def fit_suite(kinds, X_full, y, lane: int, settings: SuiteSettings, seed: int = 0) -> Suite:
    kinds = [canonical_kind(k) for k in kinds]
    cols = column_index(settings.columns)
    X = X_full[:, cols]
    models = {}
    bases = None
    if any(k in ENSEMBLE_KINDS for k in kinds):
        bases = train_bases(X, y, settings.configs)
        models.update({k: m for k, m in zip(BASE_KINDS, bases) if k in kinds})
    for k in kinds:
        if k in models:
            continue
        if k == "MOBIL":
            models[k] = train_mobil(X_full[:, column_index(MOBIL_INPUTS)], y, lane, n_starts=settings.mobil_starts,
                                    seed=seed, maxiter=settings.mobil_maxiter)
        elif k in BASE_KINDS:
            models[k] = train_classifier(k, X, y, settings.configs.get(k))
        else:
            models[k] = train_ensemble(k, X, y, bases, seed, settings.configs)
    return Suite(models, settings)


# --------------------------------------------------------------------------- splits

def stratified_split(y, split: float, rng, replace: bool = False):
    """Per-class random partition; with ``replace`` the training rows are drawn with replacement."""
    train, test = [], []
    for c in (0, 1):
        idx = np.flatnonzero(y == c)
        k = int(round(split * len(idx)))
        if replace:
            draw = rng.choice(idx, size=k, replace=True) if len(idx) else idx
            train.append(draw)
            test.append(np.setdiff1d(idx, draw))
        else:
            perm = rng.permutation(idx)
            train.append(perm[:k])
            test.append(perm[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def undersample(train, y, ratio: float, rng):
    """Keep all of the minority side and ``ratio`` lane-keeping rows per lane-change row.

    When there are too few lane-keeping rows, lane changes are dropped instead
    so the ratio holds exactly.
    """
    lc = train[y[train] == 1]
    lk = train[y[train] == 0]
    n_lk = int(round(ratio * len(lc)))
    if n_lk > len(lk):
        n_lc = int(np.floor(len(lk) / ratio))
        lc = rng.choice(lc, size=n_lc, replace=False)
        n_lk = len(lk)
    lk = rng.choice(lk, size=n_lk, replace=False)
    return np.sort(np.concatenate((lc, lk)))


def replicate_seed(seed: int, r: int, attempt: int, purpose: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(r, attempt, purpose))


# --------------------------------------------------------------------------- bootstrap

@dataclass(frozen=True)
class BootstrapConfig:
    B: int = 1000
    split: float = 0.8
    balance: str = "imbalanced"
    seed: int = 0
    resample: str = "subsample"
    max_retries: int = 10

    def __post_init__(self):
        if self.B < 1:
            raise ValueError("need at least one replicate")
        if not 0 < self.split < 1:
            raise ValueError("split must lie strictly between 0 and 1")
        if self.balance not in ("imbalanced", "balanced"):
            raise ValueError(f"unknown balance mode {self.balance!r}")
        if self.resample not in ("subsample", "with-replacement"):
            raise ValueError(f"unknown resampling scheme {self.resample!r}")


def _run_replicate(args):
    r, X_full, y, kinds, lane, settings, cfg = args
    for attempt in range(cfg.max_retries + 1):
        rng = np.random.default_rng(replicate_seed(cfg.seed, r, attempt))
        train, test = stratified_split(y, cfg.split, rng, replace=cfg.resample == "with-replacement")
        if cfg.balance == "balanced":
            train = undersample(train, y, 1.0, rng)
        if len(np.unique(y[train])) < 2 or len(test) == 0:
            continue
        model_seed = int(rng.integers(2 ** 31 - 1))
        suite = fit_suite(kinds, X_full[train], y[train], lane, settings, model_seed)
        out = {"index": r, "attempt": attempt, "n_train": int(len(train)), "n_test": int(len(test)),
               "train": {}, "test": {}}
        for phase, rows, purpose in (("train", train, 1), ("test", test, 2)):
            tie_rng = np.random.default_rng(replicate_seed(cfg.seed, r, attempt, purpose))
            for k in suite.models:
                if k not in kinds:
                    continue
                pred = suite.predict(k, X_full[rows], tie_rng)
                out[phase][k] = error_triple(pred, y[rows])
        return out
    return {"index": r, "attempt": cfg.max_retries, "failed": True}


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(a) for a in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _summary(values) -> dict | None:
    v = np.array([x for x in values if x is not None], dtype=float)
    if len(v) == 0:
        return None
    q = np.quantile(v, QUANTILES)
    return {"mean": float(v.mean()), "sd": float(v.std(ddof=1)) if len(v) > 1 else 0.0,
            "q025": float(q[0]), "median": float(q[1]), "q975": float(q[2]), "n": int(len(v))}


@dataclass
class EvaluationReport:
    lane: int
    kinds: list[str]
    config: BootstrapConfig
    settings: SuiteSettings
    replicates: list[dict]
    tau: float | None = None
    n_samples: int = 0
    n_lc: int = 0

    @property
    def failed(self) -> int:
        return sum(1 for r in self.replicates if r.get("failed"))

    def triples(self, kind: str, phase: str = "test") -> list[ErrorTriple]:
        return [r[phase][kind] for r in self.replicates if not r.get("failed")]

    def mean_total(self, kind: str, phase: str = "test") -> float:
        return float(np.mean([t.total for t in self.triples(kind, phase)]))

    def summary(self) -> dict:
        out = {}
        for k in self.kinds:
            out[k] = {}
            for phase in ("train", "test"):
                ts = self.triples(k, phase)
                out[k][phase] = {"total": _summary([t.total for t in ts]),
                                 "error_lc": _summary([t.error_lc for t in ts]),
                                 "error_lk": _summary([t.error_lk for t in ts])}
        return out

    def to_dict(self) -> dict:
        reps = []
        for r in self.replicates:
            if r.get("failed"):
                reps.append({"index": r["index"], "failed": True})
                continue
            reps.append({"index": r["index"], "attempt": r["attempt"], "n_train": r["n_train"],
                         "n_test": r["n_test"],
                         "train": {k: t.to_dict() for k, t in sorted(r["train"].items())},
                         "test": {k: t.to_dict() for k, t in sorted(r["test"].items())}})
        return {"lane": LANE_NAMES[self.lane], "models": list(self.kinds), "tau": self.tau,
                "n_samples": self.n_samples, "n_lc": self.n_lc, "bootstrap": asdict(self.config),
                "settings": self.settings.to_dict(), "failed_replicates": self.failed,
                "summary": self.summary(), "replicates": reps}

    def table(self) -> str:
        s = self.summary()
        head = f"{LANE_NAMES[self.lane]} lane, B={self.config.B}, {self.config.balance}"
        if self.tau is not None:
            head += f", tau={self.tau:g} s"
        lines = [head, f"{'model':<10}{'phase':<7}{'total %':>14}{'LC %':>14}{'LK %':>14}"]
        for k in self.kinds:
            for phase in ("test", "train"):
                cells = []
                for key in ("total", "error_lc", "error_lk"):
                    v = s[k][phase][key]
                    cells.append("-" if v is None else f"{100 * v['mean']:.2f}±{100 * v['sd']:.2f}")
                lines.append(f"{k:<10}{phase:<7}" + "".join(f"{c:>14}" for c in cells))
        return "\n".join(lines)


def bootstrap_evaluate(X_full, y, kinds, lane: int, config: BootstrapConfig = BootstrapConfig(),
                       settings: SuiteSettings | None = None, jobs: int = 1, tau: float | None = None) -> EvaluationReport:
    """Repeated stratified train/test splits; every model is fitted on the same split per replicate.

    ``X_full`` holds rows laid out as the 24 measured variables so classifiers
    and the rule-based model can each read the columns they need.
    """
    settings = settings or SuiteSettings()
    kinds = [canonical_kind(k) for k in kinds]
    X_full = np.asarray(X_full, dtype=float)
    y = np.asarray(y).astype(np.int64)
    if len(np.unique(y)) < 2:
        raise ValueError("evaluation needs both classes")
    items = [(r, X_full, y, kinds, lane, settings, config) for r in range(config.B)]
    reps = sorted(_map(_run_replicate, items, jobs), key=lambda r: r["index"])
    return EvaluationReport(lane, kinds, config, settings, reps, tau, len(y), int(y.sum()))


def evaluate_samples(samples, kinds, config: BootstrapConfig = BootstrapConfig(),
                     settings: SuiteSettings | None = None, jobs: int = 1, lanes=(RIGHT, LEFT)) -> dict:
    """One report per lane, keyed by lane name."""
    out = {}
    for lane in lanes:
        sub = lane_subset(samples, lane)
        X, y = to_arrays(sub, FULL24)
        tau = sub[0].tau if sub else None
        out[LANE_NAMES[lane]] = bootstrap_evaluate(X, y, kinds, lane, config, settings, jobs, tau)
    return out


# --------------------------------------------------------------------------- ROC

@dataclass
class RocCurve:
    phase: str
    kind: str
    points: list[tuple[float, float, float]]
    skipped: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"phase": self.phase, "model": self.kind, "skipped_ratios": self.skipped,
                "points": [{"fpr": f, "tpr": t, "ratio": r} for f, t, r in self.points]}

    def tpr_at(self, fpr) -> np.ndarray:
        """Linear interpolation with the trivial classifiers (0,0) and (1,1) as end points."""
        pts = sorted(set([(0.0, 0.0), (1.0, 1.0)] + [(f, t) for f, t, _ in self.points]))
        f = np.array([p[0] for p in pts])
        t = np.array([p[1] for p in pts])
        # several points can share an FPR: keep the best TPR there
        uf = np.unique(f)
        ut = np.array([t[f == x].max() for x in uf])
        return np.interp(fpr, uf, ut)


def dominance_fraction(better: RocCurve, worse: RocCurve) -> float:
    """Share of matched-FPR grid points where ``better`` has at least the TPR of ``worse``.

    The grid is every FPR at which either curve has a point; both curves are
    linearly interpolated there.
    """
    if not better.points or not worse.points:
        return float("nan")
    grid = np.unique([p[0] for p in better.points] + [p[0] for p in worse.points])
    return float(np.mean(better.tpr_at(grid) >= worse.tpr_at(grid) - 1e-12))


DEFAULT_RATIOS = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0)


def roc_sweep(X_full, y, kind: str, lane: int, ratios=DEFAULT_RATIOS, seed: int = 0, split: float = 0.8,
              settings: SuiteSettings | None = None, min_rows: int = 10, jobs: int = 1) -> tuple[RocCurve, RocCurve]:
    """Train at several lane-keeping:lane-change ratios on one fixed split; (FPR, TPR) = (error LK, 1 - error LC)."""
    settings = settings or SuiteSettings()
    kind = canonical_kind(kind)
    X_full = np.asarray(X_full, dtype=float)
    y = np.asarray(y).astype(np.int64)
    train, test = stratified_split(y, split, np.random.default_rng(replicate_seed(seed, 0, 0)))
    items = [(i, ratio, X_full, y, train, test, kind, lane, settings, seed, min_rows) for i, ratio in enumerate(ratios)]
    results = _map(_roc_point, items, jobs)
    curves = {}
    for phase in ("train", "test"):
        pts = sorted((r[phase][0], r[phase][1], r["ratio"]) for r in results if r is not None and "skip" not in r)
        skipped = [r["ratio"] for r in results if "skip" in r]
        curves[phase] = RocCurve(phase, kind, pts, skipped)
    return curves["train"], curves["test"]


def _roc_point(args):
    i, ratio, X_full, y, train, test, kind, lane, settings, seed, min_rows = args
    rng = np.random.default_rng(replicate_seed(seed, i, 0, 3))
    rows = undersample(train, y, ratio, rng)
    n_lc = int(y[rows].sum())
    if n_lc < min_rows or len(rows) - n_lc < min_rows:
        log.info("ratio %g leaves fewer than %d training rows in a class; skipped", ratio, min_rows)
        return {"ratio": ratio, "skip": True}
    suite = fit_suite([kind], X_full[rows], y[rows], lane, settings, seed)
    out = {"ratio": ratio}
    for phase, idx, purpose in (("train", rows, 1), ("test", test, 2)):
        pred = suite.predict(kind, X_full[idx], np.random.default_rng(replicate_seed(seed, i, 0, purpose)))
        t = error_triple(pred, y[idx])
        out[phase] = (t.error_lk if t.error_lk is not None else 0.0,
                      1.0 - t.error_lc if t.error_lc is not None else 1.0)
    return out


# --------------------------------------------------------------------------- horizon

def horizon_sweep(recordings, taus=(2.0, 3.0, 4.0, 5.0), kinds=("stack-ANN",), config: BootstrapConfig = BootstrapConfig(),
                  settings: SuiteSettings | None = None, spec: FeatureSpec = FeatureSpec(subset="full24"),
                  jobs: int = 1, lanes=(RIGHT, LEFT)) -> dict:
    """Re-extract the samples at every horizon and evaluate; keyed by (tau, lane name)."""
    settings = settings or SuiteSettings(subset=spec.subset)
    out = {}
    for tau in taus:
        s = FeatureSpec(subset=spec.subset, horizon=float(tau), dt=spec.dt, free_gap=spec.free_gap,
                        min_speed=spec.min_speed, use_recorded_kinematics=spec.use_recorded_kinematics,
                        include_trucks=spec.include_trucks)
        samples = []
        for rec in recordings:
            samples.extend(extract_samples(rec, s).samples)
        for name, rep in evaluate_samples(samples, kinds, config, settings, jobs, lanes).items():
            out[(float(tau), name)] = rep
    return out


# --------------------------------------------------------------------------- descriptive statistics

def _correlation(A):
    Z = (A - A.mean(axis=0)) / A.std(axis=0)
    R = Z.T @ Z / len(A)
    R = 0.5 * (R + R.T)
    np.fill_diagonal(R, 1.0)
    return R


def describe(samples, spec: FeatureSpec = FeatureSpec()) -> dict:
    """Frequencies, indicator correlations, correlation-matrix PCA and logistic odds ratios."""
    samples = list(samples)
    if not samples:
        raise ValueError("no samples to describe")
    notes = []
    n = len(samples)
    # (a) frequency table; spacing and time gap averaged over present predecessors only
    freq = {}
    for m in MANEUVERS:
        sub = [s for s in samples if s.maneuver == m]
        if not sub:
            continue
        with_p = [s for s in sub if s.present["P"]]
        freq[m] = {
            "count": len(sub),
            "percent": 100.0 * len(sub) / n,
            "mean_vx": float(np.mean([s.features["vx"] for s in sub])),
            "mean_dx_P": float(np.mean([s.features["dx_P"] for s in with_p])) if with_p else None,
            "mean_T_P": float(np.mean([s.features["T_P"] for s in with_p])) if with_p else None,
        }

    # (b) maneuver indicators against speed, spacings and speed differences
    variables = ["vx"] + [f"dx_{s}" for s in SLOTS] + [f"dv_{s}" for s in SLOTS]
    V, _ = to_arrays(samples, variables)
    ind_names = [m for m in MANEUVERS if m in freq]
    I = np.column_stack([[1.0 if s.maneuver == m else 0.0 for s in samples] for m in ind_names])
    corr = {}
    for i, m in enumerate(ind_names):
        row = {}
        for j, v in enumerate(variables):
            a, b = I[:, i], V[:, j]
            row[v] = None if a.std() == 0 or b.std() == 0 else float(np.corrcoef(a, b)[0, 1])
        corr[m] = row

    # (c) PCA of the feature correlation matrix
    cols = list(spec.columns)
    X, y = to_arrays(samples, cols)
    const = [c for c, sd in zip(cols, X.std(axis=0)) if sd == 0]
    if const:
        notes.append(f"constant features left out of the PCA and odds ratios: {', '.join(const)}")
    keep = [c for c in cols if c not in const]
    Xk = X[:, [cols.index(c) for c in keep]]
    pca = None
    if len(keep) >= 1 and n >= 2:
        R = _correlation(Xk)
        evals, evecs = np.linalg.eigh(R)
        order = np.argsort(evals)[::-1]
        evals, evecs = np.clip(evals[order], 0.0, None), evecs[:, order]
        # sign convention: largest-magnitude loading of each component positive
        for k in range(evecs.shape[1]):
            if evecs[np.argmax(np.abs(evecs[:, k])), k] < 0:
                evecs[:, k] = -evecs[:, k]
        explained = evals / evals.sum()
        n_comp = min(2, len(keep))
        pca = {
            "variables": keep,
            "explained_variance": explained.tolist(),
            "loadings": {c: evecs[i, :n_comp].tolist() for i, c in enumerate(keep)},
            "circle": {c: (evecs[i, :n_comp] * np.sqrt(evals[:n_comp])).tolist() for i, c in enumerate(keep)},
            "eigenvectors": evecs.tolist(),
            "correlation_matrix": R.tolist(),
        }

    # (d) odds ratios of a lane change per one standard deviation of each variable
    odds = None
    if len(np.unique(y)) == 2 and keep:
        Z = (Xk - Xk.mean(axis=0)) / Xk.std(axis=0)
        coef, cov, converged, _ = fit_coefficients(Z, y.astype(float), LogisticConfig().ridge)
        se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        with np.errstate(over="ignore"):
            table = np.exp(coef[1:, None] + np.outer(se[1:], (0.0, -1.959963984540054, 1.959963984540054)))
        # near-separating variables get intervals beyond floating point; those limits are reported as None
        unbounded = [c for c, row in zip(keep, table) if not np.all(np.isfinite(row) & (row > 0))]
        odds = {c: {key: (float(v) if np.isfinite(v) and v > 0 else None)
                    for key, v in zip(("odds_ratio", "ci_low", "ci_high"), row)}
                for c, row in zip(keep, table)}
        if unbounded:
            notes.append(f"odds-ratio intervals unbounded (near-separating variables): {', '.join(unbounded)}")
        if not converged:
            notes.append("logistic fit for the odds ratios did not converge")
    else:
        notes.append("odds ratios need both lane-change and lane-keeping samples")
    return {"n": n, "subset": spec.subset, "frequency": freq, "correlation": corr, "pca": pca,
            "odds_ratios": odds, "notes": notes}
