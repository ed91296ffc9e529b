"""Command-line entry point: ``lcbench <subcommand> [options]``.

Every subcommand resolves its settings from built-in defaults, then an optional
JSON config file, then explicit flags (flags win), and writes the resolved
settings plus the tool version into each output file.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__
from .classifiers import BASE_KINDS, TRAINERS, DatasetError, train_classifier
from .descriptive import TABLES, DescriptiveReport
from .ensemble import ENSEMBLE_KINDS, train_ensemble
from .evaluation import (DEFAULT_RATIOS, MODEL_KINDS, BootstrapConfig, SuiteSettings, canonical_kind,
                         evaluate_samples, horizon_sweep, roc_sweep)
from .features import (FULL24, MOBIL_INPUTS, FeatureSpec, extract_samples, lane_subset, read_samples, to_arrays,
                       write_samples)
from .mobil import CalibrationError, calibrate_mobil, train_mobil
from .simulator import ScenarioConfig, ScenarioError, load_config, simulate
from .trajectory import LEFT, RIGHT, TrajectoryError, load_recording, meta_path_for

log = logging.getLogger("lcbench")

ENV_OUT = "LCBENCH_OUT"
LANES = {"right": RIGHT, "left": LEFT}

COMMON = {"out": None, "force": False, "jobs": 1}
DEFAULTS = {
    "simulate": {"scenario": None, "duration": None, "hidden_term": None, "decision_noise": None, "stem": "sim"},
    "extract": {"tracks": [], "subset": "full24", "tau": 2.0, "include_trucks": False,
                "recorded_kinematics": False, "output": "samples.csv"},
    "describe": {"samples": None, "subset": "mobil8"},
    "calibrate": {"samples": None, "lanes": ["right", "left"], "starts": 50, "maxiter": 200},
    "train": {"samples": None, "model": None, "lanes": ["right", "left"], "subset": "mobil8", "starts": 50,
              "classifiers": {}},
    "evaluate": {"samples": None, "models": ["LR", "LDA", "NB", "DT", "SVM", "ANN", "MOBIL"], "lanes": ["right", "left"],
                 "B": 1000, "split": 0.8, "balance": "imbalanced", "resample": "subsample", "subset": "mobil8",
                 "starts": 50, "classifiers": {}},
    "roc": {"samples": None, "models": ["ANN", "MOBIL"], "lanes": ["right", "left"], "ratios": list(DEFAULT_RATIOS),
            "split": 0.8, "subset": "mobil8", "starts": 50, "classifiers": {}},
    "horizon": {"tracks": [], "tau": [2.0, 3.0, 4.0, 5.0], "models": ["stack-ANN"], "lanes": ["right", "left"],
                "B": 1000, "split": 0.8, "balance": "imbalanced", "resample": "subsample", "subset": "full24",
                "starts": 50, "classifiers": {}},
}
STOCHASTIC = frozenset(("simulate", "calibrate", "train", "evaluate", "roc", "horizon"))
OUTPUTS = {
    "simulate": None,  # depends on the scenario's window count
    "extract": None,   # named by --output
    "describe": ["report.json"] + [f"{t}.csv" for t in TABLES],
    "calibrate": ["calibration.json"],
    "train": ["model.json"],
    "evaluate": ["evaluation.json"],
    "roc": ["roc.json"],
    "horizon": ["horizon.json"],
}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _csv_list(kind=str):
    def parse(text):
        try:
            return [kind(t.strip()) for t in text.split(",") if t.strip()]
        except ValueError as e:
            raise argparse.ArgumentTypeError(str(e)) from None
    return parse


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lcbench", description="Lane-change prediction benchmark.")
    p.add_argument("--version", action="version", version=f"lcbench {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")

    def command(name, help_text, stochastic=True):
        s = sub.add_parser(name, help=help_text, description=help_text, argument_default=argparse.SUPPRESS)
        s.add_argument("--config", help="JSON file of settings; explicit flags override it")
        s.add_argument("--out", help=f"output directory (default ${ENV_OUT} or ./lcbench-out)")
        s.add_argument("--force", action="store_true", help="overwrite existing outputs")
        s.add_argument("--jobs", type=int, help="worker processes for independent replicates")
        s.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
        if stochastic:
            s.add_argument("--seed", type=int, help="master seed (required)")
        return s

    def model_args(s, models=True, bootstrap=True, split=True):
        if models:
            s.add_argument("--models", type=_csv_list(), help="comma-separated model kinds")
        s.add_argument("--lanes", type=_csv_list(), help="comma-separated lanes: right,left")
        s.add_argument("--subset", choices=("mobil8", "full24"), help="classifier input features")
        s.add_argument("--starts", type=int, help="MOBIL calibration starts")
        if split:
            s.add_argument("--split", type=float, help="training share of each split")
        if bootstrap:
            s.add_argument("--B", "-B", dest="B", type=int, help="bootstrap replicates")
            s.add_argument("--balance", choices=("imbalanced", "balanced"))
            s.add_argument("--resample", choices=("subsample", "with-replacement"))

    s = command("simulate", "Simulate two-lane traffic and write recordings in the tracks format.")
    s.add_argument("--scenario", help="scenario JSON (ScenarioConfig fields)")
    s.add_argument("--duration", type=float)
    s.add_argument("--hidden-term", dest="hidden_term", type=float, help="strength of the hidden decision urge")
    s.add_argument("--decision-noise", dest="decision_noise", type=float)
    s.add_argument("--stem", help="file name prefix")

    s = command("extract", "Extract labelled maneuver samples from recordings.", stochastic=False)
    s.add_argument("--tracks", nargs="+", help="tracks CSV files (metadata sidecars next to them)")
    s.add_argument("--subset", choices=("mobil8", "full24"))
    s.add_argument("--tau", type=float, help="horizon before the centre-line crossing in s")
    s.add_argument("--include-trucks", dest="include_trucks", action="store_true")
    s.add_argument("--recorded-kinematics", dest="recorded_kinematics", action="store_true")
    s.add_argument("--output", help="samples file name inside the output directory")

    s = command("describe", "Frequency table, correlations, PCA and odds ratios of a sample set.", stochastic=False)
    s.add_argument("--samples", help="samples CSV")
    s.add_argument("--subset", choices=("mobil8", "full24"))

    s = command("calibrate", "Least-squares calibration of the IDM+MOBIL parameters per lane.")
    s.add_argument("--samples", help="samples CSV")
    s.add_argument("--lanes", type=_csv_list())
    s.add_argument("--starts", type=int)
    s.add_argument("--maxiter", type=int)

    s = command("train", "Train one model per lane on all samples.")
    s.add_argument("--samples", help="samples CSV")
    s.add_argument("--model", help="model kind")
    model_args(s, models=False, bootstrap=False, split=False)

    s = command("evaluate", "Repeated 80/20 cross-validation of several models.")
    s.add_argument("--samples", help="samples CSV")
    model_args(s)

    s = command("roc", "ROC points from sweeping the training class balance.")
    s.add_argument("--samples", help="samples CSV")
    s.add_argument("--ratios", type=_csv_list(float), help="lane-keeping:lane-change training ratios")
    model_args(s, bootstrap=False)

    s = command("horizon", "Re-extract at several horizons and evaluate each.")
    s.add_argument("--tracks", nargs="+", help="tracks CSV files")
    s.add_argument("--tau", type=_csv_list(float), help="comma-separated horizons in s")
    model_args(s)
    return p


# --------------------------------------------------------------------------- configuration

def resolve(command: str, ns: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    allowed = {**COMMON, **DEFAULTS[command]}
    if command in STOCHASTIC:
        allowed["seed"] = None
    cfg = dict(allowed)
    flags = {k: v for k, v in vars(ns).items() if k not in ("command", "config", "verbose")}
    path = getattr(ns, "config", None)
    if path:
        try:
            with open(path) as fh:
                from_file = json.load(fh)
        except FileNotFoundError:
            raise DataError(f"config file {path} not found") from None
        except json.JSONDecodeError as e:
            raise DataError(f"config file {path} is not valid JSON: {e}") from None
        if not isinstance(from_file, dict):
            raise DataError(f"config file {path} must hold a JSON object")
        unknown = sorted(set(from_file) - set(allowed))
        if unknown:
            raise UsageError(f"unknown setting(s) in {path}: {', '.join(unknown)}")
        cfg.update(from_file)
    cfg.update(flags)
    if cfg["out"] is None:
        cfg["out"] = os.environ.get(ENV_OUT) or "lcbench-out"
    if command in STOCHASTIC and cfg.get("seed") is None:
        raise UsageError(f"{command} needs --seed (or 'seed' in the config file)")
    if cfg["jobs"] < 1:
        raise UsageError("--jobs must be at least 1")
    if "models" in cfg:
        cfg["models"] = [_kind(m) for m in cfg["models"]]
    if cfg.get("model") is not None:
        cfg["model"] = _kind(cfg["model"])
    if "lanes" in cfg:
        bad = [l for l in cfg["lanes"] if l not in LANES]
        if bad or not cfg["lanes"]:
            raise UsageError(f"lanes must be among right,left; got {','.join(cfg['lanes']) or 'nothing'}")
    return cfg


def _kind(name: str) -> str:
    try:
        return canonical_kind(name)
    except ValueError:
        raise UsageError(f"unknown model {name!r}; expected one of {', '.join(MODEL_KINDS)}") from None


def _settings(cfg: dict) -> SuiteSettings:
    configs = {}
    for kind, overrides in (cfg.get("classifiers") or {}).items():
        if kind not in BASE_KINDS:
            raise UsageError(f"classifier settings for unknown kind {kind!r}")
        cfg_type = TRAINERS[kind][1]
        names = {f.name for f in fields(cfg_type)}
        unknown = sorted(set(overrides) - names)
        if unknown:
            raise UsageError(f"unknown {kind} setting(s): {', '.join(unknown)}")
        configs[kind] = cfg_type(**overrides)
    return SuiteSettings(subset=cfg.get("subset", "mobil8"), mobil_starts=cfg.get("starts", 50), configs=configs)


def _bootstrap(cfg: dict) -> BootstrapConfig:
    return BootstrapConfig(B=cfg["B"], split=cfg["split"], balance=cfg["balance"], seed=cfg["seed"],
                           resample=cfg["resample"])


# where and how fast a run happens does not change its results, so reports leave these out
EXECUTION_ONLY = frozenset(("out", "force", "jobs"))


def header(command: str, cfg: dict) -> dict:
    recorded = {k: v for k, v in cfg.items() if k not in EXECUTION_ONLY}
    return {"tool": "lcbench", "version": __version__, "command": command, "config": recorded}


# --------------------------------------------------------------------------- output

def _claim(out: Path, names, force: bool) -> list[Path]:
    paths = [out / n for n in names]
    if not force:
        existing = [p for p in paths if p.exists()]
        if existing:
            raise UsageError(f"{existing[0]} exists; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    return paths


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _load_samples(path):
    if not path:
        raise UsageError("--samples is required")
    try:
        samples = read_samples(path)
    except FileNotFoundError:
        raise DataError(f"samples file {path} not found") from None
    except (KeyError, ValueError) as e:
        raise DataError(f"cannot read samples from {path}: {e}") from None
    if not samples:
        raise DataError(f"{path} holds no samples")
    return samples


def _load_recordings(paths):
    if not paths:
        raise UsageError("--tracks is required")
    try:
        return [load_recording(p) for p in paths]
    except FileNotFoundError as e:
        raise DataError(str(e)) from None


def _lane_arrays(samples, lane_name):
    sub = lane_subset(samples, LANES[lane_name])
    X, y = to_arrays(sub, FULL24)
    if len(y) == 0 or y.min() == y.max():
        raise DataError(f"{lane_name} lane needs both lane-change and lane-keeping samples")
    return X, y


# --------------------------------------------------------------------------- subcommands

def cmd_simulate(cfg: dict) -> str:
    try:
        scenario = load_config(cfg["scenario"]) if cfg["scenario"] else ScenarioConfig()
    except FileNotFoundError:
        raise DataError(f"scenario file {cfg['scenario']} not found") from None
    changes = {"seed": cfg["seed"]}
    for key in ("duration", "hidden_term", "decision_noise"):
        if cfg[key] is not None:
            changes[key] = cfg[key]
    scenario = ScenarioConfig.from_dict({**scenario.to_dict(), **changes})
    out = Path(cfg["out"])
    stem = cfg["stem"]
    n = scenario.n_windows
    tracks = [f"{stem}_tracks.csv"] if n == 1 else [f"{stem}_w{k}_tracks.csv" for k in range(n)]
    names = tracks + [meta_path_for(t).name for t in tracks]
    names += [f"{stem}_events.csv", f"{stem}_manifest.json"]
    paths = _claim(out, names, cfg["force"])
    result = simulate(scenario)
    written = result.write(out, stem)
    doc = header("simulate", cfg)
    doc.update({"scenario": scenario.to_dict(), "tracks": [p.name for p in written["tracks"]],
                "events": len(result.events), "min_bumper_gap": result.min_bumper_gap})
    _write_json(paths[-1], doc)
    return f"wrote {len(written['tracks'])} recording(s) and {len(result.events)} lane-change events to {out}"


def cmd_extract(cfg: dict) -> str:
    recordings = _load_recordings(cfg["tracks"])
    spec = FeatureSpec(subset=cfg["subset"], horizon=cfg["tau"], include_trucks=cfg["include_trucks"],
                       use_recorded_kinematics=cfg["recorded_kinematics"])
    out = Path(cfg["out"])
    name = cfg["output"]
    summary_name = Path(name).with_suffix(".json").name
    paths = _claim(out, [name, summary_name], cfg["force"])
    samples, skipped = [], {}
    for rec in recordings:
        res = extract_samples(rec, spec)
        samples.extend(res.samples)
        for k, v in res.skipped.items():
            skipped[k] = skipped.get(k, 0) + v
    head = header("extract", cfg)
    write_samples(samples, paths[0], comment=json.dumps(head, sort_keys=True))
    counts = {}
    for s in samples:
        counts[s.maneuver] = counts.get(s.maneuver, 0) + 1
    _write_json(paths[1], {**head, "counts": counts, "skipped": skipped, "n": len(samples)})
    return f"extracted {len(samples)} samples " + " ".join(f"{k}={v}" for k, v in sorted(counts.items()))


def cmd_describe(cfg: dict) -> str:
    samples = _load_samples(cfg["samples"])
    out = Path(cfg["out"])
    _claim(out, OUTPUTS["describe"], cfg["force"])
    rep = DescriptiveReport.from_samples(samples, FeatureSpec(subset=cfg["subset"]))
    rep.write(out, header("describe", cfg), force=True)
    lines = [f"{'maneuver':<9}{'count':>7}{'%':>8}{'vx':>9}"]
    for m, r in rep.frequency.items():
        lines.append(f"{m:<9}{r['count']:>7}{r['percent']:>8.2f}{r['mean_vx']:>9.2f}")
    return "\n".join(lines)


def cmd_calibrate(cfg: dict) -> str:
    samples = _load_samples(cfg["samples"])
    paths = _claim(Path(cfg["out"]), OUTPUTS["calibrate"], cfg["force"])
    results, lines = {}, []
    for name in cfg["lanes"]:
        sub = lane_subset(samples, LANES[name])
        res = calibrate_mobil(sub, LANES[name], n_starts=cfg["starts"], seed=cfg["seed"], maxiter=cfg["maxiter"])
        results[name] = res.to_dict()
        p = res.params
        lines.append(f"{name}: objective {res.objective:.4f}  p={p.p:.3f}  b={p.b:.3f}")
    _write_json(paths[0], {**header("calibrate", cfg), "lanes": results})
    return "\n".join(lines)


def cmd_train(cfg: dict) -> str:
    if cfg["model"] is None:
        raise UsageError("--model is required")
    samples = _load_samples(cfg["samples"])
    paths = _claim(Path(cfg["out"]), OUTPUTS["train"], cfg["force"])
    settings = _settings(cfg)
    kind = cfg["model"]
    models = {}
    for name in cfg["lanes"]:
        X_full, y = _lane_arrays(samples, name)
        if kind == "MOBIL":
            X = X_full[:, [FULL24.index(c) for c in MOBIL_INPUTS]]
            model = train_mobil(X, y, LANES[name], n_starts=cfg["starts"], seed=cfg["seed"])
        else:
            X = X_full[:, [FULL24.index(c) for c in settings.columns]]
            if kind in ENSEMBLE_KINDS:
                model = train_ensemble(kind, X, y, seed=cfg["seed"], configs=settings.configs)
            else:
                model = train_classifier(kind, X, y, settings.configs.get(kind))
        models[name] = model.to_dict()
    _write_json(paths[0], {**header("train", cfg), "model": kind, "lanes": models})
    return f"trained {kind} on {', '.join(cfg['lanes'])} lane(s)"


def cmd_evaluate(cfg: dict) -> str:
    samples = _load_samples(cfg["samples"])
    paths = _claim(Path(cfg["out"]), OUTPUTS["evaluate"], cfg["force"])
    lanes = [LANES[n] for n in cfg["lanes"]]
    for n in cfg["lanes"]:
        _lane_arrays(samples, n)
    reports = evaluate_samples(samples, cfg["models"], _bootstrap(cfg), _settings(cfg), cfg["jobs"], lanes)
    _write_json(paths[0], {**header("evaluate", cfg), "reports": {k: r.to_dict() for k, r in reports.items()}})
    return "\n\n".join(r.table() for r in reports.values())


def cmd_roc(cfg: dict) -> str:
    samples = _load_samples(cfg["samples"])
    paths = _claim(Path(cfg["out"]), OUTPUTS["roc"], cfg["force"])
    settings = _settings(cfg)
    curves, lines = {}, []
    for name in cfg["lanes"]:
        X, y = _lane_arrays(samples, name)
        curves[name] = {}
        for kind in cfg["models"]:
            train, test = roc_sweep(X, y, kind, LANES[name], cfg["ratios"], cfg["seed"], cfg["split"], settings,
                                    jobs=cfg["jobs"])
            curves[name][kind] = {"train": train.to_dict(), "test": test.to_dict()}
            pts = " ".join(f"({f:.3f},{t:.3f})" for f, t, _ in test.points)
            lines.append(f"{name} {kind} test: {pts}")
    _write_json(paths[0], {**header("roc", cfg), "curves": curves})
    return "\n".join(lines)


def cmd_horizon(cfg: dict) -> str:
    recordings = _load_recordings(cfg["tracks"])
    paths = _claim(Path(cfg["out"]), OUTPUTS["horizon"], cfg["force"])
    spec = FeatureSpec(subset=cfg["subset"])
    lanes = [LANES[n] for n in cfg["lanes"]]
    reports = horizon_sweep(recordings, cfg["tau"], cfg["models"], _bootstrap(cfg), _settings(cfg), spec,
                            cfg["jobs"], lanes)
    doc = {f"{tau:g}/{lane}": r.to_dict() for (tau, lane), r in reports.items()}
    _write_json(paths[0], {**header("horizon", cfg), "reports": doc})
    return "\n\n".join(r.table() for r in reports.values())


COMMANDS = {
    "simulate": cmd_simulate, "extract": cmd_extract, "describe": cmd_describe, "calibrate": cmd_calibrate,
    "train": cmd_train, "evaluate": cmd_evaluate, "roc": cmd_roc, "horizon": cmd_horizon,
}

DATA_ERRORS = (DataError, TrajectoryError, DatasetError, CalibrationError, ScenarioError, FileNotFoundError,
               KeyError, ValueError)


def run(argv=None) -> int:
    """Exit codes: 0 success, 1 usage error, 2 data or integrity error."""
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except SystemExit as e:  # --help and --version
        return int(e.code or 0)
    if not ns.command:
        parser.print_usage(sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if getattr(ns, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(ns.command, ns)
        message = COMMANDS[ns.command](cfg)
    except UsageError as e:
        print(f"lcbench {ns.command}: {e}", file=sys.stderr)
        return 1
    except DATA_ERRORS as e:
        print(f"lcbench {ns.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    if message:
        print(message)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
