"""Standalone descriptive statistics of a sample set as one JSON report plus plot-ready CSV tables."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .evaluation import describe
from .features import FeatureSpec

TABLES = ("frequency", "indicator_correlation", "feature_correlation", "loadings", "circle", "odds_ratios")


@dataclass
class DescriptiveReport:
    n: int
    subset: str
    frequency: dict
    indicator_correlation: dict
    pca: dict | None
    odds_ratios: dict | None
    notes: list = field(default_factory=list)

    @classmethod
    def from_samples(cls, samples, spec: FeatureSpec = FeatureSpec()) -> "DescriptiveReport":
        d = describe(samples, spec)
        return cls(d["n"], d["subset"], d["frequency"], d["correlation"], d["pca"], d["odds_ratios"], d["notes"])

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def tables(self) -> dict[str, list[list]]:
        """Each table as a header row followed by data rows."""
        out = {}
        freq = [["maneuver", "count", "percent", "mean_vx", "mean_dx_P", "mean_T_P"]]
        for m, r in self.frequency.items():
            freq.append([m, r["count"], r["percent"], r["mean_vx"], r["mean_dx_P"], r["mean_T_P"]])
        out["frequency"] = freq
        if self.indicator_correlation:
            variables = list(next(iter(self.indicator_correlation.values())))
            rows = [["maneuver"] + variables]
            for m, r in self.indicator_correlation.items():
                rows.append([m] + [r[v] for v in variables])
            out["indicator_correlation"] = rows
        if self.pca:
            v = self.pca["variables"]
            k = len(next(iter(self.pca["loadings"].values())))
            comps = [f"PC{i + 1}" for i in range(k)]
            out["feature_correlation"] = [["variable"] + v] + [[a] + row for a, row in
                                                                zip(v, self.pca["correlation_matrix"])]
            out["loadings"] = [["variable"] + comps] + [[c] + self.pca["loadings"][c] for c in v]
            out["circle"] = [["variable"] + comps] + [[c] + self.pca["circle"][c] for c in v]
        if self.odds_ratios:
            out["odds_ratios"] = [["variable", "odds_ratio", "ci_low", "ci_high"]] + [
                [c, r["odds_ratio"], r["ci_low"], r["ci_high"]] for c, r in self.odds_ratios.items()]
        return out

    def write(self, out_dir, header: dict | None = None, force: bool = False) -> list[Path]:
        """Write report.json and one CSV per table; ``header`` goes into the JSON and on a leading '#' line of each CSV."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        tables = self.tables()
        paths = [out / "report.json"] + [out / f"{name}.csv" for name in TABLES if name in tables]
        if not force:
            existing = [p for p in paths if p.exists()]
            if existing:
                raise FileExistsError(f"{existing[0]} exists; pass force to overwrite")
        doc = dict(header or {})
        doc["report"] = self.to_dict()
        paths[0].write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
        for name in TABLES:
            if name not in tables:
                continue
            with open(out / f"{name}.csv", "w", newline="") as f:
                if header:
                    f.write("# " + json.dumps(header, sort_keys=True) + "\n")
                w = csv.writer(f, lineterminator="\n")
                for row in tables[name]:
                    w.writerow(["" if x is None else (repr(x) if isinstance(x, float) else x) for x in row])
        return paths


def report(samples, spec: FeatureSpec = FeatureSpec(), out_dir=None, header: dict | None = None,
           force: bool = False) -> DescriptiveReport:
    rep = DescriptiveReport.from_samples(samples, spec)
    if out_dir is not None:
        rep.write(out_dir, header, force)
    return rep
