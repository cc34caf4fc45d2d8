"""Attribute-level fairness measurements, per-round records and reports.

Accuracies are percentages. Group means are unweighted over classes; on the
balanced test sets used here that equals the sample-weighted mean.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FLOAT_FMT = ".17g"


@dataclass
class RoundRecord:
    round: int
    per_class_accuracy: np.ndarray
    overall_accuracy: float
    target_mean: float
    other_mean: float
    fairness_gap: float
    per_client_update_norm: np.ndarray
    attack_active: bool = False
    defense_actions: list = field(default_factory=list)
    # instrumented attack diagnostics (None outside attacked rounds)
    target_error: float | None = None
    identity_residual: float | None = None
    malicious_norm: float | None = None
    honest_median_norm: float | None = None

    @property
    def num_classes(self) -> int:
        return len(self.per_class_accuracy)


def fairness_gap(per_class_accuracy, target_classes) -> tuple[float, float, float]:
    """(target_mean, other_mean, target_mean - other_mean); NaN classes are skipped."""
    acc = np.asarray(per_class_accuracy, dtype=np.float64)
    targets = {int(c) for c in target_classes}
    if not targets:
        raise ValueError("target class set is empty")
    if not targets <= set(range(len(acc))):
        raise ValueError(f"target classes {sorted(targets)} out of range for {len(acc)} classes")
    mask = np.zeros(len(acc), dtype=bool)
    mask[sorted(targets)] = True
    if mask.all():
        raise ValueError("no non-target classes")
    tgt, oth = acc[mask], acc[~mask]
    tgt, oth = tgt[~np.isnan(tgt)], oth[~np.isnan(oth)]
    if len(tgt) == 0 or len(oth) == 0:
        raise ValueError("a class group has no defined accuracy")
    t, o = float(tgt.mean()), float(oth.mean())
    return t, o, t - o


def csv_header(num_classes: int) -> list[str]:
    return (["round"] + [f"acc_class_{c}" for c in range(num_classes)]
            + ["overall", "target_mean", "other_mean", "gap", "attack_active",
               "max_update_norm", "median_update_norm", "defense_flags"])


def _fmt(x) -> str:
    return format(float(x), FLOAT_FMT)


def csv_row(rec: RoundRecord) -> list[str]:
    norms = np.asarray(rec.per_client_update_norm, dtype=np.float64)
    return ([str(rec.round)] + [_fmt(a) for a in rec.per_class_accuracy]
            + [_fmt(rec.overall_accuracy), _fmt(rec.target_mean), _fmt(rec.other_mean),
               _fmt(rec.fairness_gap), "true" if rec.attack_active else "false",
               _fmt(norms.max()), _fmt(np.median(norms)),
               ";".join(a.flag() for a in rec.defense_actions)])


class RoundCSVWriter:
    """Appends one flushed row per round, so a partial file is a valid prefix."""

    def __init__(self, path, num_classes: int):
        self.path = Path(path)
        self.num_classes = num_classes
        self._fh = self.path.open("w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(csv_header(num_classes))
        self._fh.flush()

    def append(self, rec: RoundRecord) -> None:
        if rec.num_classes != self.num_classes:
            raise ValueError("record class count does not match the CSV header")
        self._writer.writerow(csv_row(rec))
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def emit_round_csv(records, path) -> Path:
    records = list(records)
    if not records:
        raise ValueError("no round records to write")
    with RoundCSVWriter(path, records[0].num_classes) as w:
        for rec in records:
            w.append(rec)
    return Path(path)


def read_round_csv(path) -> list[dict]:
    """Parse a round CSV back into dicts of floats/bools/str."""
    out = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for key, val in row.items():
                if key == "round":
                    parsed[key] = int(val)
                elif key == "attack_active":
                    parsed[key] = val == "true"
                elif key == "defense_flags":
                    parsed[key] = val
                else:
                    parsed[key] = float(val)
            out.append(parsed)
    return out


@dataclass
class FairnessReport:
    scenario: str
    final: RoundRecord
    target_classes: frozenset
    attack_window: tuple | None = None
    defense: str = "none"
    baseline: RoundRecord | None = None

    def _means(self, rec):
        t, o, _ = fairness_gap(rec.per_class_accuracy, self.target_classes)
        overall = float(np.nanmean(rec.per_class_accuracy))
        return {"target": t, "other": o, "overall": overall}

    @property
    def table(self) -> dict:
        """Target / other / overall class means, recomputed from the final record."""
        return self._means(self.final)

    @property
    def gap(self) -> float:
        t = self.table
        return t["target"] - t["other"]

    def to_dict(self) -> dict:
        d = {
            "scenario": self.scenario,
            "round": self.final.round,
            "target_classes": sorted(self.target_classes),
            "attack_window": list(self.attack_window) if self.attack_window else None,
            "defense": self.defense,
            "per_class_accuracy": [None if math.isnan(a) else float(a) for a in self.final.per_class_accuracy],
            "table": self.table,
            "gap": self.gap,
        }
        if self.baseline is not None:
            d["baseline_table"] = self._means(self.baseline)
        return d

    def summary(self) -> str:
        t = self.table
        lines = [f"scenario: {self.scenario}",
                 f"target classes: {', '.join(str(c) for c in sorted(self.target_classes))}"]
        if self.attack_window is None:
            lines.append("attack: no attack configured")
        else:
            lines.append(f"attack: active from round {self.attack_window[0]} to round {self.attack_window[1]}")
        lines.append(f"defense: {self.defense}")
        lines.append(f"final round: {self.final.round}")
        lines.append(f"{'':10}{'Target':>10}{'Other':>10}{'Overall':>10}")
        lines.append(f"{'final':10}{t['target']:10.2f}{t['other']:10.2f}{t['overall']:10.2f}")
        if self.baseline is not None:
            b = self._means(self.baseline)
            lines.append(f"{'baseline':10}{b['target']:10.2f}{b['other']:10.2f}{b['overall']:10.2f}")
        marker = "  <-- attack gap" if self.attack_window is not None else ""
        lines.append(f"fairness gap: {self.gap:.2f} points{marker}")
        return "\n".join(lines) + "\n"


def render_report(records, scenario: str, target_classes, attack_window=None, defense: str = "none",
                  baseline_records=None) -> tuple[FairnessReport, str]:
    records = list(records)
    if not records:
        raise ValueError("no round records")
    report = FairnessReport(scenario=scenario, final=records[-1], target_classes=frozenset(target_classes),
                            attack_window=tuple(attack_window) if attack_window else None, defense=defense,
                            baseline=list(baseline_records)[-1] if baseline_records else None)
    return report, report.summary()


def write_report(report: FairnessReport, directory) -> tuple[Path, Path]:
    directory = Path(directory)
    txt = directory / "report.txt"
    js = directory / "report.json"
    txt.write_text(report.summary(), encoding="utf-8")
    js.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return txt, js
