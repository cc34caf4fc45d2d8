"""Multi-scenario runs and the Baseline / late-start / full comparison table."""
from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from fairfl.federation import run_experiment

log = logging.getLogger(__name__)

COLUMNS = ("target", "other", "overall")


@dataclass
class SuiteResult:
    # (scenario label, num_clients) -> {"target": ..., "other": ..., "overall": ...}
    cells: dict = field(default_factory=dict)
    results: list = field(default_factory=list)
    failures: list = field(default_factory=list)  # (config name or path, message)

    @property
    def ok(self) -> bool:
        return not self.failures

    def scenarios(self) -> list[str]:
        seen = []
        for label, _ in self.cells:
            if label not in seen:
                seen.append(label)
        return seen

    def client_counts(self) -> list[int]:
        return sorted({n for _, n in self.cells})

    def format_table(self) -> str:
        counts = self.client_counts()
        label_w = max([6] + [len(s) for s in self.scenarios()]) + 2
        cell_w = 9
        group_w = cell_w * len(COLUMNS)
        head1 = " " * label_w + "".join(f"{f'{n} clients':^{group_w}}" for n in counts)
        head2 = f"{'Attack':<{label_w}}" + "".join(f"{c.capitalize():>{cell_w}}" for _ in counts for c in COLUMNS)
        lines = [head1, head2, "-" * len(head2)]
        for label in self.scenarios():
            row = f"{label:<{label_w}}"
            for n in counts:
                cell = self.cells.get((label, n))
                for c in COLUMNS:
                    row += f"{cell[c]:>{cell_w}.2f}" if cell else f"{'-':>{cell_w}}"
            lines.append(row)
        for name, msg in self.failures:
            lines.append(f"FAILED {name}: {msg}")
        return "\n".join(lines) + "\n"

    def write(self, directory) -> tuple[Path, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        txt = directory / "suite_table.txt"
        txt.write_text(self.format_table(), encoding="utf-8")
        path = directory / "suite_table.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["scenario", "num_clients", *COLUMNS])
            for (label, n), cell in self.cells.items():
                w.writerow([label, n, *(format(cell[c], ".17g") for c in COLUMNS)])
        return txt, path


def run_scenario_suite(configs, write: bool = True) -> SuiteResult:
    """Run every config; a failing scenario is recorded and the rest still run.

    ``configs`` may hold :class:`ExperimentConfig` objects or exceptions raised
    while loading them (reported as failures).
    """
    result = SuiteResult()
    for cfg in configs:
        if isinstance(cfg, tuple):  # (name, exception) from a failed parse
            name, exc = cfg
            result.failures.append((str(name), str(exc)))
            continue
        try:
            res = run_experiment(cfg, write=write)
        except Exception as exc:
            log.error("scenario %s failed: %s", cfg.name, exc)
            result.failures.append((cfg.name, f"{type(exc).__name__}: {exc}"))
            continue
        result.results.append(res)
        result.cells[(cfg.scenario or cfg.name, cfg.num_clients)] = res.report.table
    return result


def common_output_root(configs) -> Path | None:
    dirs = [str(Path(c.output_dir).resolve().parent) for c in configs if not isinstance(c, tuple)]
    if not dirs:
        return None
    return Path(os.path.commonpath(dirs))
