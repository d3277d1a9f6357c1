"""Experiment reports: rows, verdicts, deterministic CSV and optional plots."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

PASS, FAIL, UNMET, INCONCLUSIVE = "pass", "fail", "unmet", "inconclusive"

EXIT_PASS, EXIT_FAIL, EXIT_UNMET, EXIT_CONFIG = 0, 1, 2, 3


def format_value(v):
    """Stable text for CSV cells (fixed significant digits, lowercase booleans)."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.12g}"
    return str(v)


@dataclass
class Verdict:
    name: str
    status: str
    detail: str = ""


@dataclass
class ExperimentReport:
    experiment: str
    config_hash: str
    columns: list
    inputs: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    verdicts: list = field(default_factory=list)

    def add_row(self, **row):
        unknown = set(row) - set(self.columns)
        if unknown:
            raise KeyError(f"columns not declared for {self.experiment}: {sorted(unknown)}")
        self.rows.append(row)

    def verdict(self, name, status, detail=""):
        self.verdicts.append(Verdict(name, status, detail))

    @property
    def status(self):
        states = {v.status for v in self.verdicts}
        if FAIL in states:
            return FAIL
        if states & {UNMET, INCONCLUSIVE}:
            return UNMET
        return PASS

    @property
    def exit_code(self):
        return {PASS: EXIT_PASS, FAIL: EXIT_FAIL, UNMET: EXIT_UNMET}[self.status]

    def column(self, name):
        return [r.get(name) for r in self.rows]

    def write_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["experiment", "config_hash"] + list(self.columns))
            for row in self.rows:
                w.writerow([self.experiment, self.config_hash] + [format_value(row.get(c)) for c in self.columns])
        return path

    def summary_text(self):
        lines = [f"experiment = {self.experiment}", f"config_hash = {self.config_hash}"]
        lines += [f"input.{k} = {format_value(v)}" for k, v in self.inputs.items()]
        lines += [f"verdict.{v.name} = {v.status}" + (f"  # {v.detail}" if v.detail else "") for v in self.verdicts]
        lines.append(f"status = {self.status}")
        return "\n".join(lines) + "\n"

    def write(self, out_dir, plot=False):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [self.write_csv(out / "report.csv")]
        (out / "summary.txt").write_text(self.summary_text())
        paths.append(out / "summary.txt")
        if plot:
            p = plot_bound(self, out / f"plot_{self.experiment}.svg")
            if p is not None:
                paths.append(p)
        return paths


def plot_bound(report: ExperimentReport, path) -> Optional[Path]:
    """Line plot of |grad u(p)| and D against R (needs matplotlib)."""
    if not {"R", "grad_p", "D"} <= set(report.columns) or not report.rows:
        return None
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    r = np.array(report.column("R"), dtype=float)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogy(r, np.array(report.column("grad_p"), dtype=float) + 1e-300, "o-", label="|grad u(p)|")
    ax.semilogy(r, np.array(report.column("D"), dtype=float), "s--", label="D")
    if "D_global" in report.columns:
        ax.semilogy(r, np.array(report.column("D_global"), dtype=float), ":", label="global D")
    ax.set_xlabel("R")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)
    return Path(path)
