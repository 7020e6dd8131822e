"""Run reports: structured text plus machine-readable check rows.

A report echoes the scenario, lists the computed constants, and carries one
row per check (name, status, value, slack/margin, SE).  Re-running the same
config and seed reproduces the report body byte for byte; wall-clock data
(runtime, version of the host) live on comment lines prefixed with '#' so
artifact comparisons can strip them.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__


def fmt(v) -> str:
    """Deterministic scalar rendering for report bodies and CSV cells."""
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class CheckRow:
    name: str
    status: str  # pass | fail | skip | info
    value: object = ""
    margin: float | None = None
    se: float | None = None
    detail: str = ""

    @classmethod
    def from_bool(cls, name: str, ok: bool, value="", margin=None, se=None,
                  detail: str = "") -> "CheckRow":
        return cls(name, "pass" if ok else "fail", value, margin, se, detail)


@dataclass
class Report:
    scenario_name: str
    kind: str
    seed: int
    config_echo: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)
    runtime_s: float = 0.0

    def add(self, row: CheckRow) -> None:
        self.checks.append(row)

    @property
    def ok(self) -> bool:
        return all(c.status != "fail" for c in self.checks)

    @property
    def n_failed(self) -> int:
        return sum(c.status == "fail" for c in self.checks)

    def body_text(self) -> str:
        lines = [
            f"scenario: {self.scenario_name}",
            f"kind: {self.kind}",
            f"seed: {self.seed}",
            f"version: {__version__}",
            "",
            "config:",
        ]
        echo = json.dumps(self.config_echo, indent=2, sort_keys=True)
        lines += ["  " + ln for ln in echo.splitlines()]
        if self.constants:
            lines += ["", "constants:"]
            for k in sorted(self.constants):
                lines.append(f"  {k} = {fmt(self.constants[k])}")
        lines += ["", "checks:"]
        for c in self.checks:
            bits = [f"  [{c.status.upper():4s}] {c.name}"]
            if c.value != "":
                bits.append(f"value={fmt(c.value)}")
            if c.margin is not None:
                bits.append(f"margin={fmt(c.margin)}")
            if c.se is not None:
                bits.append(f"se={fmt(c.se)}")
            if c.detail:
                bits.append(f"({c.detail})")
            lines.append(" ".join(bits))
        lines += [
            "",
            f"result: {'ALL CHECKS PASS' if self.ok else f'{self.n_failed} CHECK(S) FAILED'}",
        ]
        if self.artifacts:
            lines += ["", "artifacts:"]
            lines += [f"  {a}" for a in self.artifacts]
        return "\n".join(lines) + "\n"

    def write(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report_path = out / "report.txt"
        with open(report_path, "w") as fh:
            fh.write(f"# runtime_s={self.runtime_s:.3f}\n")
            fh.write(self.body_text())
        with open(out / "checks.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["check", "status", "value", "margin", "se", "detail"])
            for c in self.checks:
                writer.writerow([
                    c.name, c.status, fmt(c.value),
                    "" if c.margin is None else fmt(c.margin),
                    "" if c.se is None else fmt(c.se),
                    c.detail,
                ])
        return report_path


def write_per_time_stats(path: str | Path, times, columns: dict) -> None:
    """CSV with a time column plus named per-time series."""
    names = list(columns)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + names)
        for i, t in enumerate(times):
            writer.writerow([int(t)] + [fmt(float(columns[n][i])) for n in names])
