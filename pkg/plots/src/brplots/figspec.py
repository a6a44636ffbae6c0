"""Figure specifications and CSV access for the brrep output schema.

This package consumes the simulator only through its documented file
interfaces: the run CSV (experiment,N,t,lambda,seed,observable,log2_value,
discarded_weight) and the JSON fit summaries.  No numerical analysis happens
here beyond re-checking the documented qualitative features of the series
being plotted.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

CSV_COLUMNS = ("experiment", "N", "t", "lambda", "seed", "observable",
               "log2_value", "discarded_weight")

FIGURE_IDS = ("fig2a", "fig2b", "fig3", "fig5", "fig6a", "fig6b",
              "fig4b", "fig4c", "fig4d", "figS-random", "figS-lightcone")


class SchemaError(ValueError):
    """Input CSV does not carry the documented schema."""


class CheckError(AssertionError):
    """The plotted series violate the documented qualitative feature."""


@dataclass
class FigureSpec:
    figure: str
    csv_paths: list[str]
    output: str
    overlay: str | None = None  # JSON summary with fitted collapse parameters
    formats: tuple[str, ...] = ("png", "svg")

    def __post_init__(self):
        if self.figure not in FIGURE_IDS:
            raise ValueError(f"unknown figure id {self.figure!r}; "
                             f"choose from {FIGURE_IDS}")
        if not self.csv_paths:
            raise ValueError("at least one input CSV required")

    @classmethod
    def from_file(cls, path: str) -> "FigureSpec":
        with open(path) as fh:
            raw = json.load(fh)
        raw.setdefault("formats", ["png", "svg"])
        raw["formats"] = tuple(raw["formats"])
        return cls(**raw)


def load_rows(paths) -> list[dict]:
    rows: list[dict] = []
    for path in paths:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = [c for c in CSV_COLUMNS if c not in header]
            if missing:
                raise SchemaError(f"{path}: missing columns {missing}")
            chunk = list(reader)
        if not chunk:
            raise SchemaError(f"{path}: no data rows")
        rows.extend(chunk)
    return rows


def series(rows, observable, x_column="t"):
    """{N: (x array, log2_value array)} for one observable, sorted in x."""
    by_n: dict[float, list[tuple[float, float]]] = {}
    for row in rows:
        if row["observable"] != observable:
            continue
        by_n.setdefault(float(row["N"]), []).append(
            (float(row[x_column]), float(row["log2_value"])))
    if not by_n:
        raise SchemaError(f"observable {observable!r} not present in the CSV")
    out = {}
    for n, pts in sorted(by_n.items()):
        pts.sort()
        out[n] = (np.array([p[0] for p in pts]), np.array([p[1] for p in pts]))
    return out


def observables_present(rows) -> set[str]:
    return {r["observable"] for r in rows}


def load_overlay(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def pairwise_crossing(xs1, ys1, xs2, ys2):
    """x of the first sign change of the interpolated difference, or None."""
    lo = max(xs1.min(), xs2.min())
    hi = min(xs1.max(), xs2.max())
    if hi <= lo:
        return None
    grid = np.linspace(lo, hi, 400)
    d = np.interp(grid, xs1, ys1) - np.interp(grid, xs2, ys2)
    for i in range(len(grid) - 1):
        if d[i] == 0.0 or d[i] * d[i + 1] < 0:
            if d[i + 1] == d[i]:
                return float(grid[i])
            return float(grid[i] - d[i] * (grid[i + 1] - grid[i]) / (d[i + 1] - d[i]))
    return None
