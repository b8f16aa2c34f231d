from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from polypvid.errors import ConfigError  # noqa: E402
from polypvid.evaluation.metrics import MetricsReport  # noqa: E402

COLUMNS = ["n_prev", "sensitivity", "precision", "specificity", "tp", "fp", "fn", "tn_negative",
           "fp_negative"]
METRICS = ("sensitivity", "precision", "specificity")


def curve_rows(reports: Sequence[MetricsReport]) -> list[dict]:
    if len(reports) < 2:
        raise ConfigError("need at least two reports to draw curves")
    seen = [r.n_prev for r in reports]
    if any(n is None for n in seen):
        raise ConfigError("every report needs an n_prev value")
    if len(set(seen)) != len(seen):
        raise ConfigError(f"duplicate n_prev values: {sorted(seen)}")
    rows = []
    for r in sorted(reports, key=lambda r: r.n_prev):
        rows.append({
            "n_prev": r.n_prev,
            "sensitivity": r.sensitivity,
            "precision": r.precision,
            "specificity": r.specificity,
            "tp": r.positive.tp,
            "fp": r.positive.fp,
            "fn": r.positive.fn,
            "tn_negative": r.negative.tn,
            "fp_negative": r.negative.fp,
        })
    return rows


def write_csv(rows: list[dict], path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=COLUMNS)
        w.writeheader()
        for row in rows:
            # undefined rates are written as empty cells
            w.writerow({k: ("" if row[k] is None else repr(row[k])) for k in COLUMNS})
    return path


def read_csv(path: str | Path) -> list[dict]:
    rows = []
    with open(path, newline="") as f:
        for raw in csv.DictReader(f):
            row = {}
            for k in COLUMNS:
                v = raw[k]
                if k in METRICS:
                    row[k] = None if v == "" else float(v)
                else:
                    row[k] = int(v)
            rows.append(row)
    return rows


def plot_curves(rows: list[dict], path: str | Path) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    xs = [r["n_prev"] for r in rows]
    for m in METRICS:
        pts = [(x, r[m]) for x, r in zip(xs, rows) if r[m] is not None]
        if pts:
            ax.plot(*zip(*pts), marker="o", label=m)
    ax.set_xlabel("previous frames concatenated")
    ax.set_ylabel("%")
    ax.set_xticks(xs)
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def curve_report(reports: Sequence[MetricsReport], out_dir: str | Path) -> dict:
    """Write ``curves.csv`` and ``curves.png`` into ``out_dir``; return the rows and paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = curve_rows(reports)
    return {
        "rows": rows,
        "csv": write_csv(rows, out_dir / "curves.csv"),
        "plot": plot_curves(rows, out_dir / "curves.png"),
    }
