"""CSV tables and nDCG-vs-GAP figures for evaluation results."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Mapping, Sequence

from .data import CategoricalSchema

SUMMARY_BASE = ("method", "ndcg", "gap")
SUMMARY_TAIL = ("goodness", "reward")


def summary_columns(schema: CategoricalSchema) -> list[str]:
    return [*SUMMARY_BASE[:2], *(f"gap_{n}" for n in schema.names), "gap", *SUMMARY_TAIL]


def sweep_columns(schema: CategoricalSchema) -> list[str]:
    return ["lambda", "ndcg", *(f"gap_{n}" for n in schema.names), "gap", "goodness"]


def _write(path, columns: Sequence[str], rows: Sequence[Mapping]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore",
                                lineterminator="\n")
        writer.writeheader()
        for row in rows:
            missing = [c for c in columns if c not in row]
            if missing:
                raise KeyError(f"row is missing columns {missing}")
            writer.writerow({c: _fmt(row[c]) for c in columns})
    return path


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else v


def summary_row(method: str, means: Mapping[str, float], schema: CategoricalSchema) -> dict:
    """Convert ``mean_scores`` output (per-variable keys ``gap_<j>``) to a named row."""
    row = {"method": method, "ndcg": means["ndcg"], "gap": means["gap"],
           "goodness": means["goodness"], "reward": means["reward"]}
    for j, name in enumerate(schema.names):
        row[f"gap_{name}"] = means[f"gap_{j}"]
    return row


def write_summary(path, rows: Sequence[Mapping], schema: CategoricalSchema) -> Path:
    """One row per method."""
    if not rows:
        raise ValueError("no methods to report")
    return _write(path, summary_columns(schema), rows)


def write_sweep(path, rows: Sequence[Mapping], schema: CategoricalSchema) -> Path:
    """One row per lambda, ordered as given."""
    if not rows:
        raise ValueError("empty lambda sweep")
    return _write(path, sweep_columns(schema), rows)


def write_log(path, rows: Sequence[Mapping], columns: Sequence[str]) -> Path:
    return _write(path, columns, rows)


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def plot_tradeoff(path, sweep_rows: Sequence[Mapping], points: Mapping[str, Mapping] = (),
                  title: str = "") -> Path:
    """Scatter of nDCG against GAP: the lambda curve annotated by lambda, plus named points."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not sweep_rows:
        raise ValueError("empty lambda sweep")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    gaps = [float(r["gap"]) for r in sweep_rows]
    ndcgs = [float(r["ndcg"]) for r in sweep_rows]
    ax.plot(gaps, ndcgs, "o-", color="tab:gray", label="MMR sweep", markersize=4)
    for r, x, y in zip(sweep_rows, gaps, ndcgs):
        ax.annotate(f"{float(r['lambda']):g}", (x, y), textcoords="offset points", xytext=(4, 3),
                    fontsize=7)
    for name, p in dict(points).items():
        ax.plot(float(p["gap"]), float(p["ndcg"]), "*", markersize=12, label=name)
    ax.set_xlabel("GAP (lower is better)")
    ax.set_ylabel("nDCG")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
