"""Result reporting: JSON table, delimited CSV, aligned plain-text table, and
matplotlib figures rendered alongside them."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def _rows_of(results) -> list[dict]:
    return results if isinstance(results, list) else [results]


def aligned_table(rows: list[dict], columns: list[str]) -> str:
    """Fixed-width text table mirroring the row/column result layout."""
    widths = {
        c: max(len(c), *(len(str(r.get(c, ""))) for r in rows)) for c in columns
    }
    lines = ["  ".join(c.ljust(widths[c]) for c in columns)]
    lines.append("  ".join("-" * widths[c] for c in columns))
    for r in rows:
        lines.append("  ".join(str(r.get(c, "")).ljust(widths[c]) for c in columns))
    return "\n".join(lines) + "\n"


def write_results(results, out_dir, name: str = "results") -> dict[str, str]:
    """Emit results.json, results.csv and an aligned results.txt; returns paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = _rows_of(results)
    columns = []
    for r in rows:
        for key in r:
            if key not in columns and not isinstance(r[key], (dict, list)):
                columns.append(key)
    paths = {}
    json_path = out_dir / f"{name}.json"
    with open(json_path, "w") as fh:
        json.dump(results, fh, indent=1, sort_keys=True)
    paths["json"] = str(json_path)
    csv_path = out_dir / f"{name}.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)
    paths["csv"] = str(csv_path)
    txt_path = out_dir / f"{name}.txt"
    txt_path.write_text(aligned_table(rows, columns))
    paths["txt"] = str(txt_path)
    return paths


def render_figures(results, out_dir, name: str = "results") -> list[str]:
    """Bar charts for the result rows; per-class breakdown when present."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = _rows_of(results)
    written = []

    metric = "accuracy" if "accuracy" in rows[0] else "mean"
    labels = [r.get("blocks", r.get("task", str(i))) for i, r in enumerate(rows)]
    values = [r.get(metric, 0.0) for r in rows]
    errors = [r.get("std", 0.0) for r in rows] if metric == "mean" else None

    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(rows)), 3.5))
    ax.bar(range(len(rows)), values, yerr=errors, capsize=3, color="#4878d0")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel(metric)
    ax.set_ylim(0, 1.05)
    fig.tight_layout()
    path = out_dir / f"{name}_{metric}.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(str(path))

    per_class = rows[0].get("per_class")
    if per_class:
        fig, ax = plt.subplots(figsize=(max(4, 0.5 * len(per_class)), 3.5))
        names = list(per_class)
        ax.bar(range(len(names)), [per_class[n] for n in names], color="#ee854a")
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=45, ha="right", fontsize=8)
        ax.set_ylabel("per-class accuracy")
        ax.set_ylim(0, 1.05)
        fig.tight_layout()
        path = out_dir / f"{name}_per_class.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(str(path))
    return written
