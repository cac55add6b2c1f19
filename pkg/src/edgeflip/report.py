"""Result serialization and table rendering.

The raw cells go to a long-format CSV (one row per cell) and the aggregated
summary to JSON; ``render_matrix`` turns a summary into the attack-by-budget
"mean +/- std" tables in text, markdown, or CSV form.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from .harness import CellRecord, EvalReport, aggregate

CELL_FIELDS = ["attack", "budget", "split", "run", "target", "setting",
               "success", "categories", "plan_size", "early_stop", "error"]

FORMATS = ("text", "markdown", "csv")


def write_cells_csv(cells, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CELL_FIELDS)
        for c in cells:
            writer.writerow([
                c.attack, c.budget, c.split, c.run, c.target, c.setting,
                "" if c.success is None else int(c.success),
                "|".join(c.categories), c.plan_size, int(c.early_stop),
                c.error or "",
            ])


def read_cells_csv(path) -> list[CellRecord]:
    cells = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            cells.append(CellRecord(
                attack=row["attack"],
                budget=int(row["budget"]),
                split=int(row["split"]),
                run=int(row["run"]),
                target=int(row["target"]),
                setting=row["setting"],
                success=None if row["success"] == "" else bool(int(row["success"])),
                categories=tuple(c for c in row["categories"].split("|") if c),
                plan_size=int(row["plan_size"]),
                early_stop=bool(int(row["early_stop"])),
                error=row["error"] or None,
            ))
    return cells


def write_summary_json(summary: dict, path) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def read_summary_json(path) -> dict:
    return json.loads(Path(path).read_text())


def write_report(report: EvalReport, out_dir) -> dict:
    """Write cells.csv and summary.json; returns the summary."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_cells_csv(report.cells, out_dir / "cells.csv")
    summary = report.summary()
    summary["targets_per_run"] = {
        f"{i},{r}": n for (i, r), n in sorted(report.targets_per_run.items())
    }
    summary["overlapped_targets"] = report.overlapped_targets
    summary["dropped_cells"] = report.dropped_cells
    write_summary_json(summary, out_dir / "summary.json")
    return summary


def _matrix(summary: dict, setting: str):
    rows = [r for r in summary["overall"] if r["setting"] == setting]
    attacks = sorted({r["attack"] for r in rows})
    budgets = sorted({r["budget"] for r in rows})
    table = {(r["attack"], r["budget"]): r for r in rows}
    return attacks, budgets, table


def render_matrix(summary: dict, fmt: str = "text", bold_best: bool = False) -> str:
    """Attack x budget matrix of "mean +/- std" per setting.

    With ``bold_best`` the best mean in every budget column is wrapped in
    ``**`` (markdown only).
    """
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; choose from {FORMATS}")
    lines = []
    settings = sorted({r["setting"] for r in summary["overall"]})
    for setting in settings:
        attacks, budgets, table = _matrix(summary, setting)
        if not attacks:
            continue
        best = {}
        for b in budgets:
            means = {a: table[(a, b)]["mean"] for a in attacks if (a, b) in table}
            finite = {a: m for a, m in means.items() if not math.isnan(m)}
            if finite:
                best[b] = max(finite, key=finite.get)

        def fmt_cell(a, b):
            row = table.get((a, b))
            if row is None or math.isnan(row["mean"]):
                return "-"
            text = f"{100 * row['mean']:.2f} ± {100 * row['std']:.2f}"
            if bold_best and fmt == "markdown" and best.get(b) == a:
                text = f"**{text}**"
            return text

        header = ["attack"] + [f"Δ={b}" for b in budgets]
        body = [[a] + [fmt_cell(a, b) for b in budgets] for a in attacks]
        if fmt == "csv":
            lines.append(f"# setting: {setting}")
            lines.append(",".join(header))
            lines.extend(",".join(row) for row in body)
        elif fmt == "markdown":
            lines.append(f"### {setting}")
            lines.append("| " + " | ".join(header) + " |")
            lines.append("|" + "|".join([" --- "] * len(header)) + "|")
            lines.extend("| " + " | ".join(row) + " |" for row in body)
        else:
            widths = [max(len(str(r[k])) for r in [header] + body)
                      for k in range(len(header))]
            lines.append(f"[{setting}]")
            lines.append("  ".join(h.ljust(w) for h, w in zip(header, widths)))
            for row in body:
                lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
        lines.append("")
    return "\n".join(lines)


def recompute_summary(results_dir) -> dict:
    """Re-aggregate the raw cells; must match the stored summary tables."""
    cells = read_cells_csv(Path(results_dir) / "cells.csv")
    return aggregate(cells)
