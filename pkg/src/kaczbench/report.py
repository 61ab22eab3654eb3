"""Render campaign results: summary tables and matplotlib figures.

Reads the campaign CSV produced by the bench harness and writes, next to
a ranked summary table, a set of PNG figures: calibrated iteration
counts and mean times against the row count for every (family, column
count) group that spans several sizes, mean times against the column
count for groups that vary it, and a per-size bar chart comparing the
methods.
"""

from __future__ import annotations

import csv
import os
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .bench import BenchRecord, STATUS_OK, write_summary

_MARKERS = ("o", "s", "^", "v", "D", "x", "+", "*", "<", ">", "p", "h")


def load_records(path: str) -> list:
    """Parse a campaign CSV back into records."""
    records = []
    with open(path, "r", newline="", encoding="ascii") as fh:
        for row in csv.DictReader(fh):
            records.append(BenchRecord(
                family=row["family"],
                method=row["method"],
                m=int(row["m"]),
                n=int(row["n"]),
                epsilon=float(row["epsilon"]),
                calibrated_k=int(row["calibrated_k"]) if row["calibrated_k"] else None,
                seed_count=int(row["seed_count"]),
                mean_time_ns=float(row["mean_time_ns"]) if row["mean_time_ns"] else None,
                std_time_ns=float(row["std_time_ns"]) if row["std_time_ns"] else None,
                mean_final_sq_error=(float(row["mean_final_sq_error"])
                                     if row["mean_final_sq_error"] else None),
                status=row["status"],
            ))
    return records


def _ok(records) -> list:
    return [r for r in records if r.status == STATUS_OK]


def _series_plot(ax, cells, x_attr: str, y_attr: str):
    methods = sorted({r.method for r in cells})
    for idx, method in enumerate(methods):
        points = sorted((getattr(r, x_attr), getattr(r, y_attr))
                        for r in cells if r.method == method and getattr(r, y_attr))
        if points:
            xs, ys = zip(*points)
            ax.plot(xs, ys, marker=_MARKERS[idx % len(_MARKERS)], label=method)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)


def _save(fig, out_dir: str, name: str, written: list):
    path = os.path.join(out_dir, name)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)


def render_figures(records: Sequence[BenchRecord], out_dir: str) -> list:
    """Write PNG figures for a set of campaign records; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    ok = _ok(records)
    written = []

    # Iterations and time against the row count, per (family, n).
    by_family_n = {}
    for rec in ok:
        by_family_n.setdefault((rec.family, rec.n), []).append(rec)
    for (family, n), cells in sorted(by_family_n.items()):
        if len({r.m for r in cells}) < 2:
            continue
        for y_attr, label, tag in (("calibrated_k", "iterations to convergence", "iterations"),
                                   ("mean_time_ns", "mean time (ns)", "time")):
            fig, ax = plt.subplots(figsize=(6, 4))
            _series_plot(ax, cells, "m", y_attr)
            ax.set_xlabel("rows m")
            ax.set_ylabel(label)
            ax.set_title(f"{family}, n = {n}")
            _save(fig, out_dir, f"{tag}_{family.lower()}_n{n}.png", written)

    # Time against the column count, per (family, m).
    by_family_m = {}
    for rec in ok:
        by_family_m.setdefault((rec.family, rec.m), []).append(rec)
    for (family, m), cells in sorted(by_family_m.items()):
        if len({r.n for r in cells}) < 2:
            continue
        fig, ax = plt.subplots(figsize=(6, 4))
        _series_plot(ax, cells, "n", "mean_time_ns")
        ax.set_xlabel("columns n")
        ax.set_ylabel("mean time (ns)")
        ax.set_title(f"{family}, m = {m}")
        _save(fig, out_dir, f"time_{family.lower()}_m{m}.png", written)

    # Per-size method comparison bars.
    by_size = {}
    for rec in ok:
        by_size.setdefault((rec.family, rec.m, rec.n), []).append(rec)
    for (family, m, n), cells in sorted(by_size.items()):
        cells = sorted((r for r in cells if r.mean_time_ns), key=lambda r: r.mean_time_ns)
        if not cells:
            continue
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.bar([r.method for r in cells], [r.mean_time_ns * 1e-6 for r in cells])
        ax.set_ylabel("mean time (ms)")
        ax.set_title(f"{family} {m}x{n}")
        ax.tick_params(axis="x", rotation=45)
        _save(fig, out_dir, f"methods_{family.lower()}_{m}x{n}.png", written)
    return written


def render_report(csv_path: str, out_dir: str) -> dict:
    """Summary table plus figures for a campaign CSV on disk."""
    records = load_records(csv_path)
    os.makedirs(out_dir, exist_ok=True)
    summary_path = os.path.join(out_dir, "summary.csv")
    write_summary(records, summary_path)
    figures = render_figures(records, out_dir)
    return {"summary": summary_path, "figures": figures}
