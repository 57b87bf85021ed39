"""Result reporting.

Collects per-run metrics.csv files, writes a combined CSV plus a pivoted
summary (one row per domain x error-rate pair, one success/reward column
pair per algorithm) and renders learning-curve and summary figures next
to the delimited output.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

import numpy as np

from .harness import CSV_COLUMNS, read_results, write_results


def collect_metrics(in_dir):
    """All metric rows from every metrics.csv below in_dir (combined files
    at experiment level are preferred over per-seed duplicates)."""
    rows, seen = [], set()
    for root, _dirs, files in sorted(os.walk(in_dir)):
        if "metrics.csv" not in files:
            continue
        for row in read_results(os.path.join(root, "metrics.csv")):
            key = (row["algorithm"], row["guidance"], row["domain"],
                   row["ser"], row["seed"], row["checkpoint"])
            if key not in seen:
                seen.add(key)
                rows.append(row)
    return rows


def _method_label(row):
    alg, guide = row["algorithm"], row["guidance"]
    return alg if guide in ("", "none") else f"{alg}-{guide}"


def summarize(rows):
    """Mean success/reward per (domain, ser, method) over seeds, using each
    run's final checkpoint."""
    final = {}
    for row in rows:
        key = (row["domain"], row["ser"], _method_label(row), row["seed"])
        if key not in final or row["checkpoint"] > final[key]["checkpoint"]:
            final[key] = row
    cells = {}
    for (domain, ser, method, _seed), row in final.items():
        cells.setdefault((domain, ser, method), []).append(row)
    summary = {}
    for (domain, ser, method), rs in cells.items():
        summary[(domain, ser, method)] = (
            float(np.mean([r["success_rate"] for r in rs])),
            float(np.mean([r["avg_reward"] for r in rs])))
    return summary


def write_summary(summary, path):
    methods = sorted({m for (_, _, m) in summary})
    pairs = sorted({(d, s) for (d, s, _) in summary})
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        header = ["domain", "ser"]
        for m in methods:
            header += [f"{m}_success", f"{m}_reward"]
        writer.writerow(header)
        for domain, ser in pairs:
            row = [domain, repr(ser)]
            for m in methods:
                cell = summary.get((domain, ser, m))
                row += ["", ""] if cell is None else [repr(cell[0]), repr(cell[1])]
            writer.writerow(row)


def plot_learning_curves(rows, path):
    """Mean success rate vs training dialogues, one line per method and
    (domain, ser) setting."""
    groups = {}
    for row in rows:
        key = (row["domain"], row["ser"], _method_label(row))
        groups.setdefault(key, {}).setdefault(row["checkpoint"], []).append(
            row["success_rate"])
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for (domain, ser, method), by_ckpt in sorted(groups.items()):
        xs = sorted(by_ckpt)
        ys = [np.mean(by_ckpt[x]) for x in xs]
        ax.plot(xs, ys, marker="o", label=f"{method} {domain} ser={ser:g}")
    ax.set_xlabel("training dialogues")
    ax.set_ylabel("success rate")
    ax.set_ylim(0.0, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_summary_bars(summary, path):
    """Final success rate per method, grouped by (domain, ser)."""
    methods = sorted({m for (_, _, m) in summary})
    pairs = sorted({(d, s) for (d, s, _) in summary})
    x = np.arange(len(pairs))
    width = 0.8 / max(1, len(methods))
    fig, ax = plt.subplots(figsize=(7, 4))
    for j, m in enumerate(methods):
        vals = [summary.get((d, s, m), (np.nan, np.nan))[0] for d, s in pairs]
        ax.bar(x + j * width, vals, width, label=m)
    ax.set_xticks(x + 0.4 - width / 2)
    ax.set_xticklabels([f"{d}\nser={s:g}" for d, s in pairs], fontsize=8)
    ax.set_ylabel("success rate")
    ax.set_ylim(0.0, 1.02)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_report(in_dir, out_csv):
    """The full report path: combined CSV, pivoted summary CSV, figures."""
    rows = collect_metrics(in_dir)
    write_results(rows, out_csv)
    base, _ = os.path.splitext(out_csv)
    summary = summarize(rows)
    write_summary(summary, base + "_summary.csv")
    if rows:
        plot_learning_curves(rows, base + "_curves.png")
        plot_summary_bars(summary, base + "_summary.png")
    return rows
