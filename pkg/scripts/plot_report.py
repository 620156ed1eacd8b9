#!/usr/bin/env python3
"""Plotting recipe for diagnose output directories.

Reads curves.csv, histograms.csv and calibration.csv and renders the three
standard figure layouts:

* pvalues.png     -- coverage p-value vs epsilon, one panel per target, all
                     statistics overlaid, log-log axes, 0.05 reference line;
* histograms.png  -- coverage p-value histograms, one row per parameter and
                     one column per epsilon;
* calibration.png -- observed vs predicted model probabilities per model and
                     epsilon, with 95% credible bars and the identity
                     diagonal as the prediction reference.

Usage:
    python scripts/plot_report.py out/benchmark/truncated [--max-epsilons 3]
"""

import argparse
import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def plot_curves(rows, out_path):
    by_target = defaultdict(lambda: defaultdict(list))
    for row in rows:
        if row["p_value"] == "":
            continue
        by_target[(row["kind"], row["target"])][row["statistic"]].append(
            (float(row["epsilon"]), float(row["p_value"]))
        )
    targets = sorted(by_target)
    if not targets:
        return
    fig, axes = plt.subplots(1, len(targets), figsize=(4.2 * len(targets), 3.6), squeeze=False)
    for ax, key in zip(axes[0], targets):
        for statistic, points in sorted(by_target[key].items()):
            points = sorted(points)
            eps = [p[0] for p in points]
            pv = [max(p[1], 1e-12) for p in points]
            ax.plot(eps, pv, marker="o", ms=3, label=statistic)
        ax.axhline(0.05, color="grey", lw=0.8, ls="--")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("epsilon")
        ax.set_ylabel("coverage p-value")
        ax.set_title(f"{key[0]}: {key[1]}")
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    print(f"wrote {out_path}")


def plot_histograms(rows, out_path, max_epsilons):
    params = sorted({row["param"] for row in rows})
    epsilons = sorted({float(row["epsilon"]) for row in rows}, reverse=True)
    if max_epsilons and len(epsilons) > max_epsilons:
        idx = np.linspace(0, len(epsilons) - 1, max_epsilons).astype(int)
        epsilons = [epsilons[i] for i in idx]
    if not params or not epsilons:
        return
    fig, axes = plt.subplots(
        len(params), len(epsilons), figsize=(3.2 * len(epsilons), 2.6 * len(params)), squeeze=False
    )
    for i, param in enumerate(params):
        for j, eps in enumerate(epsilons):
            ax = axes[i][j]
            sel = [r for r in rows if r["param"] == param and float(r["epsilon"]) == eps]
            sel.sort(key=lambda r: float(r["bin_low"]))
            lows = [float(r["bin_low"]) for r in sel]
            counts = [int(r["count"]) for r in sel]
            widths = [float(r["bin_high"]) - float(r["bin_low"]) for r in sel]
            ax.bar(lows, counts, width=widths, align="edge", edgecolor="k", lw=0.4)
            if counts:
                ax.axhline(sum(counts) / len(counts), color="grey", lw=0.8, ls="--")
            ax.set_title(f"{param}, eps={eps:g}", fontsize=9)
            if i == len(params) - 1:
                ax.set_xlabel("coverage p-value")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    print(f"wrote {out_path}")


def plot_calibration(rows, out_path, max_epsilons):
    models = sorted({row["model"] for row in rows})
    epsilons = sorted({float(row["epsilon"]) for row in rows}, reverse=True)
    if max_epsilons and len(epsilons) > max_epsilons:
        idx = np.linspace(0, len(epsilons) - 1, max_epsilons).astype(int)
        epsilons = [epsilons[i] for i in idx]
    if not models or not epsilons:
        return
    fig, axes = plt.subplots(
        len(models), len(epsilons), figsize=(3.2 * len(epsilons), 3.0 * len(models)), squeeze=False
    )
    for i, model in enumerate(models):
        for j, eps in enumerate(epsilons):
            ax = axes[i][j]
            sel = [r for r in rows if r["model"] == model and float(r["epsilon"]) == eps]
            sel.sort(key=lambda r: float(r["bin_low"]))
            mids, means, lo_err, hi_err = [], [], [], []
            for r in sel:
                if int(r["n"]) == 0:
                    continue
                mid = 0.5 * (float(r["bin_low"]) + float(r["bin_high"]))
                mean = float(r["post_mean"])
                mids.append(mid)
                means.append(mean)
                lo_err.append(mean - float(r["ci_low"]))
                hi_err.append(float(r["ci_high"]) - mean)
            ax.errorbar(mids, means, yerr=[lo_err, hi_err], fmt="o", ms=4, capsize=3)
            ax.plot([0, 1], [0, 1], color="grey", lw=0.8, ls="--")  # prediction reference
            ax.set_xlim(0, 1)
            ax.set_ylim(0, 1)
            ax.set_title(f"model {model}, eps={eps:g}", fontsize=9)
            if i == len(models) - 1:
                ax.set_xlabel("predicted probability")
            if j == 0:
                ax.set_ylabel("observed frequency")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    print(f"wrote {out_path}")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("report_dir", help="directory containing the diagnose CSV outputs")
    parser.add_argument("--max-epsilons", type=int, default=3,
                        help="histogram/calibration columns to draw (default 3)")
    args = parser.parse_args()
    report_dir = Path(args.report_dir)
    if not (report_dir / "curves.csv").exists():
        print(f"error: {report_dir} has no curves.csv", file=sys.stderr)
        return 2
    plot_curves(read_csv(report_dir / "curves.csv"), report_dir / "pvalues.png")
    plot_histograms(
        read_csv(report_dir / "histograms.csv"), report_dir / "histograms.png", args.max_epsilons
    )
    plot_calibration(
        read_csv(report_dir / "calibration.csv"), report_dir / "calibration.png", args.max_epsilons
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
