"""Aggregation of harness output into diagnostic summaries.

Three views, all emitted as machine-readable files rather than figures:

* p-value-versus-epsilon curves, one per (statistic, target): X2 and KS per
  parameter, U and V per model, W across models;
* histograms of the coverage p-values per (parameter, epsilon);
* a binned model-calibration table per (model, epsilon), with the observed
  frequency in each predicted-probability bin summarised by a Beta posterior
  mean and central 95% credible interval (uniform prior).

Monte Carlo null p-values reuse one seed across the whole epsilon grid, so a
curve only moves where its inputs move.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import betaincinv

from . import seeds, stats
from .harness import HarnessOutput

DEFAULT_HIST_BINS = 20
DEFAULT_CAL_BINS = 10
ALL_STATISTICS = ("X2", "KS", "U", "V", "W")


@dataclass(frozen=True)
class CurvePoint:
    epsilon: float
    value: float | None
    p_value: float | None
    method: str
    mc_replicates: int | None = None
    missing: bool = False


@dataclass
class Curve:
    target: str  # e.g. "gk.g", "model:gk", "all"
    kind: str  # param | model | all
    statistic: str
    points: list[CurvePoint]


@dataclass(frozen=True)
class CalibrationBin:
    low: float
    high: float
    n: int
    k: int
    post_mean: float
    ci_low: float
    ci_high: float


@dataclass
class DiagnosticReport:
    curves: list[Curve]
    histograms: list[dict]  # param, epsilon, bin_low, bin_high, count
    calibration: list[dict]  # model, epsilon + CalibrationBin fields
    metadata: dict


# ---------------------------------------------------------------------------
# Pieces
# ---------------------------------------------------------------------------


def build_histogram(p0_values: np.ndarray, bins: int = DEFAULT_HIST_BINS) -> np.ndarray:
    """Counts over `bins` equal-width intervals of [0, 1]."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    counts, _ = np.histogram(np.asarray(p0_values, dtype=float), bins=bins, range=(0.0, 1.0))
    return counts


def beta_central_interval(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Central credible interval of Beta(k+1, n-k+1)."""
    tail = (1.0 - level) / 2.0
    a, b = k + 1.0, n - k + 1.0
    return float(betaincinv(a, b, tail)), float(betaincinv(a, b, 1.0 - tail))


def build_calibration(
    z_values: np.ndarray, q_values: np.ndarray, bins: int = DEFAULT_CAL_BINS
) -> list[CalibrationBin]:
    """Observed frequency of q=1 within equal-width bins of the predicted z.

    Every bin is emitted; an empty bin carries the uniform-prior posterior
    (mean 0.5, interval (0.025, 0.975)).
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    z = np.asarray(z_values, dtype=float)
    q = np.asarray(q_values, dtype=float)
    if z.shape != q.shape:
        raise ValueError("z and q must have equal length")
    idx = np.minimum((z * bins).astype(int), bins - 1)
    out = []
    for b in range(bins):
        sel = idx == b
        n = int(np.count_nonzero(sel))
        k = int(q[sel].sum())
        lo, hi = beta_central_interval(k, n)
        out.append(
            CalibrationBin(
                low=b / bins,
                high=(b + 1) / bins,
                n=n,
                k=k,
                post_mean=(k + 1.0) / (n + 2.0),
                ci_low=lo,
                ci_high=hi,
            )
        )
    return out


def build_curves(
    output: HarnessOutput,
    statistics: tuple[str, ...] = ALL_STATISTICS,
    b_replicates: int = stats.DEFAULT_REPLICATES,
    mc_seed: int | None = None,
) -> list[Curve]:
    """P-value curves over the epsilon grid.

    Grid points with no feasible record are marked missing rather than
    dropped, keeping every curve at full grid length.
    """
    for s in statistics:
        if s not in ALL_STATISTICS:
            raise ValueError(f"unknown statistic {s!r}")
    if mc_seed is None:
        mc_seed = seeds.substream_seed(output.config.seed, seeds.MC_NULL)

    q_grid = len(output.config.epsilons)
    n_models = len(output.param_names)
    curves: dict[tuple[str, str, str], Curve] = {}

    def curve(target: str, kind: str, statistic: str) -> Curve:
        key = (target, kind, statistic)
        if key not in curves:
            curves[key] = Curve(target, kind, statistic, [])
        return curves[key]

    def missing(eps: float, method: str, mc: int | None = None) -> CurvePoint:
        return CurvePoint(eps, None, None, method, mc, missing=True)

    for j in range(q_grid):
        eps = output.config.epsilons[j]
        feasible = [r for r in output.records_at(j) if r.feasible]

        for m in range(1, n_models + 1):
            names = output.param_names[m - 1]
            if not names:
                continue
            p0_rows = np.array([r.p0 for r in feasible if r.m0 == m]).reshape(-1, len(names))
            for k, pname in enumerate(names):
                target = f"{_model_label(output, m)}.{pname}"
                for statistic in ("X2", "KS"):
                    if statistic not in statistics:
                        continue
                    c = curve(target, "param", statistic)
                    if p0_rows.shape[0] == 0:
                        c.points.append(missing(eps, "exact" if statistic == "X2" else "asymptotic"))
                        continue
                    rep = (
                        stats.x2_statistic(p0_rows[:, k])
                        if statistic == "X2"
                        else stats.ks_statistic(p0_rows[:, k])
                    )
                    c.points.append(
                        CurvePoint(eps, rep.value, rep.p_value, rep.method, rep.mc_replicates)
                    )

        has_feasible = len(feasible) > 0
        if has_feasible:
            m0 = np.array([r.m0 for r in feasible])
            z_rows = np.array([r.z for r in feasible])
            n_acc = np.array([r.n_accepted for r in feasible])

        if n_models > 1:
            for m in range(1, n_models + 1):
                target = f"model:{_model_label(output, m)}"
                for statistic in ("U", "V"):
                    if statistic not in statistics:
                        continue
                    c = curve(target, "model", statistic)
                    if not has_feasible:
                        c.points.append(missing(eps, "monte-carlo", b_replicates))
                        continue
                    q = (m0 == m).astype(float)
                    z = z_rows[:, m - 1]
                    if statistic == "U":
                        rep = stats.u_statistic(q, z, b_replicates, mc_seed)
                    else:
                        z_safe = stats.clamp_probs(z, n_acc)
                        rep = stats.v_statistic(q, z_safe, b_replicates, mc_seed)
                    c.points.append(
                        CurvePoint(eps, rep.value, rep.p_value, rep.method, rep.mc_replicates)
                    )
            if "W" in statistics:
                c = curve("all", "all", "W")
                if not has_feasible:
                    c.points.append(missing(eps, "monte-carlo", b_replicates))
                else:
                    eta = 1.0 / (2.0 * (n_acc + 1.0))
                    rep = stats.w_statistic(m0, z_rows, eta, b_replicates, mc_seed)
                    c.points.append(
                        CurvePoint(eps, rep.value, rep.p_value, rep.method, rep.mc_replicates)
                    )

    return list(curves.values())


def _model_label(output: HarnessOutput, model_id: int) -> str:
    return output.model_names[model_id - 1]


def build_report(
    output: HarnessOutput,
    statistics: tuple[str, ...] = ALL_STATISTICS,
    hist_bins: int = DEFAULT_HIST_BINS,
    cal_bins: int = DEFAULT_CAL_BINS,
    b_replicates: int = stats.DEFAULT_REPLICATES,
    mc_seed: int | None = None,
) -> DiagnosticReport:
    curves = build_curves(output, statistics, b_replicates, mc_seed)
    q_grid = len(output.config.epsilons)
    n_models = len(output.param_names)

    histograms = []
    calibration = []
    dropped = []
    for j in range(q_grid):
        eps = output.config.epsilons[j]
        recs = output.records_at(j)
        feasible = [r for r in recs if r.feasible]
        dropped.append(len(recs) - len(feasible))

        for m in range(1, n_models + 1):
            names = output.param_names[m - 1]
            if not names:
                continue
            p0_rows = np.array([r.p0 for r in feasible if r.m0 == m]).reshape(-1, len(names))
            for k, pname in enumerate(names):
                counts = build_histogram(p0_rows[:, k], hist_bins)
                for b, count in enumerate(counts):
                    histograms.append(
                        {
                            "param": f"{_model_label(output, m)}.{pname}",
                            "epsilon": eps,
                            "bin_low": b / hist_bins,
                            "bin_high": (b + 1) / hist_bins,
                            "count": int(count),
                        }
                    )

        if n_models > 1 and feasible:
            m0 = np.array([r.m0 for r in feasible])
            z_rows = np.array([r.z for r in feasible])
            for m in range(1, n_models + 1):
                bins = build_calibration(z_rows[:, m - 1], (m0 == m).astype(float), cal_bins)
                for cb in bins:
                    calibration.append(
                        {
                            "model": _model_label(output, m),
                            "epsilon": eps,
                            "bin_low": cb.low,
                            "bin_high": cb.high,
                            "n": cb.n,
                            "k": cb.k,
                            "post_mean": cb.post_mean,
                            "ci_low": cb.ci_low,
                            "ci_high": cb.ci_high,
                        }
                    )

    metadata = {
        "model_set": output.model_set_name,
        "epsilons": list(output.config.epsilons),
        "c": output.config.c,
        "v_mode": output.config.v_mode,
        "adjust": output.config.adjust,
        "model_prob_mode": output.config.model_prob_mode,
        "seed": output.config.seed,
        "mc_replicates": b_replicates,
        "mc_seed": mc_seed
        if mc_seed is not None
        else seeds.substream_seed(output.config.seed, seeds.MC_NULL),
        "hist_bins": hist_bins,
        "cal_bins": cal_bins,
        "dropped_cells_per_epsilon": dropped,
        "provenance": output.provenance,
        # Replicated p-values share accepted samples across cells; tests treat
        # them as independent, which is known to be mildly optimistic.
        "independence_caveat": "p-values across pseudo-observed datasets are treated as independent",
        # The reference line for the calibration table is the identity diagonal.
        "calibration_reference": "identity",
    }
    return DiagnosticReport(curves, histograms, calibration, metadata)


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    return f"{x:.12g}"


def report_to_json_dict(report: DiagnosticReport) -> dict:
    return {
        "metadata": report.metadata,
        "curves": [
            {
                "target": c.target,
                "kind": c.kind,
                "statistic": c.statistic,
                "points": [
                    {
                        "epsilon": p.epsilon,
                        "value": p.value,
                        "p_value": p.p_value,
                        "method": p.method,
                        "mc_replicates": p.mc_replicates,
                        "missing": p.missing,
                    }
                    for p in c.points
                ],
            }
            for c in report.curves
        ],
        "histograms": report.histograms,
        "calibration": report.calibration,
    }


def emit(report: DiagnosticReport, out_dir: str | Path) -> list[Path]:
    """Write report.json, curves.csv, histograms.csv and calibration.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []

    json_path = out_dir / "report.json"
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(report_to_json_dict(report), fh, indent=1)
    paths.append(json_path)

    curves_path = out_dir / "curves.csv"
    with open(curves_path, "w", encoding="utf-8") as fh:
        fh.write("target,kind,statistic,epsilon,value,p_value,method\n")
        for c in report.curves:
            for p in c.points:
                fh.write(
                    f"{c.target},{c.kind},{c.statistic},{_fmt(p.epsilon)},"
                    f"{_fmt(p.value)},{_fmt(p.p_value)},{p.method}\n"
                )
    paths.append(curves_path)

    hist_path = out_dir / "histograms.csv"
    with open(hist_path, "w", encoding="utf-8") as fh:
        fh.write("param,epsilon,bin_low,bin_high,count\n")
        for row in report.histograms:
            fh.write(
                f"{row['param']},{_fmt(row['epsilon'])},{_fmt(row['bin_low'])},"
                f"{_fmt(row['bin_high'])},{row['count']}\n"
            )
    paths.append(hist_path)

    cal_path = out_dir / "calibration.csv"
    with open(cal_path, "w", encoding="utf-8") as fh:
        fh.write("model,epsilon,bin_low,bin_high,n,k,post_mean,ci_low,ci_high\n")
        for row in report.calibration:
            fh.write(
                f"{row['model']},{_fmt(row['epsilon'])},{_fmt(row['bin_low'])},"
                f"{_fmt(row['bin_high'])},{row['n']},{row['k']},"
                f"{_fmt(row['post_mean'])},{_fmt(row['ci_low'])},{_fmt(row['ci_high'])}\n"
            )
    paths.append(cal_path)
    return paths
