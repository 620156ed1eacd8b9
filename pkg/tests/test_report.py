import json

import numpy as np
import pytest
from scipy.integrate import quad

from abc_calibrate.harness import HarnessConfig, epsilon_grid, run_harness
from abc_calibrate.report import (
    beta_central_interval,
    build_calibration,
    build_curves,
    build_histogram,
    build_report,
    emit,
    report_to_json_dict,
)


def rng(seed=0):
    return np.random.default_rng(seed)


def small_output(gk_benchmark_small, observed_gk, c=40, q=3, seed=0):
    ms, table = gk_benchmark_small
    grid = tuple(epsilon_grid(table, observed_gk, q=q))
    cfg = HarnessConfig(observed=observed_gk, epsilons=grid, c=c, seed=seed)
    return run_harness(table, ms, cfg)


class TestHistogram:
    def test_all_mass_in_first_bin(self):
        counts = build_histogram(rng(1).uniform(0.001, 0.049, size=200), bins=20)
        assert counts[0] == 200
        assert counts[1:].sum() == 0

    def test_uniform_grid_balanced(self):
        values = (np.arange(100) + 0.5) / 100
        counts = build_histogram(values, bins=20)
        assert counts.max() - counts.min() <= 1

    def test_counts_sum_to_input_length(self):
        for n in (0, 1, 7, 500):
            values = rng(2).random(n)
            assert build_histogram(values, bins=13).sum() == n

    def test_bins_validated(self):
        with pytest.raises(ValueError):
            build_histogram(np.array([0.5]), bins=0)


class TestCalibration:
    def test_posterior_mean_hand_value(self):
        z = np.full(8, 0.55)
        q = np.array([1, 1, 1, 0, 0, 0, 0, 0], dtype=float)
        bins = build_calibration(z, q, bins=10)
        b = bins[5]
        assert (b.n, b.k) == (8, 3)
        assert b.post_mean == pytest.approx(0.4)

    def test_interval_against_integration_oracle(self):
        # Central 95% interval of Beta(4, 6) by bisection on numeric quadrature.
        z = np.full(8, 0.55)
        q = np.array([1, 1, 1, 0, 0, 0, 0, 0], dtype=float)
        b = build_calibration(z, q, bins=10)[5]

        def beta_cdf(x, a, bb):
            norm, _ = quad(lambda t: t ** (a - 1) * (1 - t) ** (bb - 1), 0, 1)
            part, _ = quad(lambda t: t ** (a - 1) * (1 - t) ** (bb - 1), 0, x)
            return part / norm

        def invert(target, a, bb):
            lo, hi = 0.0, 1.0
            for _ in range(60):
                mid = (lo + hi) / 2
                if beta_cdf(mid, a, bb) < target:
                    lo = mid
                else:
                    hi = mid
            return (lo + hi) / 2

        assert b.ci_low == pytest.approx(invert(0.025, 4, 6), abs=1e-8)
        assert b.ci_high == pytest.approx(invert(0.975, 4, 6), abs=1e-8)

    def test_empty_bin_defaults(self):
        bins = build_calibration(np.array([0.95]), np.array([1.0]), bins=10)
        empty = bins[0]
        assert empty.n == 0
        assert empty.post_mean == pytest.approx(0.5)
        assert empty.ci_low == pytest.approx(0.025)
        assert empty.ci_high == pytest.approx(0.975)

    def test_bins_partition_unit_interval(self):
        bins = build_calibration(rng(3).random(50), (rng(4).random(50) < 0.5).astype(float), 10)
        assert bins[0].low == 0.0
        assert bins[-1].high == 1.0
        for a, b in zip(bins, bins[1:]):
            assert a.high == b.low
        assert sum(b.n for b in bins) == 50
        for b in bins:
            assert b.ci_low <= b.post_mean <= b.ci_high

    def test_post_mean_monotone_in_k(self):
        means = []
        for k in range(9):
            z = np.full(8, 0.15)
            q = np.array([1.0] * k + [0.0] * (8 - k))
            means.append(build_calibration(z, q, bins=10)[1].post_mean)
        assert np.all(np.diff(means) > 0)

    def test_calibrated_synthetic_intervals_cover(self):
        # Under true coverage (q ~ Bernoulli(z)), most bin intervals should
        # intersect their own z-range.
        r = rng(5)
        z = r.random(10_000)
        q = (r.random(10_000) < z).astype(float)
        bins = build_calibration(z, q, bins=10)
        hits = sum(
            1 for b in bins if b.n > 0 and b.ci_low <= b.high and b.ci_high >= b.low
        )
        nonempty = sum(1 for b in bins if b.n > 0)
        assert hits >= 0.9 * nonempty

    def test_beta_interval_validates_level(self):
        lo, hi = beta_central_interval(0, 0)
        assert (lo, hi) == (pytest.approx(0.025), pytest.approx(0.975))


class TestCurves:
    def test_every_curve_has_full_grid_length(self, gk_benchmark_small, observed_gk):
        out = small_output(gk_benchmark_small, observed_gk)
        curves = build_curves(out, b_replicates=99)
        assert {c.statistic for c in curves} == {"X2", "KS", "U", "V", "W"}
        for c in curves:
            assert len(c.points) == 3
            for p in c.points:
                if not p.missing:
                    assert 0.0 <= p.p_value <= 1.0

    def test_missing_points_flagged(self, gk_benchmark_small, observed_gk):
        ms, table = gk_benchmark_small
        cfg = HarnessConfig(
            observed=observed_gk, epsilons=(1.0, 1e-12), c=10, seed=1
        )
        out = run_harness(table, ms, cfg)
        curves = build_curves(out, b_replicates=99)
        for c in curves:
            assert c.points[1].missing
            assert c.points[1].p_value is None

    def test_deterministic_given_seed(self, gk_benchmark_small, observed_gk):
        out = small_output(gk_benchmark_small, observed_gk, seed=2)
        a = build_curves(out, b_replicates=199)
        b = build_curves(out, b_replicates=199)
        for ca, cb in zip(a, b):
            for pa, pb in zip(ca.points, cb.points):
                assert pa.p_value == pb.p_value

    def test_same_inputs_same_pvalue_across_epsilons(self, gk_benchmark_small, observed_gk):
        # Degenerate two-epsilon grid where both cells accept everything:
        # identical (q, z) per record, so the shared MC seed must give
        # identical U/V p-values at both grid points.
        ms, table = gk_benchmark_small
        cfg = HarnessConfig(
            observed=observed_gk, epsilons=(np.inf, 1e9), c=30, seed=3
        )
        out = run_harness(table, ms, cfg)
        for c in build_curves(out, b_replicates=199):
            if c.statistic in ("U", "V", "W"):
                assert c.points[0].p_value == c.points[1].p_value

    def test_statistic_subset_respected(self, gk_benchmark_small, observed_gk):
        out = small_output(gk_benchmark_small, observed_gk)
        curves = build_curves(out, statistics=("X2", "KS"), b_replicates=99)
        assert {c.statistic for c in curves} == {"X2", "KS"}

    def test_oracle_small_epsilon_curves_pass(self, conjugate_table):
        from abc_calibrate.harness import epsilon_grid as grid_fn

        ms, table = conjugate_table
        y_obs = ms.model(1).simulate(np.array([0.1]), 20, rng(6))
        s_obs = ms.summarize(y_obs)
        grid = tuple(grid_fn(table, s_obs, q=2, fractions=(0.05, 0.01)))
        cfg = HarnessConfig(observed=s_obs, epsilons=grid, c=200, seed=4)
        out = run_harness(table, ms, cfg)
        for c in build_curves(out, b_replicates=199):
            if c.kind == "param":
                for p in c.points:
                    assert p.p_value > 0.01


class TestEmit:
    def test_round_trip_and_row_counts(self, tmp_path, gk_benchmark_small, observed_gk):
        out = small_output(gk_benchmark_small, observed_gk)
        report = build_report(out, b_replicates=99)
        paths = emit(report, tmp_path)
        assert [p.name for p in paths] == [
            "report.json",
            "curves.csv",
            "histograms.csv",
            "calibration.csv",
        ]
        blob = json.loads((tmp_path / "report.json").read_text())
        assert blob == json.loads(json.dumps(report_to_json_dict(report)))

        curves_rows = (tmp_path / "curves.csv").read_text().splitlines()[1:]
        assert len(curves_rows) == sum(len(c.points) for c in report.curves)
        hist_rows = (tmp_path / "histograms.csv").read_text().splitlines()[1:]
        assert len(hist_rows) == len(report.histograms)
        cal_rows = (tmp_path / "calibration.csv").read_text().splitlines()[1:]
        assert len(cal_rows) == len(report.calibration)

    def test_histogram_counts_match_feasible_records(self, gk_benchmark_small, observed_gk):
        out = small_output(gk_benchmark_small, observed_gk)
        report = build_report(out, b_replicates=99)
        for j, eps in enumerate(out.config.epsilons):
            feasible_gk = sum(
                1 for r in out.records_at(j) if r.feasible and r.m0 == 2
            )
            total = sum(
                row["count"]
                for row in report.histograms
                if row["epsilon"] == eps and row["param"] == "gk.g"
            )
            assert total == feasible_gk

    def test_empty_output_still_emits_valid_files(self, tmp_path, gk_benchmark_small, observed_gk):
        ms, table = gk_benchmark_small
        cfg = HarnessConfig(observed=observed_gk, epsilons=(1e-12,), c=3, seed=5)
        out = run_harness(table, ms, cfg)
        report = build_report(out, b_replicates=99)
        paths = emit(report, tmp_path)
        blob = json.loads((tmp_path / "report.json").read_text())
        assert blob["metadata"]["dropped_cells_per_epsilon"] == [3]
        curves_rows = (tmp_path / "curves.csv").read_text().splitlines()
        assert all(",," in row for row in curves_rows[1:])  # missing values empty

    def test_metadata_records_settings(self, gk_benchmark_small, observed_gk):
        out = small_output(gk_benchmark_small, observed_gk)
        report = build_report(out, b_replicates=99, hist_bins=7, cal_bins=4)
        md = report.metadata
        assert md["mc_replicates"] == 99
        assert md["hist_bins"] == 7
        assert md["cal_bins"] == 4
        assert md["calibration_reference"] == "identity"
        assert "independence_caveat" in md
