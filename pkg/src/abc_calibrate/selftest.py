"""Fast installation checks: known statistic values, the leave-one-out
reweighting identity, exact-oracle uniformity, and table persistence.

Each check returns (name, ok, expected, actual); everything is seeded, so two
runs produce identical output.  The whole battery stays well under a minute.
"""

from __future__ import annotations

import itertools
import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from . import engine, models, stats, table as tbl
from .harness import oracle_p0_sample
from .table import TableFormatError


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    expected: str
    actual: str


def _result(name: str, ok: bool, expected, actual) -> CheckResult:
    return CheckResult(name, bool(ok), str(expected), str(actual))


def enumerated_two_tailed_pvalue(stat_values: np.ndarray, probs: np.ndarray, observed: float) -> float:
    """Exact two-tailed p-value over a finite null support."""
    lower = probs[stat_values <= observed].sum()
    upper = probs[stat_values >= observed].sum()
    return min(1.0, 2.0 * min(lower, upper))


def _enumerate_binary_null(z: np.ndarray, stat) -> tuple[np.ndarray, np.ndarray]:
    values, probs = [], []
    for q in itertools.product((0.0, 1.0), repeat=z.size):
        q = np.asarray(q)
        values.append(stat(q))
        probs.append(float(np.prod(np.where(q == 1.0, z, 1.0 - z))))
    return np.asarray(values), np.asarray(probs)


def check_x2_zero() -> CheckResult:
    rep = stats.x2_statistic(np.full(200, 0.5))
    ok = rep.value == 0.0 and rep.p_value == 0.0
    return _result("x2-at-half", ok, "value=0, p=0", f"value={rep.value}, p={rep.p_value}")


def check_v_constant() -> CheckResult:
    rep = stats.v_statistic(np.array([1.0, 0.0, 1.0, 0.0]), np.full(4, 0.5), b_replicates=99, seed=7)
    expected = 4.0 * math.log(0.5)
    ok = abs(rep.value - expected) <= 1e-12 and rep.p_value == 1.0
    return _result("v-at-half", ok, f"value={expected:.12f}, p=1", f"value={rep.value:.12f}, p={rep.p_value}")


def check_ks_critical() -> CheckResult:
    p = stats.kolmogorov_sf(1.358)
    ok = abs(p - 0.05) <= 0.002
    return _result("ks-critical-value", ok, "0.05 +/- 0.002", f"{p:.6f}")


def check_u_enumeration() -> CheckResult:
    z = np.array([0.2, 0.4, 0.5, 0.6, 0.8, 0.3])
    q = np.array([0.0, 1.0, 1.0, 0.0, 1.0, 0.0])
    rep = stats.u_statistic(q, z, b_replicates=999, seed=11)
    values, probs = _enumerate_binary_null(z, lambda qq: qq.mean())
    exact = enumerated_two_tailed_pvalue(values, probs, rep.value)
    ok = abs(rep.p_value - exact) <= 0.05
    return _result("u-vs-enumeration", ok, f"{exact:.4f} +/- 0.05", f"{rep.p_value:.4f}")


def check_v_enumeration() -> CheckResult:
    z = np.array([0.1, 0.5, 0.9])
    q = np.array([1.0, 0.0, 1.0])
    rep = stats.v_statistic(q, z, b_replicates=999, seed=13)
    values, probs = _enumerate_binary_null(z, lambda qq: stats.bernoulli_loglik(qq, z))
    exact = enumerated_two_tailed_pvalue(values, probs, rep.value)
    ok = abs(rep.p_value - exact) <= 0.05
    return _result("v-vs-enumeration", ok, f"{exact:.4f} +/- 0.05", f"{rep.p_value:.4f}")


def fixture_table(n: int = 20, counts: tuple[int, ...] = (12, 8), seed: int = 5) -> tbl.ReferenceTable:
    """Small two-model table with fixed contents for invariance checks."""
    rng = np.random.default_rng(seed)
    ids = np.repeat(np.arange(1, len(counts) + 1), counts)
    fixture = tbl.ReferenceTable(
        model_ids=ids,
        thetas=rng.normal(size=(n, 1)),
        summaries=rng.normal(size=(n, 2)),
        param_dims=(1,) * len(counts),
    )
    fixture.scale = tbl.estimate_scale(fixture)
    return fixture


def check_reweight_invariance() -> CheckResult:
    fixture = fixture_table()
    expected = fixture.model_proportions
    worst = 0.0
    for i in range(fixture.n):
        result = engine.run_abc(
            fixture,
            fixture.summaries[i],
            float("inf"),
            engine.LeaveOneOut(i),
            engine.AbcOptions(model_prob_mode="reweighted"),
        )
        worst = max(worst, float(np.abs(result.model_probs - expected).max()))
    return _result("reweight-invariance", worst <= 1e-12, "<= 1e-12", f"{worst:.3e}")


def check_oracle_uniformity() -> CheckResult:
    model_set = models.model_set("conjugate-normal")
    rng = np.random.default_rng(41)
    t = tbl.build_table(model_set, 2000, "proportional", rng, n_obs=20)
    t.scale = tbl.estimate_scale(t)
    y_obs = model_set.model(1).simulate(np.array([0.4]), 20, rng)
    p0 = oracle_p0_sample(t, model_set, model_set.summarize(y_obs), 200, 20, rng)
    rep = stats.ks_statistic(p0)
    return _result("oracle-uniformity", rep.p_value > 0.01, "KS p > 0.01", f"KS p = {rep.p_value:.4f}")


def check_table_roundtrip() -> CheckResult:
    fixture = fixture_table(seed=23)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "fixture.abct")
        tbl.save_table(fixture, path)
        loaded = tbl.load_table(path)
        same = (
            np.array_equal(loaded.model_ids, fixture.model_ids)
            and np.allclose(loaded.thetas, fixture.thetas, equal_nan=True)
            and np.array_equal(loaded.summaries, fixture.summaries)
        )
        if not same:
            return _result("table-roundtrip", False, "lossless round-trip", "contents differ")
        with open(path, "rb") as fh:
            blob = fh.read()
        with open(path, "wb") as fh:
            fh.write(blob[:-16])
        try:
            tbl.load_table(path)
        except TableFormatError:
            return _result("table-roundtrip", True, "corruption detected", "corruption detected")
        return _result("table-roundtrip", False, "corruption detected", "truncated file loaded silently")


def check_mc_determinism() -> CheckResult:
    q = np.array([1.0, 0.0, 1.0, 1.0, 0.0])
    z = np.full(5, 0.6)
    a = stats.u_statistic(q, z, b_replicates=499, seed=3).p_value
    b = stats.u_statistic(q, z, b_replicates=499, seed=3).p_value
    return _result("mc-determinism", a == b, f"{a!r} twice", f"{a!r}, {b!r}")


ALL_CHECKS = (
    check_x2_zero,
    check_v_constant,
    check_ks_critical,
    check_u_enumeration,
    check_v_enumeration,
    check_reweight_invariance,
    check_oracle_uniformity,
    check_table_roundtrip,
    check_mc_determinism,
)


def run_selftest() -> list[CheckResult]:
    return [check() for check in ALL_CHECKS]
