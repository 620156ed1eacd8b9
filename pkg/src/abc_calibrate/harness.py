"""Coverage-diagnostic loop.

For each pseudo-observed triple (m0, theta0, s0) in a set V and each epsilon
on a descending grid, the harness runs one leave-one-out ABC analysis
targeting s0 and records the per-parameter coverage p-values (for the true
model's parameters) and the estimated per-model probabilities.

V is either the c table rows closest to the observed summary ("truncated"
mode, the recommended choice: it stops the prior itself from passing the
check at large epsilon) or a uniform sample of rows ("prior" mode).

Cells are pure functions of (table, v index, epsilon) with indexed random
streams, so the c-by-q grid can be evaluated on any number of threads with
bit-identical output.
"""

from __future__ import annotations

import datetime
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import seeds
from .engine import AbcOptions, LeaveOneOut, NoAcceptancesError, run_abc
from .models import ModelSet, exact_posterior_cdf
from .stats import p0_estimate
from .table import ReferenceTable, build_table, distances_to, nearest

DEFAULT_C = 200
DEFAULT_GRID_SIZE = 20
DEFAULT_TOP_FRACTION = 0.5


@dataclass(frozen=True)
class HarnessConfig:
    observed: np.ndarray  # target summary vector
    epsilons: tuple[float, ...]  # strictly decreasing, >= 0
    c: int = DEFAULT_C
    v_mode: str = "truncated"  # truncated | prior
    adjust: str = "none"  # none | regression
    model_prob_mode: str = "reweighted"  # raw | reweighted
    seed: int = 0
    v_indices: tuple[int, ...] | None = None  # explicit override, mainly for tests

    def __post_init__(self) -> None:
        observed = np.asarray(self.observed, dtype=float)
        object.__setattr__(self, "observed", observed)
        if not np.all(np.isfinite(observed)):
            raise ValueError("observed summary must be finite")
        eps = tuple(float(e) for e in self.epsilons)
        object.__setattr__(self, "epsilons", eps)
        if len(eps) == 0:
            raise ValueError("need at least one epsilon")
        if any(e < 0 for e in eps):
            raise ValueError("epsilons must be non-negative")
        if any(a <= b for a, b in zip(eps, eps[1:])):
            raise ValueError("epsilons must be strictly decreasing")
        if self.c < 1:
            raise ValueError("c must be >= 1")
        if self.v_mode not in ("truncated", "prior"):
            raise ValueError(f"bad v_mode {self.v_mode!r}")
        if self.adjust not in ("none", "regression"):
            raise ValueError(f"bad adjust {self.adjust!r}")
        if self.model_prob_mode not in ("raw", "reweighted"):
            raise ValueError(f"bad model_prob_mode {self.model_prob_mode!r}")


@dataclass
class CoverageRecord:
    """Result of one (pseudo-observed triple, epsilon) cell."""

    v_index: int
    epsilon: float
    m0: int
    feasible: bool
    n_accepted: int
    p0: np.ndarray  # one entry per parameter of model m0 (empty if infeasible)
    z: np.ndarray  # per-model probabilities (empty if infeasible)
    flags: tuple[str, ...] = ()


@dataclass
class HarnessOutput:
    config: HarnessConfig
    v_indices: tuple[int, ...]
    records: list[CoverageRecord]  # ordered by (v position, epsilon position)
    acceptance_counts: np.ndarray  # (c, q)
    model_set_name: str
    model_names: tuple[str, ...]
    param_names: tuple[tuple[str, ...], ...]  # per model
    provenance: dict

    @property
    def epsilons(self) -> tuple[float, ...]:
        return self.config.epsilons

    def record(self, v_pos: int, eps_pos: int) -> CoverageRecord:
        return self.records[v_pos * len(self.config.epsilons) + eps_pos]

    def records_at(self, eps_pos: int) -> list[CoverageRecord]:
        q = len(self.config.epsilons)
        return self.records[eps_pos::q]


# ---------------------------------------------------------------------------
# Pseudo-observed selection and the epsilon grid
# ---------------------------------------------------------------------------


def select_v(
    table: ReferenceTable,
    observed: np.ndarray,
    c: int,
    v_mode: str,
    rng: np.random.Generator,
) -> np.ndarray:
    """Pick the c pseudo-observed rows: nearest-to-observed or uniform."""
    if c > table.n:
        raise ValueError(f"c={c} exceeds table size {table.n}")
    if v_mode == "truncated":
        return nearest(table, observed, c)
    if v_mode == "prior":
        return np.sort(rng.choice(table.n, size=c, replace=False))
    raise ValueError(f"bad v_mode {v_mode!r}")


def epsilon_grid(
    table: ReferenceTable,
    observed: np.ndarray,
    q: int = DEFAULT_GRID_SIZE,
    mode: str = "distance-quantiles",
    fractions: tuple[float, ...] | None = None,
    explicit: tuple[float, ...] | None = None,
) -> np.ndarray:
    """Descending epsilon grid.

    ``distance-quantiles`` mode places epsilons at empirical quantiles of the
    distances from the table to the observed summary, by default at q
    geometrically spaced acceptance fractions from 0.5 down to 100/N.
    ``explicit`` mode validates a user-supplied grid and echoes it.
    """
    if mode == "explicit":
        if explicit is None:
            raise ValueError("explicit mode needs a grid")
        grid = np.asarray(explicit, dtype=float)
        if grid.size == 0 or np.any(grid < 0) or np.any(np.diff(grid) >= 0):
            raise ValueError("explicit grid must be strictly decreasing and non-negative")
        return grid
    if mode != "distance-quantiles":
        raise ValueError(f"bad grid mode {mode!r}")
    if q < 1:
        raise ValueError("q must be >= 1")
    if fractions is None:
        low = min(100.0 / table.n, DEFAULT_TOP_FRACTION)
        if q == 1:
            fractions = (DEFAULT_TOP_FRACTION,)
        else:
            fractions = tuple(np.geomspace(DEFAULT_TOP_FRACTION, low, q))
    fracs = np.asarray(fractions, dtype=float)
    if np.any(fracs <= 0) or np.any(fracs > 1):
        raise ValueError("acceptance fractions must lie in (0, 1]")
    d_sorted = np.sort(distances_to(table, observed))
    ranks = np.maximum(np.ceil(fracs * table.n).astype(int), 1) - 1
    grid = d_sorted[ranks]
    if np.any(np.diff(grid) >= 0):
        # Duplicate quantiles can collide on tiny tables; thin them out.
        grid = np.unique(grid)[::-1]
    return np.sort(grid)[::-1]


# ---------------------------------------------------------------------------
# Main loop
# ---------------------------------------------------------------------------


def _cell_records(
    table: ReferenceTable,
    model_set: ModelSet,
    config: HarnessConfig,
    v_index: int,
    loo: LeaveOneOut,
) -> tuple[list[CoverageRecord], np.ndarray]:
    """All epsilon cells for one pseudo-observed row (pure; thread-safe)."""
    m0 = int(table.model_ids[v_index])
    theta0 = table.theta_of(v_index)
    target = table.summaries[v_index]
    d = distances_to(table, target)
    options = AbcOptions(
        model_prob_mode=config.model_prob_mode,
        adjust=config.adjust,
        param_model_id=m0,
    )

    records = []
    counts = np.zeros(len(config.epsilons), dtype=np.int64)
    for j, eps in enumerate(config.epsilons):
        try:
            result = run_abc(table, target, eps, loo, options, model_set=model_set, distances=d)
        except NoAcceptancesError:
            records.append(
                CoverageRecord(v_index, eps, m0, False, 0, np.empty(0), np.empty(0))
            )
            continue
        p0 = np.array(
            [p0_estimate(result.param_draws[:, k], theta0[k]) for k in range(theta0.size)]
        )
        counts[j] = result.n_accepted
        records.append(
            CoverageRecord(
                v_index,
                eps,
                m0,
                True,
                result.n_accepted,
                p0,
                result.model_probs,
                result.flags,
            )
        )
    return records, counts


def run_harness(
    table: ReferenceTable,
    model_set: ModelSet,
    config: HarnessConfig,
    threads: int = 1,
) -> HarnessOutput:
    """Run the full c-by-q diagnostic grid against one reference table.

    Cells with an empty acceptance region are kept with ``feasible=False``
    rather than dropped, so downstream summaries can report how many were
    lost at each epsilon.
    """
    if table.scale is None:
        raise ValueError("table has no distance scale; run estimate_scale first")
    if config.v_indices is not None:
        v_indices = np.asarray(config.v_indices, dtype=np.int64)
        if np.any(v_indices < 0) or np.any(v_indices >= table.n):
            raise ValueError("explicit v_indices outside the table")
    else:
        v_indices = select_v(
            table,
            config.observed,
            config.c,
            config.v_mode,
            seeds.rng(config.seed, seeds.V_SELECT),
        )

    def work(v: int):
        return _cell_records(table, model_set, config, int(v), LeaveOneOut(int(v)))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, v_indices))
    else:
        results = [work(v) for v in v_indices]

    records = [rec for cell_recs, _ in results for rec in cell_recs]
    counts = np.stack([c for _, c in results])
    return HarnessOutput(
        config=config,
        v_indices=tuple(int(v) for v in v_indices),
        records=records,
        acceptance_counts=counts,
        model_set_name=model_set.name,
        model_names=tuple(m.name for m in model_set.models),
        param_names=tuple(m.param_names for m in model_set.models),
        provenance=_provenance(table, config, mode="reuse"),
    )


def resimulate_harness(
    table: ReferenceTable,
    model_set: ModelSet,
    config: HarnessConfig,
    n_obs: int,
    resim_n: int | None = None,
    threads: int = 1,
) -> HarnessOutput:
    """Variant that simulates a fresh reference table for every V element.

    V, the distance scale, and the epsilon grid still come from the original
    table so results are comparable with run_harness; only the samples backing
    each ABC analysis are new.  Far more expensive, used to confirm that
    sample reuse does not distort the diagnostics.
    """
    if table.scale is None:
        raise ValueError("table has no distance scale; run estimate_scale first")
    if config.v_indices is not None:
        v_indices = np.asarray(config.v_indices, dtype=np.int64)
    else:
        v_indices = select_v(
            table,
            config.observed,
            config.c,
            config.v_mode,
            seeds.rng(config.seed, seeds.V_SELECT),
        )
    n_fresh = table.n if resim_n is None else resim_n

    def work(pos_v):
        pos, v = pos_v
        v = int(v)
        fresh = build_table(
            model_set,
            n_fresh,
            table.allocation,
            seeds.rng(config.seed, seeds.RESIM, pos),
            n_obs,
        )
        fresh.scale = table.scale
        sub = replace(config, v_indices=None)
        m0 = int(table.model_ids[v])
        theta0 = table.theta_of(v)
        target = table.summaries[v]
        d = distances_to(fresh, target)
        options = AbcOptions(
            model_prob_mode=config.model_prob_mode, adjust=config.adjust, param_model_id=m0
        )
        records = []
        counts = np.zeros(len(sub.epsilons), dtype=np.int64)
        for j, eps in enumerate(sub.epsilons):
            try:
                result = run_abc(
                    fresh, target, eps, LeaveOneOut(None), options, model_set=model_set, distances=d
                )
            except NoAcceptancesError:
                records.append(CoverageRecord(v, eps, m0, False, 0, np.empty(0), np.empty(0)))
                continue
            p0 = np.array(
                [p0_estimate(result.param_draws[:, k], theta0[k]) for k in range(theta0.size)]
            )
            counts[j] = result.n_accepted
            records.append(
                CoverageRecord(v, eps, m0, True, result.n_accepted, p0, result.model_probs, result.flags)
            )
        return records, counts

    tasks = list(enumerate(v_indices))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, tasks))
    else:
        results = [work(t) for t in tasks]

    records = [rec for cell_recs, _ in results for rec in cell_recs]
    counts = np.stack([c for _, c in results])
    return HarnessOutput(
        config=config,
        v_indices=tuple(int(v) for v in v_indices),
        records=records,
        acceptance_counts=counts,
        model_set_name=model_set.name,
        model_names=tuple(m.name for m in model_set.models),
        param_names=tuple(m.param_names for m in model_set.models),
        provenance=_provenance(table, config, mode="resimulate"),
    )


def oracle_p0_sample(
    table: ReferenceTable,
    model_set: ModelSet,
    observed: np.ndarray,
    c: int,
    n_obs: int,
    rng: np.random.Generator,
    v_mode: str = "truncated",
) -> np.ndarray:
    """Exact coverage p-values from a closed-form posterior, bypassing ABC.

    For each selected pseudo-observed row, evaluates the oracle posterior CDF
    at the true parameter.  Under a correct posterior these are exactly
    uniform, which pins down what the ABC-based pipeline should reproduce.
    """
    model = model_set.model(1)
    v_indices = select_v(table, observed, c, v_mode, rng)
    return np.array(
        [
            exact_posterior_cdf(
                model,
                float(table.theta_of(v)[0]),
                summary=table.summaries[v],
                n_obs=n_obs,
            )
            for v in v_indices
        ]
    )


# ---------------------------------------------------------------------------
# Serialisation
# ---------------------------------------------------------------------------


def _provenance(table: ReferenceTable, config: HarnessConfig, mode: str) -> dict:
    from . import __version__

    return {
        "table_checksum": table.checksum(),
        "table_n": table.n,
        "seed": config.seed,
        "mode": mode,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "version": __version__,
    }


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def output_to_json_dict(output: HarnessOutput) -> dict:
    cfg = output.config
    return {
        "model_set": output.model_set_name,
        "config": {
            "observed": list(cfg.observed),
            "epsilons": list(cfg.epsilons),
            "c": cfg.c,
            "v_mode": cfg.v_mode,
            "adjust": cfg.adjust,
            "model_prob_mode": cfg.model_prob_mode,
            "seed": cfg.seed,
        },
        "v_indices": list(output.v_indices),
        "acceptance_counts": output.acceptance_counts.tolist(),
        "records": [
            {
                "v_index": r.v_index,
                "epsilon": r.epsilon,
                "m0": r.m0,
                "feasible": r.feasible,
                "n_accepted": r.n_accepted,
                "p0": r.p0.tolist(),
                "z": r.z.tolist(),
                "flags": list(r.flags),
            }
            for r in output.records
        ],
        "provenance": output.provenance,
    }


def write_harness_files(output: HarnessOutput, out_dir: str | Path) -> list[Path]:
    """Write harness.json plus the two flat CSV views of the records."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []

    json_path = out_dir / "harness.json"
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(output_to_json_dict(output), fh, indent=1)
    paths.append(json_path)

    pv_path = out_dir / "p_values.csv"
    with open(pv_path, "w", encoding="utf-8") as fh:
        fh.write("v_index,epsilon,param,p0\n")
        for r in output.records:
            names = output.param_names[r.m0 - 1]
            for k, p0 in enumerate(r.p0):
                fh.write(f"{r.v_index},{_fmt(r.epsilon)},{names[k]},{_fmt(p0)}\n")
    paths.append(pv_path)

    mp_path = out_dir / "model_probs.csv"
    with open(mp_path, "w", encoding="utf-8") as fh:
        fh.write("v_index,epsilon,model,z,m0,feasible\n")
        for r in output.records:
            if r.feasible:
                for i, z in enumerate(r.z, start=1):
                    fh.write(
                        f"{r.v_index},{_fmt(r.epsilon)},{i},{_fmt(z)},{r.m0},true\n"
                    )
            else:
                fh.write(f"{r.v_index},{_fmt(r.epsilon)},,,{r.m0},false\n")
    paths.append(mp_path)
    return paths
