"""Command-line front end.

Subcommands:

* ``build``     -- simulate a reference table from a config and persist it.
* ``diagnose``  -- run the coverage harness against a table and emit reports.
* ``selftest``  -- quick installation checks with fixed seeds.

Exit codes: 0 success, 1 selftest failure, 2 usage/configuration error,
3 runtime failure.  The CLI only wires module operations together.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import config as cfg
from . import harness, report, seeds, selftest
from .models import UnknownModelError, model_set
from .table import TableFormatError, build_table, estimate_scale, load_table, save_table

EXIT_OK = 0
EXIT_SELFTEST = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="abc-calibrate",
        description="Coverage diagnostics for ABC posterior approximations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    build = sub.add_parser("build", help="simulate and persist a reference table")
    build.add_argument("-c", "--config", required=True, help="JSON config file")
    build.add_argument("--out", help="table output path (default: <out_dir>/table.abct)")
    build.add_argument("--seed", type=int, help="override the master seed")

    diag = sub.add_parser("diagnose", help="run coverage diagnostics against a table")
    diag.add_argument("-c", "--config", required=True, help="JSON config file")
    diag.add_argument("--table", help="table file (default: <out_dir>/table.abct)")
    diag.add_argument("--out", help="report directory (default: config out_dir)")
    diag.add_argument("--threads", type=int, help="worker threads (default: hardware)")
    diag.add_argument("--seed", type=int, help="override the master seed")
    diag.add_argument("--v-mode", choices=["truncated", "prior"], dest="v_mode")
    diag.add_argument("--adjust", choices=["none", "regression"])
    diag.add_argument("--epsilons", help="explicit descending grid, comma-separated")

    sub.add_parser("selftest", help="run the quick installation checks")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "build":
            return cmd_build(args)
        if args.command == "diagnose":
            return cmd_diagnose(args)
        return cmd_selftest(args)
    except (cfg.ConfigError, TableFormatError, UnknownModelError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - map anything else to the runtime code
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def _table_path(run: cfg.RunConfig, override: str | None) -> Path:
    if override:
        return Path(override)
    if run.table_path:
        return Path(run.table_path)
    return Path(run.out_dir) / "table.abct"


def cmd_build(args: argparse.Namespace) -> int:
    run = cfg.load_config(args.config)
    if args.seed is not None:
        run = _replace(run, seed=args.seed)
    mset = model_set(run.model_set)
    table = build_table(
        mset, run.n_table, run.allocation, seeds.rng(run.seed, seeds.TABLE), run.n_obs
    )
    table.scale = estimate_scale(table, mset.summary_names)
    table.seed = run.seed
    path = _table_path(run, args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    checksum = save_table(table, path)
    print(
        f"built table: model_set={run.model_set} n={run.n_table} n_obs={run.n_obs} "
        f"seed={run.seed} -> {path} (sha256={checksum})"
    )
    return EXIT_OK


def cmd_diagnose(args: argparse.Namespace) -> int:
    run = cfg.load_config(args.config)
    if args.seed is not None:
        run = _replace(run, seed=args.seed)
    if args.v_mode:
        run = _replace(run, v_mode=args.v_mode)
    if args.adjust:
        run = _replace(run, adjust=args.adjust)
    if args.epsilons:
        try:
            grid = tuple(float(tok) for tok in args.epsilons.split(","))
        except ValueError:
            raise cfg.ConfigError(f"--epsilons must be comma-separated numbers, got {args.epsilons!r}")
        run = _replace(run, epsilons=grid)
    out_dir = Path(args.out) if args.out else Path(run.out_dir)
    threads = args.threads if args.threads else cfg.default_threads()
    if threads < 1:
        raise cfg.ConfigError("--threads must be >= 1")

    mset = model_set(run.model_set)
    table = load_table(_table_path(run, args.table))
    if table.model_set_name != run.model_set:
        raise cfg.ConfigError(
            f"table was built for model set {table.model_set_name!r}, config says {run.model_set!r}"
        )
    if table.summary_dim != mset.summary_dim:
        raise cfg.ConfigError(
            f"table summary dimension {table.summary_dim} != model set's {mset.summary_dim}"
        )
    if run.c > table.n:
        raise cfg.ConfigError(f"c={run.c} exceeds table size {table.n}")
    if table.scale is None:
        table.scale = estimate_scale(table, mset.summary_names)

    data = cfg.observed_data(run, mset)
    s_obs = mset.summarize(data)
    if run.epsilons is not None:
        grid = harness.epsilon_grid(table, s_obs, mode="explicit", explicit=run.epsilons)
    else:
        grid = harness.epsilon_grid(table, s_obs, q=run.n_epsilons)

    hconfig = harness.HarnessConfig(
        observed=s_obs,
        epsilons=tuple(grid),
        c=run.c,
        v_mode=run.v_mode,
        adjust=run.adjust,
        model_prob_mode=run.model_prob_mode,
        seed=run.seed,
    )
    output = harness.run_harness(table, mset, hconfig, threads=threads)
    harness.write_harness_files(output, out_dir)
    diag = report.build_report(
        output,
        hist_bins=run.hist_bins,
        cal_bins=run.cal_bins,
        b_replicates=run.mc_replicates,
    )
    paths = report.emit(diag, out_dir)

    for curve in diag.curves:
        for point in curve.points:
            if point.missing:
                print(f"{curve.statistic}[{curve.target}] eps={point.epsilon:g} infeasible")
            else:
                print(
                    f"{curve.statistic}[{curve.target}] eps={point.epsilon:g} "
                    f"value={point.value:.6g} p={point.p_value:.4g}"
                )
    dropped = diag.metadata["dropped_cells_per_epsilon"]
    if any(dropped):
        print(f"dropped cells per epsilon: {dropped}")
    print(f"wrote {', '.join(str(p) for p in paths)}")
    return EXIT_OK


def cmd_selftest(args: argparse.Namespace) -> int:
    results = selftest.run_selftest()
    failed = 0
    for res in results:
        status = "PASS" if res.ok else "FAIL"
        line = f"[{status}] {res.name}: expected {res.expected}, got {res.actual}"
        print(line)
        failed += 0 if res.ok else 1
    if failed:
        print(f"{failed}/{len(results)} checks failed")
        return EXIT_SELFTEST
    print(f"all {len(results)} checks passed")
    return EXIT_OK


def _replace(run: cfg.RunConfig, **kwargs) -> cfg.RunConfig:
    from dataclasses import replace

    return replace(run, **kwargs)


if __name__ == "__main__":
    sys.exit(main())
