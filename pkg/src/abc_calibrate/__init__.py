"""Likelihood-free (ABC) inference with coverage diagnostics.

The package builds a reference table of simulated (model, parameter, summary)
triples, runs uniform-kernel ABC analyses against it, and tests — across a
grid of kernel scales epsilon — whether the resulting posterior
approximations satisfy the coverage property, for both parameter and model
inference.
"""

__version__ = "0.1.0"

from .adjust import AdjustedModelProbs, AdjustedParams, local_linear_adjust, multinomial_logit_adjust
from .engine import AbcOptions, AbcResult, LeaveOneOut, NoAcceptancesError, accept, raw_model_probs, reweight_model_probs, run_abc
from .harness import (
    CoverageRecord,
    HarnessConfig,
    HarnessOutput,
    epsilon_grid,
    oracle_p0_sample,
    resimulate_harness,
    run_harness,
    select_v,
    write_harness_files,
)
from .models import (
    GkParams,
    Model,
    ModelSet,
    exact_posterior_cdf,
    gk_quantile,
    mean_summary,
    model_set,
    quartile_summary,
    sample_prior,
    simulate,
)
from .report import DiagnosticReport, build_calibration, build_curves, build_histogram, build_report, emit
from .stats import (
    StatReport,
    clamp_probs,
    kolmogorov_sf,
    ks_statistic,
    mc_null_pvalue,
    p0_estimate,
    u_statistic,
    v_statistic,
    w_statistic,
    x2_statistic,
)
from .table import (
    DistanceScale,
    ReferenceTable,
    Triple,
    build_table,
    distance,
    distances_to,
    estimate_scale,
    export_table_csv,
    load_table,
    nearest,
    save_table,
)
