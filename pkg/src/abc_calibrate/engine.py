"""Uniform-kernel ABC: acceptance within epsilon and model-probability
estimates, with the leave-one-out reweighting correction.

Removing the pseudo-observed triple from the table shifts the empirical prior
over models by one draw; the correction rescales estimated probabilities by
h_i(full table) / h_i(table minus the excluded row) so that, at epsilon =
infinity, the estimate no longer depends on which row was excluded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import adjust
from .models import ModelSet
from .table import ReferenceTable, distances_to


class NoAcceptancesError(RuntimeError):
    """The acceptance region contained no table rows."""

    def __init__(self, epsilon: float | None = None):
        self.epsilon = epsilon
        detail = "" if epsilon is None else f" at epsilon={epsilon:g}"
        super().__init__(f"no accepted samples{detail}")


@dataclass(frozen=True)
class LeaveOneOut:
    """Optional exclusion of one table row (the pseudo-observed triple)."""

    excluded_index: int | None = None


@dataclass(frozen=True)
class AbcOptions:
    model_prob_mode: str = "reweighted"  # raw | reweighted
    adjust: str = "none"  # none | regression
    param_model_id: int | None = None  # model whose parameter draws to return

    def __post_init__(self) -> None:
        if self.model_prob_mode not in ("raw", "reweighted"):
            raise ValueError(f"bad model_prob_mode {self.model_prob_mode!r}")
        if self.adjust not in ("none", "regression"):
            raise ValueError(f"bad adjust {self.adjust!r}")


@dataclass
class AbcResult:
    """Accepted posterior sample for one target summary and one epsilon."""

    epsilon: float
    accepted_indices: np.ndarray
    n_accepted: int
    model_probs: np.ndarray
    param_model_id: int | None = None
    param_draws: np.ndarray | None = None  # (n_model, param_dim), original scale
    flags: tuple[str, ...] = ()


def accept(
    table: ReferenceTable,
    target: np.ndarray,
    epsilon: float,
    loo: LeaveOneOut = LeaveOneOut(),
    distances: np.ndarray | None = None,
) -> np.ndarray:
    """Indices (ascending) of non-excluded rows within epsilon of the target.

    The boundary is inclusive, so an epsilon taken from an observed distance
    accepts the row that defines it.
    """
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    d = distances_to(table, target) if distances is None else distances
    mask = d <= epsilon
    if loo.excluded_index is not None:
        if not 0 <= loo.excluded_index < table.n:
            raise IndexError(f"excluded index {loo.excluded_index} outside 0..{table.n - 1}")
        mask = mask.copy()
        mask[loo.excluded_index] = False
    return np.flatnonzero(mask)


def raw_model_probs(table: ReferenceTable, accepted: np.ndarray) -> np.ndarray:
    """Per-model acceptance proportions g(m=i) = #{accepted from i} / #accepted."""
    if len(accepted) == 0:
        raise NoAcceptancesError()
    counts = np.bincount(table.model_ids[accepted], minlength=table.n_models + 1)[1:]
    return counts / counts.sum()


def reweight_model_probs(raw: np.ndarray, h_u: np.ndarray, h_w: np.ndarray) -> np.ndarray:
    """Rescale probabilities by h_u/h_w and renormalise."""
    raw = np.asarray(raw, dtype=float)
    h_u = np.asarray(h_u, dtype=float)
    h_w = np.asarray(h_w, dtype=float)
    if not raw.shape == h_u.shape == h_w.shape:
        raise ValueError("raw, h_u and h_w must have equal length")
    out = np.zeros_like(raw)
    pos = raw > 0
    if np.any(h_w[pos] == 0):
        # Cannot happen when h_w counts the set the acceptances came from.
        raise ValueError("a model has accepted samples but zero weight in the source set")
    out[pos] = raw[pos] * h_u[pos] / h_w[pos]
    return out / out.sum()


def _loo_proportions(table: ReferenceTable, loo: LeaveOneOut) -> tuple[np.ndarray, np.ndarray]:
    counts = table.per_model_counts.astype(float)
    h_u = counts / table.n
    if loo.excluded_index is None:
        return h_u, h_u
    w = counts.copy()
    w[table.model_ids[loo.excluded_index] - 1] -= 1
    return h_u, w / (table.n - 1)


def run_abc(
    table: ReferenceTable,
    target: np.ndarray,
    epsilon: float,
    loo: LeaveOneOut = LeaveOneOut(),
    options: AbcOptions = AbcOptions(),
    model_set: ModelSet | None = None,
    distances: np.ndarray | None = None,
) -> AbcResult:
    """One ABC analysis: acceptance, model probabilities, and (optionally)
    parameter draws for one model, regression-adjusted on request.

    Raises NoAcceptancesError when nothing falls within epsilon.
    """
    d = distances_to(table, target) if distances is None else distances
    accepted = accept(table, target, epsilon, loo, distances=d)
    if len(accepted) == 0:
        raise NoAcceptancesError(epsilon)

    flags: list[str] = []
    probs = raw_model_probs(table, accepted)
    if options.adjust == "regression":
        fit = adjust.multinomial_logit_adjust(
            table.model_ids[accepted],
            table.summaries[accepted],
            target,
            epsilon,
            distances=d[accepted],
            n_models=table.n_models,
        )
        probs = fit.probs
        if fit.fallback:
            flags.append(f"model-probs-fallback:{fit.fallback}")
    if options.model_prob_mode == "reweighted":
        h_u, h_w = _loo_proportions(table, loo)
        probs = reweight_model_probs(probs, h_u, h_w)

    param_draws = None
    if options.param_model_id is not None:
        mid = options.param_model_id
        dim = table.param_dims[mid - 1]
        rows = accepted[table.model_ids[accepted] == mid]
        theta = table.thetas[rows, :dim]
        if options.adjust == "regression" and dim > 0 and len(rows):
            transforms = model_set.model(mid).transforms if model_set is not None else None
            fit = adjust.local_linear_adjust(
                theta,
                table.summaries[rows],
                target,
                epsilon,
                distances=d[rows],
                transforms=transforms,
            )
            theta = fit.theta_star
            if fit.skipped:
                flags.append(f"param-adjust-skipped:{','.join(map(str, fit.skipped))}")
        param_draws = theta

    return AbcResult(
        epsilon=epsilon,
        accepted_indices=accepted,
        n_accepted=len(accepted),
        model_probs=probs,
        param_model_id=options.param_model_id,
        param_draws=param_draws,
        flags=tuple(flags),
    )
