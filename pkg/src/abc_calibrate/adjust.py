"""Regression post-processing of accepted ABC samples.

Parameters: local-linear weighted least squares of theta on (s - s_obs),
shifting each draw to theta* = theta - beta'(s - s_obs).  Bounded parameters
are moved to an unbounded scale first (see models.ParamTransform) so adjusted
draws stay inside the prior support.

Model labels: weighted multinomial logistic regression of the accepted model
id on (s - s_obs), fitted by Newton iterations on the weighted log-likelihood
(iteratively reweighted least squares); probabilities are read off at
s = s_obs, i.e. from the intercepts.

Both regressions use Epanechnikov weights w_i = 1 - (d_i / eps)^2 on the
accepted points (uniform when eps is infinite).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import ParamTransform

IRLS_MAX_ITER = 100
IRLS_TOL = 1e-8
IRLS_RIDGE = 1e-8
_DIVERGED = 50.0  # |coefficient| beyond this signals separation


@dataclass
class AdjustedParams:
    theta_star: np.ndarray  # (n, p) adjusted draws, original scale
    coefficients: np.ndarray  # (p, d+1) WLS coefficients on the working scale
    residual_scale: np.ndarray  # (p,) weighted RMS residual
    skipped: tuple[int, ...] = ()  # parameter columns left unadjusted


@dataclass
class AdjustedModelProbs:
    probs: np.ndarray  # per-model probabilities at s_obs, summing to 1
    converged: bool = True
    fallback: str | None = None  # None | single-class | separation | no-convergence


def epanechnikov_weights(distances: np.ndarray | None, epsilon: float, n: int) -> np.ndarray:
    if distances is None or not np.isfinite(epsilon) or epsilon == 0:
        return np.ones(n)
    w = 1.0 - (np.asarray(distances, dtype=float) / epsilon) ** 2
    return np.clip(w, 0.0, None)


def local_linear_adjust(
    theta: np.ndarray,
    summaries: np.ndarray,
    s_obs: np.ndarray,
    epsilon: float,
    distances: np.ndarray | None = None,
    transforms: tuple[ParamTransform, ...] | None = None,
) -> AdjustedParams:
    """Shift accepted draws along the fitted local-linear trend to s_obs.

    Columns whose regression is unidentifiable (too few points or a
    rank-deficient design) are returned unchanged and listed in ``skipped``.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    summaries = np.atleast_2d(np.asarray(summaries, dtype=float))
    n, p = theta.shape
    d = summaries.shape[1]
    ds = summaries - np.asarray(s_obs, dtype=float)

    theta_star = theta.copy()
    coefs = np.zeros((p, d + 1))
    resid_scale = np.zeros(p)

    if n <= d + 1:
        return AdjustedParams(theta_star, coefs, resid_scale, skipped=tuple(range(p)))

    w = epanechnikov_weights(distances, epsilon, n)
    if w.sum() <= 0:
        return AdjustedParams(theta_star, coefs, resid_scale, skipped=tuple(range(p)))
    sw = np.sqrt(w)
    design = np.column_stack([np.ones(n), ds]) * sw[:, None]

    skipped = []
    for j in range(p):
        tf = transforms[j] if transforms is not None else None
        t = tf.forward(theta[:, j]) if tf is not None else theta[:, j]
        beta, _, rank, _ = np.linalg.lstsq(design, t * sw, rcond=None)
        if rank < d + 1:
            skipped.append(j)
            continue
        t_star = t - ds @ beta[1:]
        theta_star[:, j] = tf.inverse(t_star) if tf is not None else t_star
        coefs[j] = beta
        resid = t - design / sw[:, None] @ beta
        resid_scale[j] = np.sqrt(np.sum(w * resid**2) / w.sum())
    return AdjustedParams(theta_star, coefs, resid_scale, skipped=tuple(skipped))


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _raw_proportions(model_ids: np.ndarray, n_models: int) -> np.ndarray:
    counts = np.bincount(model_ids, minlength=n_models + 1)[1:]
    return counts / counts.sum()


def multinomial_logit_adjust(
    model_ids: np.ndarray,
    summaries: np.ndarray,
    s_obs: np.ndarray,
    epsilon: float,
    distances: np.ndarray | None = None,
    n_models: int | None = None,
) -> AdjustedModelProbs:
    """Model probabilities at s_obs from a weighted multinomial logistic fit.

    Falls back to the raw acceptance proportions on complete separation, a
    rank-starved design, or non-convergence; the fallback reason is reported.
    """
    model_ids = np.asarray(model_ids, dtype=np.int64)
    summaries = np.atleast_2d(np.asarray(summaries, dtype=float))
    n = model_ids.size
    if n == 0:
        raise ValueError("no accepted samples to fit")
    if n_models is None:
        n_models = int(model_ids.max())

    raw = _raw_proportions(model_ids, n_models)
    classes = np.flatnonzero(np.bincount(model_ids, minlength=n_models + 1)[1:]) + 1
    if classes.size < 2:
        return AdjustedModelProbs(raw, converged=False, fallback="single-class")

    ds = summaries - np.asarray(s_obs, dtype=float)
    # Constant regressors carry no information and break the Hessian; drop them.
    keep = np.flatnonzero(np.ptp(ds, axis=0) > 0)
    x = np.column_stack([np.ones(n), ds[:, keep]])
    n_col = x.shape[1]
    w = epanechnikov_weights(distances, epsilon, n)
    if w.sum() <= 0:
        return AdjustedModelProbs(raw, converged=False, fallback="zero-weights")

    k = classes.size
    y = (model_ids[:, None] == classes[None, :]).astype(float)  # (n, k)
    beta = np.zeros((k - 1, n_col))  # last class is the baseline

    converged = False
    for _ in range(IRLS_MAX_ITER):
        logits = np.column_stack([x @ beta.T, np.zeros(n)])
        probs = _softmax_rows(logits)
        s = probs[:, : k - 1]
        grad = np.einsum("n,na,nk->ka", w, x, y[:, : k - 1] - s).ravel()
        cross = np.einsum("nk,nl->nkl", s, s)
        curv = np.einsum("nk,kl->nkl", s, np.eye(k - 1)) - cross
        hess = np.einsum("n,na,nkl,nb->kalb", w, x, curv, x).reshape(
            (k - 1) * n_col, (k - 1) * n_col
        )
        hess[np.diag_indices_from(hess)] += IRLS_RIDGE
        try:
            step = np.linalg.solve(hess, grad).reshape(k - 1, n_col)
        except np.linalg.LinAlgError:
            return AdjustedModelProbs(raw, converged=False, fallback="singular")
        beta += step
        if not np.all(np.isfinite(beta)) or np.abs(beta).max() > _DIVERGED:
            return AdjustedModelProbs(raw, converged=False, fallback="separation")
        if np.abs(step).max() < IRLS_TOL:
            converged = True
            break
    if not converged:
        return AdjustedModelProbs(raw, converged=False, fallback="no-convergence")

    # At s = s_obs the design row is (1, 0, ..., 0): intercepts only.
    logits0 = np.append(beta[:, 0], 0.0)
    p0 = _softmax_rows(logits0[None, :])[0]
    probs_full = np.zeros(n_models)
    probs_full[classes - 1] = p0
    return AdjustedModelProbs(probs_full, converged=True, fallback=None)
