"""Coverage p-values and diagnostic statistics.

Given c replicated coverage p-values p_1..p_c (uniform when coverage holds),
uniformity is tested with

    X2 = sum_i ndtri(p_i)^2        (chi-square with c dof under the null)
    KS = sup_x |F_c(x) - x|        (one-sample Kolmogorov-Smirnov)

For model inference with indicators q_j and estimated probabilities z_j the
statistics are

    U = mean(q)
    V = sum_j [q_j log z_j + (1-q_j) log(1-z_j)]
    W = sum_j log Z[j, m0_j]       (across all models at once)

whose null distributions (q_j ~ Bernoulli(z_j), m0_j ~ Z[j]) are simulated by
Monte Carlo.  Null streams are keyed by (seed, replicate index) only — never
by the kernel scale — so p-value curves over epsilon stay smooth; reusing the
seed across epsilon values makes identical inputs give identical p-values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import ndtri
from scipy.stats import chi2

from .seeds import replicate_rng

DEFAULT_REPLICATES = 999
_KS_TERM_TOL = 1e-12


@dataclass(frozen=True)
class StatReport:
    statistic: str  # X2 | KS | U | V | W
    value: float
    p_value: float
    method: str  # exact | asymptotic | monte-carlo
    mc_replicates: int | None = None


def p0_estimate(posterior_draws: np.ndarray, theta0: float) -> float:
    """Coverage p-value (1 + #{draws < theta0}) / (2 + n).

    The add-one smoothing is the posterior-mean estimate of Pr(draw < theta0)
    under a uniform prior; it keeps the value strictly inside (0, 1).
    """
    if not np.isfinite(theta0):
        raise ValueError("theta0 must be finite")
    draws = np.asarray(posterior_draws, dtype=float)
    return (1.0 + np.count_nonzero(draws < theta0)) / (2.0 + draws.size)


def x2_statistic(p: np.ndarray) -> StatReport:
    """Sum of squared normal quantiles of the p-values, two-tailed chi-square test."""
    p = np.asarray(p, dtype=float)
    if p.size == 0:
        raise ValueError("need at least one p-value")
    if np.any(p <= 0) or np.any(p >= 1):
        raise ValueError("p-values must lie strictly inside (0, 1)")
    value = float(np.sum(ndtri(p) ** 2))
    cdf = chi2.cdf(value, df=p.size)
    return StatReport("X2", value, float(min(1.0, 2.0 * min(cdf, 1.0 - cdf))), "exact")


def kolmogorov_sf(x: float) -> float:
    """Limiting survival function 2 * sum_{k>=1} (-1)^(k-1) exp(-2 k^2 x^2),
    truncated once terms drop below 1e-12."""
    if x <= 0:
        return 1.0
    total = 0.0
    for k in range(1, 100001):
        term = math.exp(-2.0 * k * k * x * x)
        total += term if k % 2 else -term
        if term < _KS_TERM_TOL:
            break
    return min(1.0, max(0.0, 2.0 * total))


def ks_statistic(
    p: np.ndarray,
    method: str = "asymptotic",
    b_replicates: int = DEFAULT_REPLICATES,
    seed: int = 0,
) -> StatReport:
    """One-sample Kolmogorov-Smirnov distance to U(0,1), one-tailed p-value.

    The asymptotic p-value is of the right order even though coverage
    p-values are mildly discrete; ``method="monte-carlo"`` resamples uniform
    p-vectors instead when accuracy matters.
    """
    p = np.asarray(p, dtype=float)
    if p.size == 0:
        raise ValueError("need at least one p-value")
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("p-values must lie in [0, 1]")
    value = _ks_distance(p)
    if method == "asymptotic":
        return StatReport("KS", value, kolmogorov_sf(math.sqrt(p.size) * value), "asymptotic")
    if method == "monte-carlo":
        count = 0
        for b in range(b_replicates):
            if _ks_distance(replicate_rng(seed, b).random(p.size)) >= value:
                count += 1
        p_value = (count + 1) / (b_replicates + 1)
        return StatReport("KS", value, p_value, "monte-carlo", b_replicates)
    raise ValueError(f"unknown method {method!r}")


def _ks_distance(p: np.ndarray) -> float:
    x = np.sort(p)
    n = x.size
    grid = np.arange(1, n + 1) / n
    return float(max(np.max(grid - x), np.max(x - (grid - 1.0 / n))))


def mc_null_pvalue(
    simulate_stat: Callable[[np.random.Generator], float],
    observed: float,
    b_replicates: int,
    seed: int,
) -> float:
    """Two-tailed Monte Carlo p-value 2*min(lower, upper), capped at 1, with
    the rank correction (r+1)/(B+1) in each tail."""
    if b_replicates < 1:
        raise ValueError("need at least one replicate")
    vals = np.empty(b_replicates)
    for b in range(b_replicates):
        vals[b] = simulate_stat(replicate_rng(seed, b))
    lower = (np.count_nonzero(vals <= observed) + 1) / (b_replicates + 1)
    upper = (np.count_nonzero(vals >= observed) + 1) / (b_replicates + 1)
    return min(1.0, 2.0 * min(lower, upper))


def _check_binary(q: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    q = np.asarray(q, dtype=float)
    z = np.asarray(z, dtype=float)
    if q.shape != z.shape or q.ndim != 1:
        raise ValueError(f"q and z must be equal-length vectors, got {q.shape} and {z.shape}")
    if np.any((q != 0) & (q != 1)):
        raise ValueError("q must be binary")
    if np.any(z < 0) or np.any(z > 1):
        raise ValueError("z must lie in [0, 1]")
    return q, z


def u_statistic(
    q: np.ndarray,
    z: np.ndarray,
    b_replicates: int = DEFAULT_REPLICATES,
    seed: int = 0,
) -> StatReport:
    """Observed frequency mean(q) against its Bernoulli(z) Monte Carlo null."""
    q, z = _check_binary(q, z)
    value = float(q.mean())
    p_value = mc_null_pvalue(
        lambda rng: float((rng.random(z.size) < z).mean()), value, b_replicates, seed
    )
    return StatReport("U", value, p_value, "monte-carlo", b_replicates)


def bernoulli_loglik(q: np.ndarray, z: np.ndarray) -> float:
    return float(np.sum(q * np.log(z) + (1.0 - q) * np.log(1.0 - z)))


def v_statistic(
    q: np.ndarray,
    z: np.ndarray,
    b_replicates: int = DEFAULT_REPLICATES,
    seed: int = 0,
) -> StatReport:
    """Bernoulli log-likelihood of q under z, Monte Carlo two-tailed p-value.

    Callers must clamp z away from 0 and 1 first (see clamp_probs); the logs
    are evaluated on z as given.
    """
    q, z = _check_binary(q, z)
    if np.any(z <= 0) or np.any(z >= 1):
        raise ValueError("z must lie strictly inside (0, 1); clamp empirical zeros first")
    value = bernoulli_loglik(q, z)

    def simulate(rng: np.random.Generator) -> float:
        return bernoulli_loglik((rng.random(z.size) < z).astype(float), z)

    p_value = mc_null_pvalue(simulate, value, b_replicates, seed)
    return StatReport("V", value, p_value, "monte-carlo", b_replicates)


def w_statistic(
    m0: np.ndarray,
    probs: np.ndarray,
    eta: np.ndarray | None = None,
    b_replicates: int = DEFAULT_REPLICATES,
    seed: int = 0,
) -> StatReport:
    """Sum of log estimated probabilities of the true models, all models jointly.

    ``probs`` holds one probability vector per record; ``eta`` gives optional
    per-record clamp bounds applied inside the logs.  Null model labels are
    resampled from each record's probability row.
    """
    m0 = np.asarray(m0, dtype=np.int64)
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    if m0.size != probs.shape[0]:
        raise ValueError(f"{m0.size} labels but {probs.shape[0]} probability rows")
    if np.any(m0 < 1) or np.any(m0 > probs.shape[1]):
        raise ValueError("model labels must index the probability columns (1-based)")
    rows = np.arange(m0.size)
    lo = np.full(m0.size, 1e-300) if eta is None else np.asarray(eta, dtype=float)
    hi = 1.0 - lo

    def loglik(labels: np.ndarray) -> float:
        picked = probs[rows, labels - 1]
        return float(np.sum(np.log(np.clip(picked, lo, hi))))

    value = loglik(m0)
    cum = np.cumsum(probs, axis=1)

    def simulate(rng: np.random.Generator) -> float:
        u = rng.random(m0.size)
        labels = (u[:, None] > cum).sum(axis=1) + 1
        return loglik(np.minimum(labels, probs.shape[1]))

    p_value = mc_null_pvalue(simulate, value, b_replicates, seed)
    return StatReport("W", value, p_value, "monte-carlo", b_replicates)


def clamp_probs(z: np.ndarray, n_accepted: np.ndarray) -> np.ndarray:
    """Clamp empirical probabilities into [eta, 1-eta], eta = 1/(2(n+1)).

    Mirrors the add-one smoothing of p0_estimate: an estimate from n accepted
    samples is kept half an increment away from 0 and 1 so log-likelihood
    statistics stay finite.
    """
    z = np.asarray(z, dtype=float)
    eta = 1.0 / (2.0 * (np.asarray(n_accepted, dtype=float) + 1.0))
    return np.clip(z, eta, 1.0 - eta)
