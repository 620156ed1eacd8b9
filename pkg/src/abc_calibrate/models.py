"""Simulators, priors and summary statistics.

Built-in models:

* ``normal``            -- parameter-free N(0,1) observations.
* ``gk``                -- g-and-k distribution gk(0, 1, g, 0) with g ~ U(0, 4),
                           sampled by quantile-function inversion.
* ``conjugate-normal``  -- normal data with a normal prior on the mean; its
                           posterior is available in closed form, which makes it
                           an exact oracle for calibration checks.
* ``synthetic3``        -- three 9-parameter toy models, used to exercise the
                           multi-model workflow shape.

Model sets combine one or more models with prior weights and a shared summary
statistic (lower quartile / median / upper quartile by default).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr, ndtri


class UnknownModelError(KeyError):
    """Requested model or model set is not registered."""


class OracleError(TypeError):
    """Exact-posterior query on a model without a closed-form posterior."""


# ---------------------------------------------------------------------------
# g-and-k distribution
# ---------------------------------------------------------------------------

GK_OVERSHOOT = 0.8  # conventional overshoot constant c


@dataclass(frozen=True)
class GkParams:
    """g-and-k parameters: location a, scale b, skewness g, kurtosis k.

    With the conventional overshoot c = 0.8 the quantile function is strictly
    increasing for k >= 0 (any g); for -0.5 < k < 0 combined with |g| beyond
    about 0.8 it can dip slightly, so stick to k >= 0 when a proper
    distribution is required.
    """

    a: float = 0.0
    b: float = 1.0
    g: float = 0.0
    k: float = 0.0
    c: float = GK_OVERSHOOT

    def __post_init__(self) -> None:
        for name in ("a", "b", "g", "k", "c"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"g-and-k parameter {name} must be finite")
        if self.b <= 0:
            raise ValueError(f"g-and-k scale b must be positive, got {self.b}")
        if self.k <= -0.5:
            raise ValueError(f"g-and-k kurtosis k must exceed -0.5, got {self.k}")


def gk_quantile(p, params: GkParams):
    """Quantile function Q(p) = a + b*(1 + c*tanh(g*z/2))*(1 + z^2)^k * z,
    where z is the standard normal quantile of p."""
    z = ndtri(p)
    skew = 1.0 + params.c * np.tanh(0.5 * params.g * z)
    return params.a + params.b * skew * (1.0 + z * z) ** params.k * z


# ---------------------------------------------------------------------------
# Parameter transforms (used by regression adjustment to respect support)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParamTransform:
    """Monotone map from a parameter's support onto the real line.

    ``identity`` for unbounded parameters, ``log`` for (low, inf),
    ``logit`` for (low, high).
    """

    kind: str = "identity"
    low: float = 0.0
    high: float = 1.0

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "identity":
            return x
        if self.kind == "log":
            return np.log(np.maximum(x - self.low, 1e-300))
        if self.kind == "logit":
            span = self.high - self.low
            u = np.clip((x - self.low) / span, 1e-12, 1.0 - 1e-12)
            return np.log(u / (1.0 - u))
        raise ValueError(f"unknown transform kind {self.kind!r}")

    def inverse(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "identity":
            return t
        if self.kind == "log":
            return self.low + np.exp(t)
        if self.kind == "logit":
            return self.low + (self.high - self.low) / (1.0 + np.exp(-t))
        raise ValueError(f"unknown transform kind {self.kind!r}")


IDENTITY = ParamTransform("identity")


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------


class Model:
    """One simulator with a proper prior over its parameters.

    Simulators are pure functions of (theta, n_obs, rng); concurrent use with
    independent generators is safe.
    """

    name: str = ""
    param_names: tuple[str, ...] = ()
    transforms: tuple[ParamTransform, ...] = ()

    @property
    def param_dim(self) -> int:
        return len(self.param_names)

    def sample_prior(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def simulate(self, theta: np.ndarray, n_obs: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    # Vectorised bulk paths; the generic fall-backs loop row by row.
    def sample_prior_batch(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.param_dim == 0:
            return np.empty((n, 0))
        return np.stack([self.sample_prior(rng) for _ in range(n)])

    def simulate_batch(self, thetas: np.ndarray, n_obs: int, rng: np.random.Generator) -> np.ndarray:
        return np.stack([self.simulate(thetas[i], n_obs, rng) for i in range(len(thetas))])


class NormalModel(Model):
    """Standard normal observations; no free parameters."""

    name = "normal"

    def sample_prior(self, rng: np.random.Generator) -> np.ndarray:
        return np.empty(0)

    def simulate(self, theta: np.ndarray, n_obs: int, rng: np.random.Generator) -> np.ndarray:
        _check_n_obs(n_obs)
        return rng.standard_normal(n_obs)

    def simulate_batch(self, thetas: np.ndarray, n_obs: int, rng: np.random.Generator) -> np.ndarray:
        _check_n_obs(n_obs)
        return rng.standard_normal((len(thetas), n_obs))


class GkModel(Model):
    """gk(a, b, g, k) data with the skewness g free and uniform a priori."""

    name = "gk"

    def __init__(
        self,
        a: float = 0.0,
        b: float = 1.0,
        k: float = 0.0,
        c: float = GK_OVERSHOOT,
        g_low: float = 0.0,
        g_high: float = 4.0,
    ) -> None:
        self.a, self.b, self.k, self.c = a, b, k, c
        self.g_low, self.g_high = g_low, g_high
        self.param_names = ("g",)
        self.transforms = (ParamTransform("logit", low=g_low, high=g_high),)
        # Validate the fixed parameters once.
        GkParams(a=a, b=b, g=g_low, k=k, c=c)

    def params_for(self, theta: np.ndarray) -> GkParams:
        return GkParams(a=self.a, b=self.b, g=float(theta[0]), k=self.k, c=self.c)

    def sample_prior(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.g_low, self.g_high, size=1)

    def simulate(self, theta: np.ndarray, n_obs: int, rng: np.random.Generator) -> np.ndarray:
        _check_n_obs(n_obs)
        return gk_quantile(rng.random(n_obs), self.params_for(theta))

    def sample_prior_batch(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.g_low, self.g_high, size=(n, 1))

    def simulate_batch(self, thetas: np.ndarray, n_obs: int, rng: np.random.Generator) -> np.ndarray:
        _check_n_obs(n_obs)
        z = ndtri(rng.random((len(thetas), n_obs)))
        skew = 1.0 + self.c * np.tanh(0.5 * thetas[:, :1] * z)
        return self.a + self.b * skew * (1.0 + z * z) ** self.k * z


class ConjugateNormalModel(Model):
    """N(mu, noise_sd^2) data with mu ~ N(prior_mean, prior_sd^2).

    The posterior for mu given an i.i.d. sample is normal with known mean and
    variance, so this model doubles as an exact-posterior oracle.
    """

    name = "conjugate-normal"

    def __init__(self, prior_mean: float = 0.0, prior_sd: float = 1.0, noise_sd: float = 1.0) -> None:
        if prior_sd <= 0 or noise_sd <= 0:
            raise ValueError("prior_sd and noise_sd must be positive")
        self.prior_mean = prior_mean
        self.prior_sd = prior_sd
        self.noise_sd = noise_sd
        self.param_names = ("mu",)
        self.transforms = (IDENTITY,)

    def sample_prior(self, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(self.prior_mean, self.prior_sd, size=1)

    def simulate(self, theta: np.ndarray, n_obs: int, rng: np.random.Generator) -> np.ndarray:
        _check_n_obs(n_obs)
        return rng.normal(float(theta[0]), self.noise_sd, size=n_obs)

    def sample_prior_batch(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(self.prior_mean, self.prior_sd, size=(n, 1))

    def simulate_batch(self, thetas: np.ndarray, n_obs: int, rng: np.random.Generator) -> np.ndarray:
        _check_n_obs(n_obs)
        return rng.normal(thetas[:, :1], self.noise_sd, size=(len(thetas), n_obs))

    def posterior(self, sample_mean: float, n_obs: int) -> tuple[float, float]:
        """Posterior (mean, sd) of mu given n_obs observations with the stated mean."""
        prior_prec = 1.0 / self.prior_sd**2
        data_prec = n_obs / self.noise_sd**2
        prec = prior_prec + data_prec
        mean = (prior_prec * self.prior_mean + data_prec * sample_mean) / prec
        return mean, prec**-0.5


class SyntheticNormalModel(Model):
    """Nine-parameter toy model: normal data whose mean and spread are cheap
    functions of theta ~ U(0,1)^9.  Exists to exercise multi-model,
    multi-parameter workflows, not to model anything."""

    def __init__(self, index: int) -> None:
        self.name = f"synthetic{index}"
        self.index = index
        self.param_names = tuple(f"t{j + 1}" for j in range(9))
        self.transforms = tuple(ParamTransform("logit", 0.0, 1.0) for _ in range(9))
        # Model-specific links keep the three variants distinguishable.
        self._shift = 1.5 * (index - 2)
        self._slope = 1.0 + 0.5 * index

    def _moments(self, thetas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mu = self._shift + self._slope * (thetas[..., 0] + thetas[..., 1] - 1.0)
        sd = 0.3 + 0.7 * thetas[..., 2]
        return mu, sd

    def sample_prior(self, rng: np.random.Generator) -> np.ndarray:
        return rng.random(9)

    def simulate(self, theta: np.ndarray, n_obs: int, rng: np.random.Generator) -> np.ndarray:
        _check_n_obs(n_obs)
        mu, sd = self._moments(np.asarray(theta))
        return rng.normal(mu, sd, size=n_obs)

    def sample_prior_batch(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.random((n, 9))

    def simulate_batch(self, thetas: np.ndarray, n_obs: int, rng: np.random.Generator) -> np.ndarray:
        _check_n_obs(n_obs)
        mu, sd = self._moments(thetas)
        return rng.normal(mu[:, None], sd[:, None], size=(len(thetas), n_obs))


def _check_n_obs(n_obs: int) -> None:
    if n_obs < 1:
        raise ValueError(f"n_obs must be >= 1, got {n_obs}")


# ---------------------------------------------------------------------------
# Summary statistics
# ---------------------------------------------------------------------------


def quartile_summary(data: Sequence[float]) -> np.ndarray:
    """(lower quartile, median, upper quartile) with linear interpolation of
    order statistics (type-7)."""
    arr = np.asarray(data, dtype=float)
    if arr.size == 0:
        raise ValueError("cannot summarise an empty dataset")
    return np.quantile(arr, [0.25, 0.5, 0.75], method="linear")


def quartile_summary_batch(data: np.ndarray) -> np.ndarray:
    return np.quantile(data, [0.25, 0.5, 0.75], method="linear", axis=1).T


def mean_summary(data: Sequence[float]) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.size == 0:
        raise ValueError("cannot summarise an empty dataset")
    return np.array([arr.mean()])


def mean_summary_batch(data: np.ndarray) -> np.ndarray:
    return data.mean(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# Model sets
# ---------------------------------------------------------------------------

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class ModelSet:
    """Models under comparison plus their prior weights and shared summary.

    Model ids are 1-based positions in ``models``.
    """

    name: str
    models: tuple[Model, ...]
    prior_weights: tuple[float, ...]
    summarize: Callable[[Sequence[float]], np.ndarray]
    summarize_batch: Callable[[np.ndarray], np.ndarray]
    summary_names: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.models) != len(self.prior_weights):
            raise ValueError("one prior weight per model required")
        if any(w <= 0 for w in self.prior_weights):
            raise ValueError("prior weights must be positive")
        if abs(sum(self.prior_weights) - 1.0) > WEIGHT_TOL:
            raise ValueError("prior weights must sum to 1")
        for m in self.models:
            if len(m.transforms) != m.param_dim:
                raise ValueError(f"model {m.name}: one transform per parameter required")

    @property
    def n_models(self) -> int:
        return len(self.models)

    @property
    def summary_dim(self) -> int:
        return len(self.summary_names)

    def model(self, model_id: int) -> Model:
        if not 1 <= model_id <= self.n_models:
            raise UnknownModelError(f"model id {model_id} not in 1..{self.n_models}")
        return self.models[model_id - 1]

    def model_id_of(self, name: str) -> int:
        for i, m in enumerate(self.models, start=1):
            if m.name == name:
                return i
        raise UnknownModelError(f"no model named {name!r} in set {self.name!r}")


def sample_prior(model: Model, rng: np.random.Generator) -> np.ndarray:
    """Draw one parameter vector from the model's prior."""
    theta = np.asarray(model.sample_prior(rng), dtype=float)
    if theta.shape != (model.param_dim,):
        raise ValueError(f"model {model.name}: prior draw has wrong shape {theta.shape}")
    return theta


def simulate(model: Model, theta: np.ndarray, n_obs: int, rng: np.random.Generator) -> np.ndarray:
    """Simulate one dataset of n_obs i.i.d. observations from the model."""
    return np.asarray(model.simulate(np.asarray(theta, dtype=float), n_obs, rng), dtype=float)


def exact_posterior_cdf(
    model: Model,
    theta: float,
    *,
    data: Sequence[float] | None = None,
    summary: Sequence[float] | None = None,
    n_obs: int | None = None,
) -> float:
    """Exact posterior CDF at ``theta`` for the conjugate-normal oracle.

    Supply either the raw dataset or its mean summary together with n_obs.
    """
    if not isinstance(model, ConjugateNormalModel):
        raise OracleError(f"model {model.name!r} has no closed-form posterior")
    if data is not None:
        arr = np.asarray(data, dtype=float)
        sample_mean, n = float(arr.mean()), arr.size
    elif summary is not None and n_obs is not None:
        sample_mean, n = float(np.asarray(summary, dtype=float)[0]), n_obs
    else:
        raise ValueError("provide data=..., or summary=... with n_obs=...")
    mean, sd = model.posterior(sample_mean, n)
    return float(ndtr((theta - mean) / sd))


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------


def _quartile_set(name: str, models: tuple[Model, ...], weights: tuple[float, ...]) -> ModelSet:
    return ModelSet(
        name=name,
        models=models,
        prior_weights=weights,
        summarize=quartile_summary,
        summarize_batch=quartile_summary_batch,
        summary_names=("q1", "median", "q3"),
    )


def _build_normal() -> ModelSet:
    return _quartile_set("normal", (NormalModel(),), (1.0,))


def _build_gk() -> ModelSet:
    return _quartile_set("gk", (GkModel(),), (1.0,))


def _build_gk_normal() -> ModelSet:
    return _quartile_set("gk-normal", (NormalModel(), GkModel()), (0.5, 0.5))


def _build_conjugate_normal() -> ModelSet:
    return ModelSet(
        name="conjugate-normal",
        models=(ConjugateNormalModel(),),
        prior_weights=(1.0,),
        summarize=mean_summary,
        summarize_batch=mean_summary_batch,
        summary_names=("mean",),
    )


def _build_synthetic3() -> ModelSet:
    models = tuple(SyntheticNormalModel(i) for i in (1, 2, 3))
    return _quartile_set("synthetic3", models, (1 / 3, 1 / 3, 1 / 3))


_REGISTRY: dict[str, Callable[[], ModelSet]] = {
    "normal": _build_normal,
    "gk": _build_gk,
    "gk-normal": _build_gk_normal,
    "conjugate-normal": _build_conjugate_normal,
    "synthetic3": _build_synthetic3,
}

MODEL_SET_NAMES = tuple(sorted(_REGISTRY))


def model_set(name: str) -> ModelSet:
    """Look up a built-in model set by registry name."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise UnknownModelError(
            f"unknown model set {name!r}; built-ins: {', '.join(MODEL_SET_NAMES)}"
        ) from None
    return factory()
