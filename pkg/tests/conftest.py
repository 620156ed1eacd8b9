import numpy as np
import pytest

from abc_calibrate import seeds
from abc_calibrate.models import model_set
from abc_calibrate.table import build_table, estimate_scale

MASTER_SEED = 20240817


@pytest.fixture(scope="session")
def gk_benchmark_small():
    """Two-model benchmark table at a size small enough for module tests."""
    ms = model_set("gk-normal")
    t = build_table(ms, 50_000, "equal", seeds.rng(MASTER_SEED, seeds.TABLE), n_obs=100)
    t.scale = estimate_scale(t, ms.summary_names)
    return ms, t


@pytest.fixture(scope="session")
def gk_param_table():
    """Single-model g-and-k table at full benchmark scale (parameter-inference
    power needs the tight truncation this size buys)."""
    ms = model_set("gk")
    t = build_table(ms, 200_000, "equal", seeds.rng(MASTER_SEED, seeds.TABLE, 2), n_obs=100)
    t.scale = estimate_scale(t, ms.summary_names)
    return ms, t


@pytest.fixture(scope="session")
def conjugate_table():
    ms = model_set("conjugate-normal")
    t = build_table(ms, 20_000, "proportional", seeds.rng(MASTER_SEED, seeds.TABLE, 1), n_obs=20)
    t.scale = estimate_scale(t, ms.summary_names)
    return ms, t


@pytest.fixture()
def observed_gk():
    ms = model_set("gk-normal")
    y = ms.model(2).simulate(np.array([0.2]), 100, seeds.rng(MASTER_SEED, seeds.OBSERVED))
    return ms.summarize(y)
