"""Reference table of simulated (model, parameter, summary) triples.

The table is built once from the joint prior, is immutable afterwards, and
backs every leave-one-out analysis.  Distances between summary vectors are
weighted Euclidean, with per-coordinate scales estimated from the table.

On disk the table is a small binary file: magic ``ABCT``, a u32 format
version, a u32 JSON-header length, the JSON header, then a row-major float64
little-endian payload (model id, parameters padded to the widest model, then
the summary coordinates).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .models import ModelSet

MAGIC = b"ABCT"
FORMAT_VERSION = 1
_SIM_RETRIES = 100


class TableFormatError(ValueError):
    """Persisted table is malformed, truncated, or from another version."""


class ZeroVarianceError(ValueError):
    """A summary coordinate is constant across the table."""


class SimulationError(RuntimeError):
    """A simulator kept producing non-finite output."""


@dataclass(frozen=True)
class DistanceScale:
    """Per-coordinate scales v_j > 0 dividing summary differences."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("scale must be a non-empty 1-d vector")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("scale entries must be finite and positive")


@dataclass(frozen=True)
class Triple:
    """One (model id, parameter vector, summary vector) record."""

    model_id: int
    theta: np.ndarray
    summary: np.ndarray


@dataclass
class ReferenceTable:
    """Columnar store of N triples.

    ``thetas`` is NaN-padded to the widest model; ``param_dims[m-1]`` gives the
    true parameter count of model m.
    """

    model_ids: np.ndarray  # (N,) int64, values in 1..M
    thetas: np.ndarray  # (N, max_param_dim) float64
    summaries: np.ndarray  # (N, summary_dim) float64
    param_dims: tuple[int, ...]
    allocation: str = "proportional"
    scale: DistanceScale | None = None
    model_set_name: str | None = None
    n_obs: int | None = None
    seed: int | None = None

    def __post_init__(self) -> None:
        self.model_ids = np.asarray(self.model_ids, dtype=np.int64)
        self.thetas = np.atleast_2d(np.asarray(self.thetas, dtype=float))
        self.summaries = np.atleast_2d(np.asarray(self.summaries, dtype=float))
        n = self.model_ids.size
        if self.thetas.shape[0] != n or self.summaries.shape[0] != n:
            raise ValueError("model_ids, thetas and summaries must have equal length")
        if not np.all(np.isfinite(self.summaries)):
            raise ValueError("summaries must be finite")
        m = len(self.param_dims)
        if np.any(self.model_ids < 1) or np.any(self.model_ids > m):
            raise ValueError(f"model ids must lie in 1..{m}")

    @property
    def n(self) -> int:
        return self.model_ids.size

    @property
    def n_models(self) -> int:
        return len(self.param_dims)

    @property
    def summary_dim(self) -> int:
        return self.summaries.shape[1]

    @property
    def per_model_counts(self) -> np.ndarray:
        return np.bincount(self.model_ids, minlength=self.n_models + 1)[1:]

    @property
    def model_proportions(self) -> np.ndarray:
        return self.per_model_counts / self.n

    def theta_of(self, index: int) -> np.ndarray:
        dim = self.param_dims[self.model_ids[index] - 1]
        return self.thetas[index, :dim]

    def triple(self, index: int) -> Triple:
        return Triple(
            model_id=int(self.model_ids[index]),
            theta=self.theta_of(index).copy(),
            summary=self.summaries[index].copy(),
        )

    def checksum(self) -> str:
        """SHA-256 of the row payload (what save_table writes after the header)."""
        return hashlib.sha256(_payload(self).tobytes()).hexdigest()


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------


def _allocate(model_set: ModelSet, n: int, allocation: str, rng: np.random.Generator) -> np.ndarray:
    if allocation == "equal":
        m = model_set.n_models
        base, extra = divmod(n, m)
        counts = [base + (1 if i < extra else 0) for i in range(m)]
        return np.repeat(np.arange(1, m + 1), counts)
    if allocation == "proportional":
        return rng.choice(
            np.arange(1, model_set.n_models + 1), size=n, p=np.asarray(model_set.prior_weights)
        )
    raise ValueError(f"allocation must be 'equal' or 'proportional', got {allocation!r}")


def build_table(
    model_set: ModelSet,
    n: int,
    allocation: str,
    rng: np.random.Generator,
    n_obs: int,
) -> ReferenceTable:
    """Simulate n triples from the joint prior over (model, theta, data).

    ``equal`` allocation fixes the per-model counts at n/M; ``proportional``
    draws each row's model from the prior weights.
    """
    if n < 1:
        raise ValueError(f"table size must be >= 1, got {n}")
    ids = _allocate(model_set, n, allocation, rng)
    max_dim = max((m.param_dim for m in model_set.models), default=0)
    thetas = np.full((n, max(max_dim, 1)), np.nan)
    summaries = np.empty((n, model_set.summary_dim))

    for model_id in range(1, model_set.n_models + 1):
        rows = np.flatnonzero(ids == model_id)
        if rows.size == 0:
            continue
        model = model_set.model(model_id)
        theta_block = model.sample_prior_batch(rows.size, rng)
        data_block = model.simulate_batch(theta_block, n_obs, rng)
        bad = ~np.all(np.isfinite(data_block), axis=1)
        for local in np.flatnonzero(bad):
            theta_block[local], data_block[local] = _retry_row(model, n_obs, rng)
        if model.param_dim:
            thetas[rows, : model.param_dim] = theta_block
        summaries[rows] = model_set.summarize_batch(data_block)

    return ReferenceTable(
        model_ids=ids,
        thetas=thetas,
        summaries=summaries,
        param_dims=tuple(m.param_dim for m in model_set.models),
        allocation=allocation,
        model_set_name=model_set.name,
        n_obs=n_obs,
    )


def _retry_row(model, n_obs: int, rng: np.random.Generator):
    for _ in range(_SIM_RETRIES):
        theta = model.sample_prior(rng)
        data = model.simulate(theta, n_obs, rng)
        if np.all(np.isfinite(data)):
            return theta, data
    raise SimulationError(
        f"model {model.name!r} produced non-finite data {_SIM_RETRIES} times; last theta={theta}"
    )


# ---------------------------------------------------------------------------
# Distances
# ---------------------------------------------------------------------------


def estimate_scale(table: ReferenceTable, names: tuple[str, ...] | None = None) -> DistanceScale:
    """Per-coordinate sample standard deviations (divisor n-1) of the summaries."""
    if table.n < 2:
        raise ValueError("need at least 2 rows to estimate a distance scale")
    sd = table.summaries.std(axis=0, ddof=1)
    for j in np.flatnonzero(sd == 0):
        label = names[j] if names is not None else f"coordinate {j}"
        raise ZeroVarianceError(f"summary {label} is constant across the table")
    return DistanceScale(sd)


def distance(a: np.ndarray, b: np.ndarray, scale: DistanceScale) -> float:
    """Weighted Euclidean distance [sum_j ((a_j-b_j)/v_j)^2]^(1/2)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.shape != scale.values.shape:
        raise ValueError(f"summary/scale length mismatch: {a.shape}, {b.shape}, {scale.values.shape}")
    return float(np.sqrt(np.sum(((a - b) / scale.values) ** 2)))


def distances_to(table: ReferenceTable, target: np.ndarray) -> np.ndarray:
    """Distances from every table row to the target summary."""
    if table.scale is None:
        raise ValueError("table has no distance scale; run estimate_scale first")
    target = np.asarray(target, dtype=float)
    if target.shape != (table.summary_dim,):
        raise ValueError(f"target has dimension {target.shape}, table has {table.summary_dim}")
    diff = (table.summaries - target) / table.scale.values
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def nearest(table: ReferenceTable, target: np.ndarray, c: int) -> np.ndarray:
    """Indices of the c rows closest to the target, ties broken by row index."""
    if not 1 <= c <= table.n:
        raise ValueError(f"c must lie in 1..{table.n}, got {c}")
    d = distances_to(table, target)
    if c == table.n:
        candidates = np.arange(table.n)
    else:
        kth = np.partition(d, c - 1)[c - 1]
        candidates = np.flatnonzero(d <= kth)
    order = np.lexsort((candidates, d[candidates]))
    return candidates[order[:c]]


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def _payload(table: ReferenceTable) -> np.ndarray:
    rows = np.empty((table.n, 1 + table.thetas.shape[1] + table.summary_dim))
    rows[:, 0] = table.model_ids
    rows[:, 1 : 1 + table.thetas.shape[1]] = table.thetas
    rows[:, 1 + table.thetas.shape[1] :] = table.summaries
    return np.ascontiguousarray(rows, dtype="<f8")


def save_table(table: ReferenceTable, path: str | Path) -> str:
    """Write the table; returns the payload checksum."""
    payload = _payload(table)
    checksum = hashlib.sha256(payload.tobytes()).hexdigest()
    header = {
        "n": table.n,
        "summary_dim": table.summary_dim,
        "theta_width": table.thetas.shape[1],
        "param_dims": list(table.param_dims),
        "allocation": table.allocation,
        "scale": None if table.scale is None else table.scale.values.tolist(),
        "model_set": table.model_set_name,
        "n_obs": table.n_obs,
        "seed": table.seed,
        "payload_sha256": checksum,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint32(FORMAT_VERSION).tobytes())
        fh.write(np.uint32(len(blob)).tobytes())
        fh.write(blob)
        fh.write(payload.tobytes())
    return checksum


def load_table(path: str | Path) -> ReferenceTable:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise TableFormatError(f"{path}: not a reference-table file (bad magic)")
    version = int(np.frombuffer(raw[4:8], dtype="<u4")[0]) if len(raw) >= 8 else -1
    if version != FORMAT_VERSION:
        raise TableFormatError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    header_len = int(np.frombuffer(raw[8:12], dtype="<u4")[0])
    header_end = 12 + header_len
    if len(raw) < header_end:
        raise TableFormatError(f"{path}: truncated header")
    try:
        header = json.loads(raw[12:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TableFormatError(f"{path}: unreadable header ({exc})") from exc

    n = header["n"]
    width = 1 + header["theta_width"] + header["summary_dim"]
    expected = header_end + 8 * n * width
    if len(raw) != expected:
        raise TableFormatError(f"{path}: payload has {len(raw) - header_end} bytes, expected {8 * n * width}")
    payload = np.frombuffer(raw[header_end:], dtype="<f8").reshape(n, width)
    if hashlib.sha256(payload.tobytes()).hexdigest() != header["payload_sha256"]:
        raise TableFormatError(f"{path}: payload checksum mismatch")

    scale = header["scale"]
    return ReferenceTable(
        model_ids=payload[:, 0].astype(np.int64),
        thetas=payload[:, 1 : 1 + header["theta_width"]].copy(),
        summaries=payload[:, 1 + header["theta_width"] :].copy(),
        param_dims=tuple(header["param_dims"]),
        allocation=header["allocation"],
        scale=None if scale is None else DistanceScale(np.asarray(scale)),
        model_set_name=header["model_set"],
        n_obs=header["n_obs"],
        seed=header["seed"],
    )


def export_table_csv(table: ReferenceTable, path: str | Path) -> None:
    """Interoperability export: header ``model,theta_1..theta_p,s_1..s_d``."""
    width = table.thetas.shape[1]
    names = ["model"] + [f"theta_{j + 1}" for j in range(width)] + [
        f"s_{j + 1}" for j in range(table.summary_dim)
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(names) + "\n")
        for i in range(table.n):
            dim = table.param_dims[table.model_ids[i] - 1]
            cells = [str(int(table.model_ids[i]))]
            cells += [_fmt(x) for x in table.thetas[i, :dim]]
            cells += [""] * (width - dim)
            cells += [_fmt(x) for x in table.summaries[i]]
            fh.write(",".join(cells) + "\n")


def _fmt(x: float) -> str:
    return f"{x:.12g}"
