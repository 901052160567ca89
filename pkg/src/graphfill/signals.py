"""Time-varying node signals, sampling masks, masked observations, synthetic generators."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ._format import format_value
from .graphs import Graph, eigendecompose, laplacian

__all__ = [
    "SignalSeries",
    "SamplingMask",
    "Observation",
    "MaskSpec",
    "generate_mask",
    "apply_mask",
    "observation_from_column",
    "synth_bandlimited",
    "read_signal_csv",
    "write_signal_csv",
    "read_mask_file",
    "write_mask_file",
]


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SignalSeries:
    """Dense node-by-time signal matrix (row = node, column = time step)."""

    values: np.ndarray
    units: str = ""

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2:
            raise ValueError(f"signal matrix must be 2-D, got shape {vals.shape}")
        if vals.shape[0] < 1 or vals.shape[1] < 1:
            raise ValueError(f"signal matrix must be non-empty, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("signal matrix contains non-finite entries")
        object.__setattr__(self, "values", _readonly(vals))

    @property
    def num_nodes(self) -> int:
        return self.values.shape[0]

    @property
    def num_steps(self) -> int:
        return self.values.shape[1]

    def column(self, t: int) -> np.ndarray:
        t = int(t)
        if not 0 <= t < self.num_steps:
            raise ValueError(f"time index {t} outside [0, {self.num_steps})")
        return np.array(self.values[:, t])


@dataclass(frozen=True)
class SamplingMask:
    """Which nodes are observed; fixed across every time step of a run."""

    observed: np.ndarray

    def __post_init__(self):
        obs = np.asarray(self.observed, dtype=bool)
        if obs.ndim != 1 or obs.shape[0] < 1:
            raise ValueError(f"mask must be a non-empty 1-D boolean vector, got shape {obs.shape}")
        object.__setattr__(self, "observed", _readonly(obs))

    @property
    def num_nodes(self) -> int:
        return self.observed.shape[0]

    @property
    def observed_ids(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.observed))

    @property
    def missing_ids(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(~self.observed))

    @property
    def num_observed(self) -> int:
        return int(np.count_nonzero(self.observed))

    @property
    def num_missing(self) -> int:
        return self.num_nodes - self.num_observed


@dataclass(frozen=True)
class Observation:
    """One time step of masked node values; absent entries are ``None``, never a sentinel number."""

    time_index: int
    values: tuple

    def __post_init__(self):
        if int(self.time_index) < 0:
            raise ValueError(f"time index must be nonnegative, got {self.time_index}")
        object.__setattr__(self, "time_index", int(self.time_index))
        cleaned = []
        for i, v in enumerate(self.values):
            if v is None:
                cleaned.append(None)
                continue
            v = float(v)
            if not math.isfinite(v):
                raise ValueError(f"observation entry {i} is non-finite")
            cleaned.append(v)
        if not cleaned:
            raise ValueError("observation must cover at least one node")
        object.__setattr__(self, "values", tuple(cleaned))

    @property
    def num_nodes(self) -> int:
        return len(self.values)

    @property
    def present(self) -> np.ndarray:
        """Boolean vector, True where a value is present."""
        return np.array([v is not None for v in self.values])

    def value(self, i: int) -> float:
        v = self.values[i]
        if v is None:
            raise ValueError(f"node {i} is absent at time {self.time_index}")
        return v

    def present_values(self) -> np.ndarray:
        return np.array([v for v in self.values if v is not None])

    def dense(self) -> tuple[np.ndarray, np.ndarray]:
        """(data, present) arrays with absent entries zeroed in ``data``.

        Intended only for masked arithmetic where ``present`` multiplies the
        absent entries away; the zeros are not observation values.
        """
        present = self.present
        data = np.array([0.0 if v is None else v for v in self.values])
        return data, present


def generate_mask(n: int, missing_fraction: float, seed: int) -> SamplingMask:
    """Draw a mask with exactly ``round(missing_fraction * n)`` missing nodes.

    The missing set is sampled uniformly without replacement from a generator
    seeded with ``seed``, so identical arguments always give the same mask.
    Rounding is half-away-from-zero.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be at least 1")
    missing_fraction = float(missing_fraction)
    if not 0.0 <= missing_fraction < 1.0:
        raise ValueError(f"missing_fraction must be in [0, 1), got {missing_fraction}")
    count = int(math.floor(n * missing_fraction + 0.5))
    rng = np.random.default_rng(int(seed))
    missing = rng.choice(n, size=count, replace=False)
    observed = np.ones(n, dtype=bool)
    observed[missing] = False
    return SamplingMask(observed)


@dataclass(frozen=True)
class MaskSpec:
    """Mask policy for repeated runs: resample per run (default) or reuse one mask.

    Run ``r`` uses seed ``seed + r`` when resampling, plain ``seed`` otherwise.
    """

    fraction: float
    seed: int
    resample: bool = True

    def __post_init__(self):
        if not 0.0 <= float(self.fraction) < 1.0:
            raise ValueError(f"fraction must be in [0, 1), got {self.fraction}")

    def mask_for_run(self, run_index: int, n: int) -> SamplingMask:
        seed = int(self.seed) + int(run_index) if self.resample else int(self.seed)
        return generate_mask(n, self.fraction, seed)

    def describe(self) -> dict:
        return {
            "mode": "per-run" if self.resample else "fixed",
            "fraction": float(self.fraction),
            "seed": int(self.seed),
        }


def observation_from_column(column: Sequence[float], mask: SamplingMask, time_index: int) -> Observation:
    """Build an observation from one signal column, hiding the masked nodes."""
    column = np.asarray(column, dtype=float)
    if column.shape != (mask.num_nodes,):
        raise ValueError(f"column shape {column.shape} does not match mask size {mask.num_nodes}")
    values = tuple(float(column[i]) if mask.observed[i] else None for i in range(mask.num_nodes))
    return Observation(time_index=time_index, values=values)


def apply_mask(series: SignalSeries, mask: SamplingMask, t: int) -> Observation:
    """Observation for time ``t``: series values at observed nodes, absent elsewhere."""
    if series.num_nodes != mask.num_nodes:
        raise ValueError(f"series has {series.num_nodes} nodes but mask has {mask.num_nodes}")
    return observation_from_column(series.column(t), mask, t)


def synth_bandlimited(
    g: Graph,
    bandwidth: int,
    temporal_rho: float,
    innovation_std: float,
    t_len: int,
    seed: int,
    units: str = "",
) -> SignalSeries:
    """Synthesize a spatially smooth, temporally correlated signal.

    Every column lies in the span of the first ``bandwidth`` Laplacian
    eigenvectors. The spectral coefficients start from a seeded standard
    normal draw and follow an order-1 autoregression:
    ``c[t] = temporal_rho * c[t-1] + innovation`` with the given innovation
    standard deviation. Deterministic for a fixed seed.
    """
    n = g.num_nodes
    bandwidth = int(bandwidth)
    if not 1 <= bandwidth <= n:
        raise ValueError(f"bandwidth {bandwidth} outside [1, {n}]")
    temporal_rho = float(temporal_rho)
    if not 0.0 <= temporal_rho <= 1.0:
        raise ValueError(f"temporal_rho must be in [0, 1], got {temporal_rho}")
    innovation_std = float(innovation_std)
    if innovation_std < 0:
        raise ValueError("innovation_std must be nonnegative")
    t_len = int(t_len)
    if t_len < 1:
        raise ValueError("t_len must be at least 1")

    basis = eigendecompose(laplacian(g))
    low_band = basis.leading(bandwidth)
    rng = np.random.default_rng(int(seed))
    coeffs = np.empty((bandwidth, t_len))
    current = rng.standard_normal(bandwidth)
    coeffs[:, 0] = current
    for t in range(1, t_len):
        current = temporal_rho * current + innovation_std * rng.standard_normal(bandwidth)
        coeffs[:, t] = current
    return SignalSeries(values=low_band @ coeffs, units=units)


def write_signal_csv(series: SignalSeries, path: str | Path, header: bool = True) -> None:
    """Write the node-by-time matrix as CSV, one row per node, exact decimal text."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow([f"t{t}" for t in range(series.num_steps)])
        for row in series.values:
            writer.writerow([format_value(v) for v in row])


def read_signal_csv(path: str | Path, units: str = "") -> SignalSeries:
    """Read a signal CSV (optional ``t0,t1,...`` header; row order = node id).

    Any cell that fails to parse as a finite number is a load error reported
    with its row and column; missing data never enters through files.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        raw_rows = [row for row in csv.reader(fh) if row and any(cell.strip() for cell in row)]
    if not raw_rows:
        raise ValueError(f"{path}: empty signal file")

    def parse_row(row: list[str], lineno: int) -> list[float]:
        out = []
        for col, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise ValueError(f"{path}: row {lineno}, column {col + 1}: not a number: {cell!r}") from None
            if not math.isfinite(v):
                raise ValueError(f"{path}: row {lineno}, column {col + 1}: non-finite cell {cell!r}")
            out.append(v)
        return out

    first = raw_rows[0]
    has_header = False
    try:
        [float(cell) for cell in first]
    except ValueError:
        has_header = True
    data_rows = raw_rows[1:] if has_header else raw_rows
    if not data_rows:
        raise ValueError(f"{path}: header but no data rows")
    width = len(data_rows[0])
    matrix = []
    for idx, row in enumerate(data_rows):
        lineno = idx + (2 if has_header else 1)
        if len(row) != width:
            raise ValueError(f"{path}: row {lineno} has {len(row)} columns, expected {width}")
        matrix.append(parse_row(row, lineno))
    return SignalSeries(values=np.array(matrix), units=units)


def write_mask_file(mask: SamplingMask, path: str | Path) -> None:
    """One line of space-separated 0/1 flags, 1 marking an observed node."""
    Path(path).write_text(" ".join("1" if o else "0" for o in mask.observed) + "\n")


def read_mask_file(path: str | Path) -> SamplingMask:
    path = Path(path)
    tokens = path.read_text().split()
    if not tokens:
        raise ValueError(f"{path}: empty mask file")
    flags = []
    for i, tok in enumerate(tokens):
        if tok not in ("0", "1"):
            raise ValueError(f"{path}: flag {i} must be 0 or 1, got {tok!r}")
        flags.append(tok == "1")
    return SamplingMask(np.array(flags, dtype=bool))
