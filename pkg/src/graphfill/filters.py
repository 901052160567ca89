"""Online adaptive graph-filter baselines: least-mean-squares and sign-error updates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .graphs import Graph, SpectralBasis, eigendecompose, laplacian
from .signals import Observation, SamplingMask

__all__ = [
    "BandlimitedProjector",
    "FilterState",
    "FilterConfig",
    "default_bandwidth",
    "glms_step",
    "gsign_step",
    "run_filter",
]

INIT_MODES = ("zeros", "first-observation-mean")
FILTER_KINDS = ("glms", "gsign")


@dataclass(frozen=True)
class BandlimitedProjector:
    """Orthogonal projection onto the span of the first F Laplacian eigenvectors.

    Stored in factored form (the N x F basis block); ``apply`` computes
    ``U (U^T z)`` without materializing the N x N projection matrix.
    """

    basis_block: np.ndarray

    def __post_init__(self):
        block = np.asarray(self.basis_block, dtype=float)
        if block.ndim != 2 or block.shape[1] < 1 or block.shape[1] > block.shape[0]:
            raise ValueError(f"basis block has invalid shape {block.shape}")
        block = np.array(block)
        block.setflags(write=False)
        object.__setattr__(self, "basis_block", block)

    @classmethod
    def from_basis(cls, basis: SpectralBasis, bandwidth: int) -> "BandlimitedProjector":
        return cls(basis.leading(bandwidth))

    @classmethod
    def from_graph(cls, g: Graph, bandwidth: int) -> "BandlimitedProjector":
        return cls.from_basis(eigendecompose(laplacian(g)), bandwidth)

    @property
    def num_nodes(self) -> int:
        return self.basis_block.shape[0]

    @property
    def bandwidth(self) -> int:
        return self.basis_block.shape[1]

    def apply(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.num_nodes,):
            raise ValueError(f"vector shape {z.shape} does not match {self.num_nodes} nodes")
        return self.basis_block @ (self.basis_block.T @ z)

    def matrix(self) -> np.ndarray:
        """Dense N x N projection matrix (test and small-scale use)."""
        return self.basis_block @ self.basis_block.T


@dataclass(frozen=True)
class FilterState:
    """Running estimate vector plus the number of update steps applied."""

    estimate: np.ndarray
    step_count: int = 0

    def __post_init__(self):
        est = np.asarray(self.estimate, dtype=float)
        if est.ndim != 1:
            raise ValueError(f"estimate must be 1-D, got shape {est.shape}")
        if not np.all(np.isfinite(est)):
            raise ValueError("estimate contains non-finite entries")
        est = np.array(est)
        est.setflags(write=False)
        object.__setattr__(self, "estimate", est)


@dataclass(frozen=True)
class FilterConfig:
    """Step size, bandwidth, and initialization for an online filter run.

    ``bandwidth=None`` resolves to round(0.3 * N) at run time.
    """

    mu: float = 0.5
    bandwidth: int | None = None
    init: str = "zeros"

    def __post_init__(self):
        if not float(self.mu) > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.bandwidth is not None and int(self.bandwidth) < 1:
            raise ValueError(f"bandwidth must be at least 1, got {self.bandwidth}")
        if self.init not in INIT_MODES:
            raise ValueError(f"init must be one of {INIT_MODES}, got {self.init!r}")

    def resolve_bandwidth(self, num_nodes: int) -> int:
        if self.bandwidth is not None:
            bw = int(self.bandwidth)
            if bw > num_nodes:
                raise ValueError(f"bandwidth {bw} exceeds node count {num_nodes}")
            return bw
        return default_bandwidth(num_nodes)


def default_bandwidth(num_nodes: int) -> int:
    return max(1, int(round(0.3 * num_nodes)))


def _masked_error(state: FilterState, obs: Observation, mask: SamplingMask) -> np.ndarray:
    n = state.estimate.shape[0]
    if obs.num_nodes != n or mask.num_nodes != n:
        raise ValueError(
            f"dimension mismatch: estimate {n}, observation {obs.num_nodes}, mask {mask.num_nodes}"
        )
    present = obs.present
    if not np.array_equal(present, mask.observed):
        raise ValueError("observation presence does not match the sampling mask")
    data, _ = obs.dense()
    return (data - state.estimate) * present


def glms_step(
    state: FilterState,
    obs: Observation,
    mask: SamplingMask,
    proj: BandlimitedProjector,
    mu: float,
) -> FilterState:
    """One least-mean-squares update toward the observed values.

    Absent nodes contribute exactly zero error before the bandlimited
    projection; the new estimate is ``x + mu * P(masked error)``.
    """
    if proj.num_nodes != state.estimate.shape[0]:
        raise ValueError(f"projector covers {proj.num_nodes} nodes, estimate {state.estimate.shape[0]}")
    err = _masked_error(state, obs, mask)
    new_estimate = state.estimate + float(mu) * proj.apply(err)
    return FilterState(estimate=new_estimate, step_count=state.step_count + 1)


def gsign_step(
    state: FilterState,
    obs: Observation,
    mask: SamplingMask,
    proj: BandlimitedProjector,
    mu: float,
) -> FilterState:
    """Sign-error variant: the update uses only the sign of each observed error.

    sign(0) is 0, so a perfectly matched observation is a fixed point; the
    step norm is bounded by ``mu * sqrt(#observed)``.
    """
    if proj.num_nodes != state.estimate.shape[0]:
        raise ValueError(f"projector covers {proj.num_nodes} nodes, estimate {state.estimate.shape[0]}")
    err = _masked_error(state, obs, mask)
    new_estimate = state.estimate + float(mu) * proj.apply(np.sign(err))
    return FilterState(estimate=new_estimate, step_count=state.step_count + 1)


_STEP_FUNCTIONS = {"glms": glms_step, "gsign": gsign_step}


def run_filter(
    kind: str,
    cfg: FilterConfig,
    g: Graph,
    obs_stream: Iterable[Observation],
) -> list[np.ndarray]:
    """Consume an ordered observation stream and emit one estimate per step.

    The estimate reported for time t is the post-update state, so the filter
    sees o[t] when producing it but never any later observation.
    """
    if kind not in _STEP_FUNCTIONS:
        raise ValueError(f"kind must be one of {FILTER_KINDS}, got {kind!r}")
    step_fn = _STEP_FUNCTIONS[kind]
    proj = BandlimitedProjector.from_graph(g, cfg.resolve_bandwidth(g.num_nodes))
    state: FilterState | None = None
    estimates: list[np.ndarray] = []
    for obs in obs_stream:
        if state is None:
            if cfg.init == "first-observation-mean":
                present = obs.present_values()
                fill = float(np.mean(present)) if present.size else 0.0
            else:
                fill = 0.0
            state = FilterState(estimate=np.full(g.num_nodes, fill), step_count=0)
        mask = SamplingMask(obs.present)
        state = step_fn(state, obs, mask, proj, cfg.mu)
        estimates.append(np.array(state.estimate))
    return estimates
