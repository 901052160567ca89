"""Online reconstruction loop: drive any predictor over a masked signal stream.

One run walks the time axis in order. At each step the missing nodes are
predicted from the frozen previous state plus the current observation, the
observed nodes are clamped to their observed values, and the assembled
estimate column is appended to the running state. Ground truth is only ever
read through a guard that forbids access to future columns.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .backends import (
    Backend,
    BackendConfig,
    BackendError,
    BatchFailure,
    CompletionRequest,
    batch_complete,
)
from .filters import FilterConfig, FilterState, BandlimitedProjector, glms_step, gsign_step
from .graphs import Graph
from .messenger import (
    NEIGHBOR_MODES,
    PromptTemplate,
    build_task,
    fallback_value,
    parse_response,
    render_prompt,
)
from .signals import (
    MaskSpec,
    Observation,
    SamplingMask,
    SignalSeries,
    observation_from_column,
)

__all__ = [
    "CausalityError",
    "CausalSignalView",
    "EstimateState",
    "Predictor",
    "ZeroPredictor",
    "FilterPredictor",
    "MessengerPredictor",
    "MseReport",
    "evaluate_mse",
    "RunResult",
    "run_online",
    "compare",
    "ComparisonTable",
    "mse_over_time",
    "graph_sha256",
    "signal_sha256",
]


class CausalityError(RuntimeError):
    """A predictor or the loop tried to read ground truth beyond the current step."""


class CausalSignalView:
    """Access-instrumented window onto the ground-truth series.

    ``column(t)`` is only legal for ``t`` up to the current limit set by
    ``advance``; every access is logged as ``(limit_at_access, requested_t)``
    so a finished run can prove it never peeked ahead.
    """

    def __init__(self, series: SignalSeries):
        self._series = series
        self._limit = -1
        self.access_log: list[tuple[int, int]] = []

    def advance(self, t: int) -> None:
        self._limit = int(t)

    def column(self, t: int) -> np.ndarray:
        t = int(t)
        self.access_log.append((self._limit, t))
        if t > self._limit:
            raise CausalityError(f"read of time column {t} while the clock is at {self._limit}")
        return self._series.column(t)


class EstimateState:
    """Reconstruction carried across steps: current column plus full history.

    ``estimates`` is the latest assembled column (None before the first step);
    ``history[v]`` lists every prior value for node v, which for observed
    nodes means their observed values.
    """

    def __init__(self, num_nodes: int):
        self.num_nodes = int(num_nodes)
        self.estimates: np.ndarray | None = None
        self.history: list[list[float]] = [[] for _ in range(self.num_nodes)]

    @property
    def steps_completed(self) -> int:
        return len(self.history[0])

    def append(self, column: np.ndarray) -> None:
        column = np.asarray(column, dtype=float)
        if column.shape != (self.num_nodes,):
            raise ValueError(f"column shape {column.shape} does not match {self.num_nodes} nodes")
        if not np.all(np.isfinite(column)):
            raise ValueError("assembled estimate contains non-finite entries")
        self.estimates = np.array(column)
        for i in range(self.num_nodes):
            self.history[i].append(float(column[i]))

    def matrix(self) -> np.ndarray:
        """All appended columns as an N x T array."""
        return np.array(self.history)


class Predictor:
    """Per-step proposal source for the missing nodes.

    ``reset`` is called once per run with that run's graph and mask;
    ``predict_missing`` must return a value for every missing node using only
    the current observation and the state built so far.
    """

    name = "predictor"

    def reset(self, g: Graph, mask: SamplingMask, run_index: int = 0) -> None:
        self._g = g
        self._mask = mask
        self._run_index = run_index
        self.stats: dict[str, int] = {}

    def predict_missing(self, t: int, obs: Observation, state: EstimateState) -> dict[int, float]:
        raise NotImplementedError

    def config_snapshot(self) -> dict:
        return {}


class ZeroPredictor(Predictor):
    """Predicts 0 for every missing node; the do-nothing baseline."""

    name = "zero"

    def predict_missing(self, t, obs, state):
        return {v: 0.0 for v in self._mask.missing_ids}


class FilterPredictor(Predictor):
    """Adapts the online graph filters to the harness loop.

    The filter keeps its own unclamped recursion state; the harness separately
    clamps observed nodes in the assembled estimate.
    """

    def __init__(self, kind: str, cfg: FilterConfig | None = None):
        if kind not in ("glms", "gsign"):
            raise ValueError(f"filter kind must be 'glms' or 'gsign', got {kind!r}")
        self.kind = kind
        self.name = kind
        self.cfg = cfg or FilterConfig()
        self._step_fn = glms_step if kind == "glms" else gsign_step

    def reset(self, g, mask, run_index=0):
        super().reset(g, mask, run_index)
        self._bandwidth = self.cfg.resolve_bandwidth(g.num_nodes)
        self._proj = BandlimitedProjector.from_graph(g, self._bandwidth)
        self._state: FilterState | None = None

    def predict_missing(self, t, obs, state):
        if self._state is None:
            if self.cfg.init == "first-observation-mean":
                present = obs.present_values()
                fill = float(np.mean(present)) if present.size else 0.0
            else:
                fill = 0.0
            self._state = FilterState(estimate=np.full(self._g.num_nodes, fill), step_count=0)
        self._state = self._step_fn(self._state, obs, self._mask, self._proj, self.cfg.mu)
        est = self._state.estimate
        return {v: float(est[v]) for v in self._mask.missing_ids}

    def config_snapshot(self):
        return {
            "kind": self.kind,
            "mu": float(self.cfg.mu),
            "bandwidth": getattr(self, "_bandwidth", self.cfg.bandwidth),
            "init": self.cfg.init,
        }


class MessengerPredictor(Predictor):
    """Per-node completion pipeline: build task, render prompt, complete, parse.

    Any failure along the way (backend error, unparseable or NaN reply,
    infeasible task surfacing as a NaN reply) is replaced through the total
    fallback cascade and counted. Prompts are kept per run so a finished run
    can be audited for leaks.
    """

    def __init__(
        self,
        backend: Backend,
        template: PromptTemplate | None = None,
        neighbor_mode: str = "observed-plus-stale",
        units: str = "",
        model: str = "gpt-3.5-turbo",
        temperature: float = 0.0,
        max_tokens: int = 16,
        batch: bool = False,
        batch_cfg: BackendConfig | None = None,
        name: str = "llm",
        keep_prompts: bool = True,
    ):
        if neighbor_mode not in NEIGHBOR_MODES:
            raise ValueError(f"neighbor_mode must be one of {NEIGHBOR_MODES}, got {neighbor_mode!r}")
        if batch and batch_cfg is None:
            raise ValueError("batch mode needs a BackendConfig with allow_batch=True")
        self.backend = backend
        self.template = template or PromptTemplate.default()
        self.neighbor_mode = neighbor_mode
        self.units = units
        self.model = model
        self.temperature = float(temperature)
        self.max_tokens = int(max_tokens)
        self.batch = bool(batch)
        self.batch_cfg = batch_cfg
        self.name = name
        self.keep_prompts = bool(keep_prompts)
        self.prompt_log: list[dict] = []

    def reset(self, g, mask, run_index=0):
        super().reset(g, mask, run_index)
        self.stats = {
            "fallback_uses": 0,
            "parse_failures": 0,
            "backend_failures": 0,
            "infeasible_tasks": 0,
        }
        self.prompt_log = []

    def _fallback(self, v, obs, state, reason_key):
        self.stats[reason_key] += 1
        self.stats["fallback_uses"] += 1
        return fallback_value(v, state.history, obs, self._g)

    def predict_missing(self, t, obs, state):
        prev = state.estimates
        proposals: dict[int, float] = {}
        pending: list[tuple[int, object]] = []
        requests = []
        for v in self._mask.missing_ids:
            task = build_task(v, obs, prev, self._g, mode=self.neighbor_mode, units=self.units)
            if not task.is_feasible:
                # Nothing to put in a prompt; skip the backend entirely so the
                # fallback tally stays an exact sum of its three causes.
                proposals[v] = self._fallback(v, obs, state, "infeasible_tasks")
                continue
            prompt = render_prompt(task, self.template)
            if self.keep_prompts:
                self.prompt_log.append({"t": t, "node": v, "prompt": prompt})
            requests.append(
                CompletionRequest(
                    prompt=prompt,
                    model=self.model,
                    temperature=self.temperature,
                    max_tokens=self.max_tokens,
                    request_id=f"run{self._run_index}-t{t}-node{v}",
                )
            )
            pending.append((v, task))

        if self.batch:
            tasks = [task for _, task in pending]
            outcomes = batch_complete(requests, self.batch_cfg, backend=self.backend, tasks=tasks)
            for (v, _), outcome in zip(pending, outcomes):
                if isinstance(outcome, BatchFailure):
                    proposals[v] = self._fallback(v, obs, state, "backend_failures")
                    continue
                parsed = parse_response(outcome)
                if parsed.ok:
                    proposals[v] = parsed.value
                else:
                    proposals[v] = self._fallback(v, obs, state, "parse_failures")
            return proposals

        for (v, task), req in zip(pending, requests):
            try:
                text = self.backend.complete(req, task=task)
            except BackendError:
                proposals[v] = self._fallback(v, obs, state, "backend_failures")
                continue
            parsed = parse_response(text)
            if parsed.ok:
                proposals[v] = parsed.value
            else:
                proposals[v] = self._fallback(v, obs, state, "parse_failures")
        return proposals

    def config_snapshot(self):
        snapshot = {
            "backend": self.backend.kind,
            "neighbor_mode": self.neighbor_mode,
            "units": self.units,
            "model": self.model,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "batch": self.batch,
            "template_sha256": self.template.sha256,
        }
        alpha = getattr(self.backend, "alpha", None)
        if alpha is not None:
            snapshot["mock_alpha"] = alpha
        return snapshot


class MseReport(NamedTuple):
    """Mean squared error over all nodes, and over the missing nodes only."""

    all_nodes: float
    missing_only: float | None


def evaluate_mse(
    estimates: Sequence[np.ndarray],
    truth: SignalSeries,
    masks: SamplingMask | Sequence[SamplingMask] | None = None,
) -> MseReport:
    """Average squared error over runs, nodes, and time.

    ``estimates`` holds one N x T matrix per run. The all-nodes figure is
    ``sum of squared errors / (R * N * T)``; the missing-only figure averages
    each run's error over that run's missing rows (None when no masks given).
    """
    mats = [np.asarray(e, dtype=float) for e in estimates]
    if not mats:
        raise ValueError("need at least one run of estimates")
    shape = (truth.num_nodes, truth.num_steps)
    for i, m in enumerate(mats):
        if m.shape != shape:
            raise ValueError(f"run {i} has shape {m.shape}, truth has {shape}")
    runs = len(mats)
    total = sum(float(np.sum((truth.values - m) ** 2)) for m in mats)
    all_nodes = total / (runs * shape[0] * shape[1])

    if masks is None:
        return MseReport(all_nodes=all_nodes, missing_only=None)
    if isinstance(masks, SamplingMask):
        mask_list = [masks] * runs
    else:
        mask_list = list(masks)
        if len(mask_list) != runs:
            raise ValueError(f"{len(mask_list)} masks for {runs} runs")
    per_run = []
    for m, mask in zip(mats, mask_list):
        if mask.num_nodes != shape[0]:
            raise ValueError(f"mask covers {mask.num_nodes} nodes, truth has {shape[0]}")
        rows = list(mask.missing_ids)
        if not rows:
            per_run.append(0.0)
            continue
        diff = truth.values[rows, :] - m[rows, :]
        per_run.append(float(np.sum(diff**2)) / (len(rows) * shape[1]))
    return MseReport(all_nodes=all_nodes, missing_only=float(np.mean(per_run)))


def graph_sha256(g: Graph) -> str:
    return hashlib.sha256(g.canonical_text().encode("utf-8")).hexdigest()


def signal_sha256(series: SignalSeries) -> str:
    digest = hashlib.sha256()
    digest.update(str(series.values.shape).encode())
    digest.update(np.ascontiguousarray(series.values).tobytes())
    return digest.hexdigest()


@dataclass
class RunResult:
    """Everything one experiment produced, repeatable from the config snapshot.

    The canonical JSON payload (``to_json``) deliberately excludes volatile
    data (wall clock, access logs, prompt logs) so identical seeded runs
    serialize byte-identically; the excluded pieces stay available on the
    in-memory object.
    """

    name: str
    config: dict
    context: dict
    estimates: list[np.ndarray]
    masks: list[SamplingMask]
    per_run_mse: list[dict]
    mse_all: float
    mse_missing: float
    fallback_uses: int
    per_run_stats: list[dict]
    wall_clock_s: float = 0.0
    access_logs: list = field(default_factory=list, repr=False)
    prompt_logs: list = field(default_factory=list, repr=False)
    truth: SignalSeries | None = field(default=None, repr=False)

    @property
    def runs(self) -> int:
        return len(self.estimates)

    def to_json_dict(self) -> dict:
        per_run = []
        for est, mask, mse, stats in zip(self.estimates, self.masks, self.per_run_mse, self.per_run_stats):
            per_run.append(
                {
                    "mask_observed": [1 if o else 0 for o in mask.observed],
                    "estimates": np.asarray(est).tolist(),
                    "mse": mse,
                    "stats": stats,
                }
            )
        return {
            "name": self.name,
            "config": self.config,
            "context": self.context,
            "runs": per_run,
            "mse_all": self.mse_all,
            "mse_missing": self.mse_missing,
            "fallback_uses": self.fallback_uses,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_json_dict(cls, payload: dict) -> "RunResult":
        estimates = [np.array(run["estimates"], dtype=float) for run in payload["runs"]]
        masks = [SamplingMask(np.array(run["mask_observed"], dtype=bool)) for run in payload["runs"]]
        return cls(
            name=payload["name"],
            config=payload["config"],
            context=payload["context"],
            estimates=estimates,
            masks=masks,
            per_run_mse=[run["mse"] for run in payload["runs"]],
            mse_all=float(payload["mse_all"]),
            mse_missing=float(payload["mse_missing"]),
            fallback_uses=int(payload["fallback_uses"]),
            per_run_stats=[run["stats"] for run in payload["runs"]],
        )

    @classmethod
    def load(cls, path: str | Path) -> "RunResult":
        return cls.from_json_dict(json.loads(Path(path).read_text()))

    def write_per_step_csv(self, path: str | Path, truth: SignalSeries | None = None) -> None:
        """Long-form CSV with one row per (run, t, node): truth and estimate."""
        truth = truth or self.truth
        if truth is None:
            raise ValueError("ground truth is needed to write the per-step CSV")
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["run", "t", "node", "truth", "estimate"])
            for r, est in enumerate(self.estimates):
                mat = np.asarray(est)
                for t in range(mat.shape[1]):
                    for node in range(mat.shape[0]):
                        writer.writerow(
                            [r, t, node, repr(float(truth.values[node, t])), repr(float(mat[node, t]))]
                        )


def _mask_policy_dict(mask: SamplingMask | MaskSpec) -> dict:
    if isinstance(mask, MaskSpec):
        return mask.describe()
    observed = hashlib.sha256(
        " ".join("1" if o else "0" for o in mask.observed).encode()
    ).hexdigest()
    return {"mode": "explicit", "observed_sha256": observed}


def run_online(
    predictor: Predictor,
    g: Graph,
    truth: SignalSeries,
    mask: SamplingMask | MaskSpec,
    runs: int = 1,
    name: str | None = None,
) -> RunResult:
    """Execute the online loop for ``runs`` repetitions and aggregate the error.

    Per run and per time step, in order: form the masked observation, let the
    predictor propose values for every missing node from the frozen previous
    state, clamp observed nodes to their observed values, assemble the column,
    extend the history. The predictor never sees ground truth (the loop itself
    reads it only through the causal guard), so no estimate can depend on
    future columns.
    """
    if truth.num_nodes != g.num_nodes:
        raise ValueError(f"truth covers {truth.num_nodes} nodes, graph has {g.num_nodes}")
    runs = int(runs)
    if runs < 1:
        raise ValueError("runs must be at least 1")
    if isinstance(mask, SamplingMask) and mask.num_nodes != g.num_nodes:
        raise ValueError(f"mask covers {mask.num_nodes} nodes, graph has {g.num_nodes}")

    started = time.perf_counter()
    estimates: list[np.ndarray] = []
    masks_used: list[SamplingMask] = []
    per_run_stats: list[dict] = []
    access_logs: list = []
    prompt_logs: list = []

    for r in range(runs):
        run_mask = mask.mask_for_run(r, g.num_nodes) if isinstance(mask, MaskSpec) else mask
        predictor.reset(g, run_mask, run_index=r)
        view = CausalSignalView(truth)
        state = EstimateState(g.num_nodes)
        observed = run_mask.observed
        for t in range(truth.num_steps):
            view.advance(t)
            obs = observation_from_column(view.column(t), run_mask, t)
            proposals = predictor.predict_missing(t, obs, state)
            data, _ = obs.dense()
            column = np.where(observed, data, 0.0)
            for v in run_mask.missing_ids:
                column[v] = proposals[v]
            state.append(column)
        estimates.append(state.matrix())
        masks_used.append(run_mask)
        stats = dict(getattr(predictor, "stats", {}) or {})
        per_run_stats.append(stats)
        access_logs.append(view.access_log)
        prompt_logs.append(list(getattr(predictor, "prompt_log", [])))

    per_run_mse = []
    for est, m in zip(estimates, masks_used):
        report = evaluate_mse([est], truth, [m])
        per_run_mse.append({"all_nodes": report.all_nodes, "missing_only": report.missing_only})
    aggregate = evaluate_mse(estimates, truth, masks_used)

    policy = _mask_policy_dict(mask)
    config = {
        "predictor": predictor.name,
        "runs": runs,
        "mask": policy,
        **predictor.config_snapshot(),
    }
    context = {
        "graph_sha256": graph_sha256(g),
        "signal_sha256": signal_sha256(truth),
        "num_nodes": g.num_nodes,
        "num_steps": truth.num_steps,
        "units": truth.units,
        "mask_policy": policy,
    }
    return RunResult(
        name=name or predictor.name,
        config=config,
        context=context,
        estimates=estimates,
        masks=masks_used,
        per_run_mse=per_run_mse,
        mse_all=aggregate.all_nodes,
        mse_missing=aggregate.missing_only if aggregate.missing_only is not None else 0.0,
        fallback_uses=sum(s.get("fallback_uses", 0) for s in per_run_stats),
        per_run_stats=per_run_stats,
        wall_clock_s=time.perf_counter() - started,
        access_logs=access_logs,
        prompt_logs=prompt_logs,
        truth=truth,
    )


@dataclass(frozen=True)
class ComparisonRow:
    name: str
    mse_all: float
    mse_missing: float
    fallback_uses: int
    config_note: str


class ComparisonTable:
    """Result ranking across algorithms run on the same experiment context."""

    def __init__(self, rows: Sequence[ComparisonRow]):
        self.rows = list(rows)

    def to_text(self) -> str:
        header = ("model", "mse", "mse_missing", "fallbacks")
        widths = [len(h) for h in header]
        printed = []
        for row in self.rows:
            cells = (row.name, f"{row.mse_all:.6g}", f"{row.mse_missing:.6g}", str(row.fallback_uses))
            widths = [max(w, len(c)) for w, c in zip(widths, cells)]
            printed.append(cells)
        lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
        lines.append("  ".join("-" * w for w in widths))
        for cells in printed:
            lines.append("  ".join(c.ljust(w) for c, w in zip(cells, widths)))
        lines.append("")
        for row in self.rows:
            lines.append(f"[{row.name}] {row.config_note}")
        return "\n".join(lines) + "\n"

    def save_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["model", "mse_all", "mse_missing", "fallback_uses", "config"])
            for row in self.rows:
                writer.writerow(
                    [row.name, repr(row.mse_all), repr(row.mse_missing), row.fallback_uses, row.config_note]
                )


def _config_note(config: dict) -> str:
    skip = {"mask"}
    parts = [f"{k}={config[k]}" for k in sorted(config) if k not in skip]
    mask = config.get("mask")
    if mask:
        parts.append("mask=" + ",".join(f"{k}:{mask[k]}" for k in sorted(mask)))
    return " ".join(parts)


def compare(results: Sequence[RunResult]) -> ComparisonTable:
    """Rank results by all-nodes error, refusing to mix experiment contexts."""
    results = list(results)
    if not results:
        raise ValueError("nothing to compare")
    reference = results[0].context
    for res in results[1:]:
        if res.context != reference:
            raise ValueError(
                f"comparison error: result {res.name!r} was produced under a different "
                "experiment context (graph, signal, or mask policy differs)"
            )
    rows = [
        ComparisonRow(
            name=res.name,
            mse_all=res.mse_all,
            mse_missing=res.mse_missing,
            fallback_uses=res.fallback_uses,
            config_note=_config_note(res.config),
        )
        for res in results
    ]
    rows.sort(key=lambda row: row.mse_all)
    return ComparisonTable(rows)


def mse_over_time(result: RunResult, truth: SignalSeries | None = None):
    """Per-step error averaged over runs: (t, all-nodes, missing-only) arrays."""
    truth = truth or result.truth
    if truth is None:
        raise ValueError("ground truth is needed to compute the error trajectory")
    steps = truth.num_steps
    all_curve = np.zeros(steps)
    missing_curve = np.zeros(steps)
    for est, mask in zip(result.estimates, result.masks):
        diff2 = (truth.values - np.asarray(est)) ** 2
        all_curve += diff2.mean(axis=0)
        rows = list(mask.missing_ids)
        if rows:
            missing_curve += diff2[rows, :].mean(axis=0)
    runs = result.runs
    return np.arange(steps), all_curve / runs, missing_curve / runs
