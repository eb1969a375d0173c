"""Per-instance adaptive inference.

Layers run strictly in order; the exit policy is consulted after each
head and computation stops at the first exit it requests. When no exit
fires, the deepest head's prediction is used. Inference is per instance
(batch of one) -- the latency-sensitive serving case the exit criteria
are designed for.

Speed-up is reported as the layer-budget ratio n*|D| / sum(exit layers):
hardware-independent, and exact when every layer costs the same (true
here; heads are single affine maps of negligible, uniform cost). A
wall-clock probe is provided alongside, never instead.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .model import LabeledDataset, ModelParams, embed, head_output, layer_step
from .policies import PatienceState, PolicyConfig, policy_step


@dataclass
class InferenceTrace:
    """Record of one adaptive run.

    ``per_layer_outputs`` holds only the heads actually computed, so its
    length equals ``exit_layer`` (1-based). ``exited_early`` is True iff
    the policy fired, including a fire exactly at the final layer (which
    is output-identical to the fallback).
    """

    exit_layer: int
    prediction: int | float
    per_layer_outputs: list
    exited_early: bool


@dataclass
class EvalReport:
    """Dataset-level accuracy (or MSE), speed-up, and exit profile."""

    task: str
    accuracy_or_mse: float
    speedup: float
    exit_histogram: list[int]
    num_instances: int

    def to_row(self, policy: PolicyConfig) -> str:
        """Delimiter-separated row: policy, metric, speedup, histogram."""
        hist = ":".join(str(c) for c in self.exit_histogram)
        return (
            f"{policy.describe()},{self.accuracy_or_mse:.6f},"
            f"{self.speedup:.6f},{hist}"
        )


def run_instance(params: ModelParams, policy: PolicyConfig, x) -> InferenceTrace:
    """Adaptive forward pass for one input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != params.config.input_dim:
        raise ShapeError(
            f"expected an input vector of length {params.config.input_dim}"
        )
    cfg = params.config
    state = PatienceState()
    h = embed(params, x)
    outputs = []
    for i in range(cfg.num_layers):
        h = layer_step(params, i, h)
        out = head_output(params, i, h)
        outputs.append(out)
        state, fire = policy_step(policy, state, i + 1, out, cfg.task)
        if fire:
            return InferenceTrace(
                exit_layer=i + 1,
                prediction=_predict(out, cfg.task),
                per_layer_outputs=outputs,
                exited_early=True,
            )
    return InferenceTrace(
        exit_layer=cfg.num_layers,
        prediction=_predict(outputs[-1], cfg.task),
        per_layer_outputs=outputs,
        exited_early=False,
    )


def _predict(out, task: str):
    if task == "classification":
        return int(np.argmax(out))
    return float(out)


def evaluate(
    params: ModelParams, policy: PolicyConfig, dataset: LabeledDataset
) -> EvalReport:
    """Run every instance and aggregate accuracy-or-MSE plus exit stats.

    All reductions are order-insensitive (integer exit counts, plain
    sums), so the report is independent of any evaluation schedule.
    """
    if len(dataset) == 0:
        raise ValueError("dataset must be non-empty")
    cfg = params.config
    n = cfg.num_layers
    histogram = [0] * n
    correct = 0
    sq_err = 0.0
    for x, target in zip(dataset.inputs, dataset.targets):
        trace = run_instance(params, policy, x)
        histogram[trace.exit_layer - 1] += 1
        if cfg.task == "classification":
            correct += int(trace.prediction == int(target))
        else:
            sq_err += (trace.prediction - float(target)) ** 2
    num = len(dataset)
    layers_executed = sum((i + 1) * c for i, c in enumerate(histogram))
    metric = correct / num if cfg.task == "classification" else sq_err / num
    return EvalReport(
        task=cfg.task,
        accuracy_or_mse=metric,
        speedup=n * num / layers_executed,
        exit_histogram=histogram,
        num_instances=num,
    )


def predictions(
    params: ModelParams, policy: PolicyConfig, dataset: LabeledDataset
) -> list:
    """Per-instance predictions in dataset order (equivalence checks)."""
    return [run_instance(params, policy, x).prediction for x in dataset.inputs]


def wallclock_probe(
    params: ModelParams,
    policy: PolicyConfig,
    dataset: LabeledDataset,
    repeats: int,
) -> float:
    """Median per-instance wall-clock latency over full-dataset repeats.

    A secondary, machine-dependent probe: only the direction of large
    differences is meaningful, never the magnitude.
    """
    if repeats < 3:
        raise ValueError("repeats must be >= 3")
    if len(dataset) == 0:
        raise ValueError("dataset must be non-empty")
    per_instance = []
    for _ in range(repeats):
        start = time.perf_counter()
        for x in dataset.inputs:
            run_instance(params, policy, x)
        per_instance.append((time.perf_counter() - start) / len(dataset))
    return float(np.median(per_instance))
