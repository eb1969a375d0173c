"""Experiment orchestration: train, evaluate across policies, sweep.

All emitted tables are schema-stable: fixed column order, fixed headers,
period decimal separator, no grouping. Files produced by one experiment
are listed in a manifest with their SHA-256 content hashes, and reruns
with identical configuration are byte-identical.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .config import ExperimentConfig
from .datasets import gen_synthetic
from .errors import ConfigError
from .inference import EvalReport, evaluate
from .model import LabeledDataset, ModelParams, init_params, save_checkpoint, train
from .policies import PolicyConfig

SWEEP_HEADER = "t,accuracy_or_mse,speedup,exit_histogram"
CRITERIA_HEADER = "policy,hyperparameter,accuracy_or_mse,speedup"
EVAL_HEADER = "policy,accuracy_or_mse,speedup,exit_histogram"
HISTORY_HEADER = "epoch,loss"
MANIFEST_HEADER = "file,sha256"


@dataclass(frozen=True)
class CurvePoint:
    """One point of a speed-accuracy curve."""

    policy: str
    hyperparameter: str
    accuracy_or_mse: float
    speedup: float

    def to_row(self) -> str:
        return (
            f"{self.policy},{self.hyperparameter},"
            f"{self.accuracy_or_mse:.6f},{self.speedup:.6f}"
        )


def _policy_map(policies, params, dataset, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda p: evaluate(params, p, dataset), policies))
    return [evaluate(params, p, dataset) for p in policies]


def sweep_patience(
    params: ModelParams,
    dataset: LabeledDataset,
    t_range: tuple[int, int],
    workers: int = 1,
) -> list[tuple[int, EvalReport]]:
    """Evaluate the patience policy for every t in the range (inclusive).

    Rows come back in ascending t; sweep points are independent, so they
    may be evaluated in parallel without changing the result.
    """
    lo, hi = t_range
    n = params.config.num_layers
    if not 1 <= lo <= hi <= n - 1:
        raise ConfigError(f"patience range [{lo}, {hi}] must lie within [1, {n - 1}]")
    ts = list(range(lo, hi + 1))
    policies = [PolicyConfig(kind="patience", t=t) for t in ts]
    reports = _policy_map(policies, params, dataset, workers)
    return list(zip(ts, reports))


def compare_criteria(
    params: ModelParams,
    dataset: LabeledDataset,
    patience_range: tuple[int, int],
    entropy_grid: list[float],
    maxprob_grid: list[float],
    workers: int = 1,
) -> list[CurvePoint]:
    """Speed-accuracy curve table across exit criteria.

    One row per (policy, hyperparameter), plus a ``never`` baseline row;
    enough to plot the curves or match points at equal speed-up.
    """
    if not entropy_grid or not maxprob_grid:
        raise ConfigError("entropy and maxprob grids must be non-empty")
    policies = [PolicyConfig(kind="never")]
    policies += [
        PolicyConfig(kind="patience", t=t)
        for t in range(patience_range[0], patience_range[1] + 1)
    ]
    policies += [PolicyConfig(kind="entropy", threshold=th) for th in entropy_grid]
    policies += [PolicyConfig(kind="maxprob", threshold=th) for th in maxprob_grid]
    reports = _policy_map(policies, params, dataset, workers)
    return [
        CurvePoint(
            policy=pol.kind,
            hyperparameter=pol.hyperparameter(),
            accuracy_or_mse=rep.accuracy_or_mse,
            speedup=rep.speedup,
        )
        for pol, rep in zip(policies, reports)
    ]


def write_lines(path: Path, header: str, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(row + "\n")


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_dir: Path, files: list[Path]) -> Path:
    """Record every produced file with its content hash."""
    rows = [f"{f.relative_to(out_dir)},{file_sha256(f)}" for f in sorted(files)]
    manifest = out_dir / "manifest.csv"
    write_lines(manifest, MANIFEST_HEADER, rows)
    return manifest


def run_experiment(
    config: ExperimentConfig,
    out_dir,
    seed: int | None = None,
    workers: int = 1,
    render_figures: bool = True,
) -> list[Path]:
    """Train (per config), run all requested evaluations, write reports.

    Produces under ``out_dir``: a checkpoint, the loss history, one eval
    row per configured policy, the patience sweep and criteria tables
    when configured, figures alongside each table, and a manifest of
    everything with content hashes. Returns the list of written files.
    End-to-end deterministic given the config seeds (figures aside, every
    file is a pure function of the config).
    """
    if not config.policies:
        raise ConfigError("experiment needs at least one policy")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    suffix = "" if seed is None else f"_seed{seed}"

    train_set, eval_set = gen_synthetic(config.dataset)
    params = init_params(config.stack_config(seed=seed))
    params, history = train(params, train_set, config.optimizer)

    files: list[Path] = []
    checkpoint = out_dir / f"checkpoint{suffix}.npz"
    save_checkpoint(params, checkpoint)
    files.append(checkpoint)

    history_csv = out_dir / f"loss_history{suffix}.csv"
    write_lines(
        history_csv,
        HISTORY_HEADER,
        (f"{i + 1},{loss:.6f}" for i, loss in enumerate(history)),
    )
    files.append(history_csv)

    eval_csv = out_dir / f"eval{suffix}.csv"
    reports = _policy_map(config.policies, params, eval_set, workers)
    write_lines(
        eval_csv,
        EVAL_HEADER,
        (rep.to_row(pol) for pol, rep in zip(config.policies, reports)),
    )
    files.append(eval_csv)

    sweep_rows = None
    t_range = config.sweep_range()
    if t_range is not None:
        sweep_rows = sweep_patience(params, eval_set, t_range, workers)
        sweep_csv = out_dir / f"sweep{suffix}.csv"
        write_lines(
            sweep_csv,
            SWEEP_HEADER,
            (
                f"{t},{rep.accuracy_or_mse:.6f},{rep.speedup:.6f},"
                + ":".join(str(c) for c in rep.exit_histogram)
                for t, rep in sweep_rows
            ),
        )
        files.append(sweep_csv)

    curve = None
    if config.entropy_grid and config.maxprob_grid:
        pr = t_range if t_range is not None else (1, config.num_layers - 1)
        curve = compare_criteria(
            params, eval_set, pr, config.entropy_grid, config.maxprob_grid, workers
        )
        criteria_csv = out_dir / f"criteria{suffix}.csv"
        write_lines(criteria_csv, CRITERIA_HEADER, (pt.to_row() for pt in curve))
        files.append(criteria_csv)

    if render_figures:
        from . import plots

        fig = out_dir / f"loss_history{suffix}.png"
        plots.plot_loss_history(history, fig)
        files.append(fig)
        if sweep_rows is not None:
            fig = out_dir / f"sweep{suffix}.png"
            plots.plot_patience_sweep(sweep_rows, fig, task=config.dataset.task)
            files.append(fig)
        if curve is not None:
            fig = out_dir / f"criteria{suffix}.png"
            plots.plot_speed_accuracy(curve, fig, task=config.dataset.task)
            files.append(fig)

    files.append(write_manifest(out_dir, files))
    return files
