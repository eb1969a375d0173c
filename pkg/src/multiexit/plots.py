"""Figure rendering for report tables.

Every report path that emits a delimited table can render the matching
figure next to it: patience sweeps, speed-accuracy curves, simulation
sweeps, and lower-bound grids. Figures are written headlessly (Agg) with
metadata stripped so identical data produces identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_SAVE_KW = {"dpi": 120, "metadata": {"Software": None}}


def _metric_label(task: str) -> str:
    return "accuracy" if task == "classification" else "MSE"


def plot_loss_history(history, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(1, len(history) + 1), history, color="tab:blue")
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    ax.set_title("Depth-weighted training loss")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_patience_sweep(sweep_rows, path: Path, task: str = "classification") -> None:
    """Accuracy (or MSE) and speed-up against the patience setting."""
    ts = [t for t, _ in sweep_rows]
    metric = [rep.accuracy_or_mse for _, rep in sweep_rows]
    speedup = [rep.speedup for _, rep in sweep_rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ts, metric, "o-", color="tab:blue", label=_metric_label(task))
    ax.set_xlabel("patience t")
    ax.set_ylabel(_metric_label(task), color="tab:blue")
    ax.tick_params(axis="y", labelcolor="tab:blue")
    ax2 = ax.twinx()
    ax2.plot(ts, speedup, "s--", color="tab:red", label="speed-up")
    ax2.set_ylabel("speed-up (layer ratio)", color="tab:red")
    ax2.tick_params(axis="y", labelcolor="tab:red")
    ax.set_title("Patience sweep")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_speed_accuracy(curve, path: Path, task: str = "classification") -> None:
    """One speed-accuracy line per exit criterion (plus the baseline)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    kinds = []
    for pt in curve:
        if pt.policy not in kinds:
            kinds.append(pt.policy)
    for kind in kinds:
        pts = sorted(
            (p for p in curve if p.policy == kind), key=lambda p: p.speedup
        )
        xs = [p.speedup for p in pts]
        ys = [p.accuracy_or_mse for p in pts]
        if kind == "never":
            ax.scatter(xs, ys, marker="*", s=120, color="black", label="full depth")
        else:
            ax.plot(xs, ys, "o-", label=kind)
    ax.set_xlabel("speed-up (layer ratio)")
    ax.set_ylabel(_metric_label(task))
    ax.set_title("Speed-accuracy trade-off by exit criterion")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_simulation_sweep(outcomes, path: Path) -> None:
    """Simulated accuracy with and without early exit, against patience."""
    ts = [o.t for o in outcomes]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ts, [o.acc_patience for o in outcomes], "o-", label="with early exit")
    ax.plot(
        ts,
        [o.acc_conventional for o in outcomes],
        "s--",
        label="conventional (final classifier)",
    )
    ax.set_xlabel("patience t")
    ax.set_ylabel("simulated accuracy")
    ax.set_title("Monte Carlo accuracy vs. patience")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_simulation_grid(outcomes, path: Path) -> None:
    """Heatmap of simulated chain accuracy over (per-classifier acc, t)."""
    import numpy as np

    ts = sorted({o.t for o in outcomes})
    accs = sorted({round(1.0 - o.q, 6) for o in outcomes})
    grid = np.full((len(accs), len(ts)), np.nan)
    for o in outcomes:
        grid[accs.index(round(1.0 - o.q, 6)), ts.index(o.t)] = o.acc_patience
    fig, ax = plt.subplots(figsize=(6, 4.5))
    im = ax.imshow(
        grid,
        origin="lower",
        aspect="auto",
        extent=(min(ts) - 0.5, max(ts) + 0.5, min(accs), max(accs)),
        cmap="viridis",
    )
    fig.colorbar(im, ax=ax, label="simulated accuracy with early exit")
    ax.set_xlabel("patience t")
    ax.set_ylabel("per-classifier accuracy")
    ax.set_title("Monte Carlo accuracy surface")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_lower_bound(rows, path: Path) -> None:
    """Required per-classifier accuracy versus the target, per patience.

    ``rows`` are (target_accuracy, t, lower_bound) triples. The diagonal
    marks the no-early-exit requirement; curves below it show the
    accuracy reduction the exit mechanism buys.
    """
    ts = sorted({t for _, t, _ in rows})
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for t in ts:
        pts = sorted((tgt, lb) for tgt, tt, lb in rows if tt == t)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], label=f"t={t}")
    targets = sorted({tgt for tgt, _, _ in rows})
    ax.plot(targets, targets, "k--", linewidth=1, label="no early exit")
    ax.set_xlabel("target accuracy")
    ax.set_ylabel("required per-classifier accuracy")
    ax.set_title("Per-classifier accuracy lower bound")
    ax.legend(fontsize=7, ncol=2)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
