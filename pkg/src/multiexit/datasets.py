"""Synthetic desk-scale datasets with tunable difficulty.

Three families:

* ``gaussian_blobs``  -- isotropic clusters on a seeded sphere; easy and
  (near-)linearly separable for large separation/noise ratios.
* ``two_spirals``     -- two interleaved planar spiral arms; depth-hungry,
  so heads at different depths differ materially in competence.
* ``regression_wave`` -- a smooth sinusoid of a random linear projection,
  with standardized targets so agreement thresholds in target units are
  comparable across datasets.

Generation is deterministic given the spec seed: the train and eval
splits are drawn from disjoint substreams, labels are balanced within
one example per class, and rows are shuffled per split.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .model import LabeledDataset

DATASET_KINDS = ("gaussian_blobs", "two_spirals", "regression_wave")


@dataclass(frozen=True)
class DatasetSpec:
    """Recipe for one train/eval dataset pair."""

    kind: str
    num_train: int
    num_eval: int
    input_dim: int
    seed: int = 0
    num_classes: int = 2  # gaussian_blobs
    separation: float = 4.0  # gaussian_blobs
    noise: float = 0.1

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ConfigError(f"unknown dataset kind {self.kind!r}")
        if self.num_train < 1 or self.num_eval < 1:
            raise ConfigError("num_train and num_eval must be >= 1")
        if self.input_dim < 1:
            raise ConfigError("input_dim must be >= 1")
        if self.noise < 0.0:
            raise ConfigError("noise must be >= 0")
        if self.kind == "gaussian_blobs":
            if self.num_classes < 2:
                raise ConfigError("gaussian_blobs needs num_classes >= 2")
            if self.separation <= 0.0:
                raise ConfigError("separation must be > 0")
        if self.kind == "two_spirals" and self.input_dim != 2:
            raise ConfigError("two_spirals is a planar task (input_dim must be 2)")

    @property
    def task(self) -> str:
        return "regression" if self.kind == "regression_wave" else "classification"

    @property
    def effective_num_classes(self) -> int:
        if self.kind == "gaussian_blobs":
            return self.num_classes
        if self.kind == "two_spirals":
            return 2
        raise ConfigError("regression datasets have no classes")


def _balanced_counts(total: int, k: int) -> np.ndarray:
    counts = np.full(k, total // k, dtype=np.int64)
    counts[: total % k] += 1
    return counts


def _blob_split(
    spec: DatasetSpec, centers: np.ndarray, count: int, rng: np.random.Generator
) -> LabeledDataset:
    counts = _balanced_counts(count, spec.num_classes)
    xs, ys = [], []
    for label, c in enumerate(counts):
        xs.append(centers[label] + spec.noise * rng.standard_normal((c, spec.input_dim)))
        ys.append(np.full(c, label, dtype=np.int64))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    order = rng.permutation(count)
    return LabeledDataset(x[order], y[order])


SPIRAL_TURNS_RAD = 3.0 * np.pi  # 1.5 turns per arm
SPIRAL_RADIUS = 2.0  # outer radius; sets the arm gap relative to noise


def _spiral_split(
    spec: DatasetSpec, count: int, rng: np.random.Generator
) -> LabeledDataset:
    counts = _balanced_counts(count, 2)
    xs, ys = [], []
    for label, c in enumerate(counts):
        # sqrt spreads points evenly along the arm rather than by angle
        theta = SPIRAL_TURNS_RAD * np.sqrt(rng.random(c))
        radius = SPIRAL_RADIUS * theta / SPIRAL_TURNS_RAD
        arm = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)
        if label == 1:
            arm = -arm
        xs.append(arm + spec.noise * rng.standard_normal((c, 2)))
        ys.append(np.full(c, label, dtype=np.int64))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    order = rng.permutation(count)
    return LabeledDataset(x[order], y[order])


def _wave_inputs(
    spec: DatasetSpec, direction: np.ndarray, count: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    x = rng.uniform(-1.0, 1.0, size=(count, spec.input_dim))
    y = np.sin(2.0 * np.pi * (x @ direction)) + spec.noise * rng.standard_normal(count)
    return x, y


def gen_synthetic(spec: DatasetSpec) -> tuple[LabeledDataset, LabeledDataset]:
    """Generate the (train, eval) pair for a dataset spec.

    The two splits come from separate seeded substreams, so they are
    disjoint by construction (continuous coordinates never collide).
    Regression targets are standardized with the train split's mean and
    standard deviation, applied to both splits.
    """
    root = np.random.SeedSequence([spec.seed, 0x5EED])
    shared_ss, train_ss, eval_ss = root.spawn(3)
    shared = np.random.default_rng(shared_ss)
    train_rng = np.random.default_rng(train_ss)
    eval_rng = np.random.default_rng(eval_ss)

    if spec.kind == "gaussian_blobs":
        # class centers on a sphere of radius `separation`, seeded once
        raw = shared.standard_normal((spec.num_classes, spec.input_dim))
        centers = spec.separation * raw / np.linalg.norm(raw, axis=1, keepdims=True)
        train = _blob_split(spec, centers, spec.num_train, train_rng)
        evals = _blob_split(spec, centers, spec.num_eval, eval_rng)
        return train, evals

    if spec.kind == "two_spirals":
        train = _spiral_split(spec, spec.num_train, train_rng)
        evals = _spiral_split(spec, spec.num_eval, eval_rng)
        return train, evals

    direction = shared.standard_normal(spec.input_dim)
    direction /= np.linalg.norm(direction)
    x_tr, y_tr = _wave_inputs(spec, direction, spec.num_train, train_rng)
    x_ev, y_ev = _wave_inputs(spec, direction, spec.num_eval, eval_rng)
    mean, std = float(np.mean(y_tr)), float(np.std(y_tr))
    if std == 0.0:
        std = 1.0
    return (
        LabeledDataset(x_tr, (y_tr - mean) / std),
        LabeledDataset(x_ev, (y_ev - mean) / std),
    )
