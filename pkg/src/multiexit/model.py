"""Stacked network with an internal prediction head after every layer.

Architecture: an affine embedding maps the input to the hidden width,
then ``num_layers`` affine+nonlinearity blocks of constant width follow.
A single affine head hangs off every block and produces either class
logits (softmaxed into a distribution) or one scalar. The deepest head
doubles as the final classifier; there is no separate output layer.

Training minimizes the depth-weighted average of the per-head losses,
sum_j j*L_j / sum_j j, so every possible exit is covered and deeper
heads (which cost more to reach) weigh more. Gradients are reverse-mode
and analytic for this fixed architecture: each head's loss flows through
its own head and every block below it, including the shared trunk.

``forward_all`` and the loss functions are pure; ``train`` works on its
own copy of the parameters, so training independent models with distinct
seeds in parallel is safe.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError, ShapeError, TrainingError
from .numerics import log_softmax, softmax

CHECKPOINT_FORMAT_VERSION = 1

TASKS = ("classification", "regression")
NONLINEARITIES = ("tanh", "relu")


@dataclass(frozen=True)
class StackConfig:
    """Shape and task of the stack; seeds both init and data shuffling."""

    input_dim: int
    hidden_dim: int
    num_layers: int
    task: str = "classification"
    num_classes: int = 2
    nonlinearity: str = "tanh"
    seed: int = 0

    def __post_init__(self):
        if self.input_dim < 1 or self.hidden_dim < 1:
            raise ConfigError("input_dim and hidden_dim must be >= 1")
        if self.num_layers < 2:
            raise ConfigError("num_layers must be >= 2 (an early exit must exist)")
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.task == "classification" and self.num_classes < 2:
            raise ConfigError("classification needs num_classes >= 2")
        if self.nonlinearity not in NONLINEARITIES:
            raise ConfigError(f"unknown nonlinearity {self.nonlinearity!r}")
        if self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")

    @property
    def output_dim(self) -> int:
        return self.num_classes if self.task == "classification" else 1


@dataclass
class ModelParams:
    """All weights of one stack, in the documented field order.

    Field order (also the checkpoint array order): embed_w, embed_b, then
    layer_w[i], layer_b[i] for i = 0..n-1, then head_w[i], head_b[i] for
    i = 0..n-1. Shapes: embed_w (hidden, input), layer_w (hidden, hidden),
    head_w (output, hidden); biases are 1-D.
    """

    config: StackConfig
    embed_w: np.ndarray
    embed_b: np.ndarray
    layer_w: list[np.ndarray]
    layer_b: list[np.ndarray]
    head_w: list[np.ndarray]
    head_b: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        """All parameter arrays in the documented field order."""
        out = [self.embed_w, self.embed_b]
        for w, b in zip(self.layer_w, self.layer_b):
            out += [w, b]
        for w, b in zip(self.head_w, self.head_b):
            out += [w, b]
        return out

    def copy(self) -> "ModelParams":
        return copy.deepcopy(self)

    def to_vector(self) -> np.ndarray:
        """Flatten all parameters into one vector (field order above)."""
        return np.concatenate([a.ravel() for a in self.arrays()])

    def from_vector(self, vec: np.ndarray) -> "ModelParams":
        """Rebuild a parameter set of this shape from a flat vector."""
        new = self.copy()
        offset = 0
        for a in new.arrays():
            a[...] = vec[offset : offset + a.size].reshape(a.shape)
            offset += a.size
        if offset != vec.size:
            raise ShapeError("parameter vector length mismatch")
        return new


@dataclass
class LabeledDataset:
    """Example matrix plus class indices or real-valued targets."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets)
        if self.inputs.ndim != 2:
            raise ShapeError("inputs must be a 2-D matrix (examples x features)")
        if self.targets.ndim != 1 or len(self.targets) != len(self.inputs):
            raise ShapeError("targets must be 1-D and match the input row count")

    def __len__(self) -> int:
        return len(self.inputs)


@dataclass(frozen=True)
class OptimizerConfig:
    """Mini-batch SGD-with-momentum settings."""

    learning_rate: float = 0.05
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 50

    def __post_init__(self):
        if self.learning_rate < 0.0:
            raise ConfigError("learning_rate must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must be in [0, 1)")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be >= 1")


def init_params(config: StackConfig) -> ModelParams:
    """Seeded uniform [-a, a] init with a = sqrt(6/(fan_in+fan_out)).

    Biases start at zero. Deterministic given ``config.seed``.
    """
    rng = np.random.default_rng(config.seed)

    def uniform(fan_out: int, fan_in: int) -> np.ndarray:
        a = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-a, a, size=(fan_out, fan_in))

    h, d, k = config.hidden_dim, config.input_dim, config.output_dim
    return ModelParams(
        config=config,
        embed_w=uniform(h, d),
        embed_b=np.zeros(h),
        layer_w=[uniform(h, h) for _ in range(config.num_layers)],
        layer_b=[np.zeros(h) for _ in range(config.num_layers)],
        head_w=[uniform(k, h) for _ in range(config.num_layers)],
        head_b=[np.zeros(k) for _ in range(config.num_layers)],
    )


def _activate(a: np.ndarray, kind: str) -> np.ndarray:
    return np.tanh(a) if kind == "tanh" else np.maximum(a, 0.0)


def _activation_grad(h: np.ndarray, kind: str) -> np.ndarray:
    # Derivative expressed through the activation value itself.
    return 1.0 - h * h if kind == "tanh" else (h > 0.0).astype(np.float64)


def embed(params: ModelParams, x) -> np.ndarray:
    """Affine input projection h_0 (no nonlinearity)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.config.input_dim:
        raise ShapeError(
            f"input has {x.shape[-1]} features, expected {params.config.input_dim}"
        )
    return x @ params.embed_w.T + params.embed_b


def layer_step(params: ModelParams, i: int, h: np.ndarray) -> np.ndarray:
    """Hidden state after block i (0-based): nonlinearity(affine(h))."""
    a = h @ params.layer_w[i].T + params.layer_b[i]
    return _activate(a, params.config.nonlinearity)


def head_logits(params: ModelParams, i: int, h: np.ndarray) -> np.ndarray:
    """Raw head output before any softmax."""
    return h @ params.head_w[i].T + params.head_b[i]


def head_output(params: ModelParams, i: int, h: np.ndarray):
    """Per-layer prediction: class distribution, or bare scalar."""
    logits = head_logits(params, i, h)
    if params.config.task == "classification":
        return softmax(logits)
    return float(logits[0])


def forward_all(params: ModelParams, x) -> tuple[list, list[np.ndarray]]:
    """Run the full stack on one input vector.

    Returns (outputs, hiddens): n per-layer predictions in layer order and
    the n hidden states they were read from.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("forward_all expects a single input vector")
    if not np.all(np.isfinite(x)):
        raise NumericError("input contains non-finite entries")
    h = embed(params, x)
    outputs, hiddens = [], []
    for i in range(params.config.num_layers):
        h = layer_step(params, i, h)
        hiddens.append(h)
        outputs.append(head_output(params, i, h))
    return outputs, hiddens


def loss_classification(y_pred, z: int) -> float:
    """Cross entropy -ln y_pred[z] of a class distribution.

    A probability of exactly zero is clamped to the smallest positive
    double before the log, so the result is large but finite. The
    training path never hits the clamp: it computes the same quantity in
    log-space directly from the logits.
    """
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if not 0 <= z < len(y_pred):
        raise ValueError(f"class index {z} out of range for {len(y_pred)} classes")
    return float(-np.log(max(float(y_pred[z]), np.finfo(np.float64).tiny)))


def loss_regression(y_pred: float, y_true: float) -> float:
    """Squared error (y_pred - y_true)^2."""
    return float((float(y_pred) - float(y_true)) ** 2)


def head_loss_weights(n: int) -> np.ndarray:
    """Depth-proportional weights j / sum(1..n); they sum to 1."""
    if n < 1:
        raise ValueError("need at least one per-layer loss")
    j = np.arange(1, n + 1, dtype=np.float64)
    return j / j.sum()


def total_loss(per_layer_losses) -> float:
    """Depth-weighted average sum_j j*L_j / sum_j j of per-head losses."""
    losses = np.asarray(per_layer_losses, dtype=np.float64)
    if losses.ndim != 1 or losses.size == 0:
        raise ValueError("per_layer_losses must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(losses)):
        raise NumericError("per-layer losses contain non-finite values")
    return float(head_loss_weights(losses.size) @ losses)


@dataclass
class Gradients:
    """Gradient arrays mirroring :class:`ModelParams` field order."""

    embed_w: np.ndarray
    embed_b: np.ndarray
    layer_w: list[np.ndarray]
    layer_b: list[np.ndarray]
    head_w: list[np.ndarray]
    head_b: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        out = [self.embed_w, self.embed_b]
        for w, b in zip(self.layer_w, self.layer_b):
            out += [w, b]
        for w, b in zip(self.head_w, self.head_b):
            out += [w, b]
        return out

    def to_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])


def _zero_gradients(params: ModelParams) -> Gradients:
    return Gradients(
        embed_w=np.zeros_like(params.embed_w),
        embed_b=np.zeros_like(params.embed_b),
        layer_w=[np.zeros_like(w) for w in params.layer_w],
        layer_b=[np.zeros_like(b) for b in params.layer_b],
        head_w=[np.zeros_like(w) for w in params.head_w],
        head_b=[np.zeros_like(b) for b in params.head_b],
    )


def batch_loss_and_gradients(
    params: ModelParams,
    inputs: np.ndarray,
    targets: np.ndarray,
    head_weights: np.ndarray | None = None,
) -> tuple[float, Gradients]:
    """Mean depth-weighted loss over a batch, plus its analytic gradient.

    ``head_weights`` overrides the default depth-proportional weighting;
    passing a one-hot vector isolates a single head's contribution.
    Overflow is detected by the explicit finiteness checks, not by numpy
    warnings.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        return _batch_loss_and_gradients(params, inputs, targets, head_weights)


def _batch_loss_and_gradients(params, inputs, targets, head_weights):
    cfg = params.config
    n = cfg.num_layers
    if head_weights is None:
        head_weights = head_loss_weights(n)
    else:
        head_weights = np.asarray(head_weights, dtype=np.float64)
        if head_weights.shape != (n,):
            raise ShapeError(f"head_weights must have length {n}")

    X = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    B = X.shape[0]
    classify = cfg.task == "classification"
    if classify:
        z = np.asarray(targets, dtype=np.int64).reshape(B)
        if np.any(z < 0) or np.any(z >= cfg.num_classes):
            raise ValueError("class index out of range")
        onehot = np.zeros((B, cfg.num_classes))
        onehot[np.arange(B), z] = 1.0
    else:
        y_true = np.asarray(targets, dtype=np.float64).reshape(B)

    # Forward pass, caching hidden states.
    h = embed(params, X)
    if not np.all(np.isfinite(h)):
        raise NumericError("non-finite hidden state at layer 0 (embedding)")
    hiddens = []
    head_grads = []  # d(mean weighted loss)/d(logits_i), shape (B, out)
    loss = 0.0
    for i in range(n):
        a = h @ params.layer_w[i].T + params.layer_b[i]
        h = _activate(a, cfg.nonlinearity)
        if not np.all(np.isfinite(h)):
            raise NumericError(f"non-finite hidden state at layer {i + 1}")
        hiddens.append(h)
        logits = h @ params.head_w[i].T + params.head_b[i]
        if classify:
            shifted = logits - logits.max(axis=1, keepdims=True)
            logz = np.log(np.exp(shifted).sum(axis=1))
            head_loss = float(np.mean(logz - shifted[np.arange(B), z]))
            probs = np.exp(shifted) / np.exp(logz)[:, None]
            g = (probs - onehot) * (head_weights[i] / B)
        else:
            pred = logits[:, 0]
            head_loss = float(np.mean((pred - y_true) ** 2))
            g = (2.0 * (pred - y_true) * (head_weights[i] / B))[:, None]
        loss += head_weights[i] * head_loss
        head_grads.append(g)
    if not np.isfinite(loss):
        raise NumericError("non-finite loss")

    # Reverse pass.
    grads = _zero_gradients(params)
    g_h = np.zeros_like(hiddens[-1])  # dL/dh_i flowing down the trunk
    for i in reversed(range(n)):
        g_logits = head_grads[i]
        grads.head_w[i] = g_logits.T @ hiddens[i]
        grads.head_b[i] = g_logits.sum(axis=0)
        g_h = g_h + g_logits @ params.head_w[i]
        g_a = g_h * _activation_grad(hiddens[i], cfg.nonlinearity)
        below = hiddens[i - 1] if i > 0 else embed(params, X)
        grads.layer_w[i] = g_a.T @ below
        grads.layer_b[i] = g_a.sum(axis=0)
        g_h = g_a @ params.layer_w[i]
    grads.embed_w = g_h.T @ X
    grads.embed_b = g_h.sum(axis=0)
    return loss, grads


def backward(
    params: ModelParams, x, target, head_weights: np.ndarray | None = None
) -> Gradients:
    """Analytic gradient of the depth-weighted loss for one sample."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("backward expects a single input vector")
    _, grads = batch_loss_and_gradients(
        params, x[None, :], np.asarray([target]), head_weights
    )
    return grads


def sample_total_loss(params: ModelParams, x, target) -> float:
    """Depth-weighted loss of one sample (finite-difference target)."""
    loss, _ = batch_loss_and_gradients(params, np.asarray(x)[None, :], [target])
    return loss


def train(
    params: ModelParams,
    dataset: LabeledDataset,
    optimizer: OptimizerConfig | None = None,
) -> tuple[ModelParams, list[float]]:
    """Mini-batch SGD with momentum on the depth-weighted loss.

    Works on a copy of ``params``; shuffling is seeded from the stack
    config so identical seeds give identical parameters and loss history
    (one mean-training-loss entry per epoch).
    """
    if optimizer is None:
        optimizer = OptimizerConfig()
    if len(dataset) == 0:
        raise ValueError("dataset must be non-empty")
    cfg = params.config
    if dataset.inputs.shape[1] != cfg.input_dim:
        raise ShapeError("dataset feature count does not match input_dim")

    params = params.copy()
    velocity = _zero_gradients(params)
    rng = np.random.default_rng([cfg.seed, 1])  # shuffle stream, split from init
    n_samples = len(dataset)
    history: list[float] = []

    for epoch in range(optimizer.epochs):
        order = rng.permutation(n_samples)
        epoch_loss = 0.0
        for start in range(0, n_samples, optimizer.batch_size):
            idx = order[start : start + optimizer.batch_size]
            try:
                loss, grads = batch_loss_and_gradients(
                    params, dataset.inputs[idx], dataset.targets[idx]
                )
            except NumericError as err:
                raise TrainingError(
                    f"training diverged at epoch {epoch + 1}: {err}", epoch=epoch + 1
                ) from err
            epoch_loss += loss * len(idx)
            for p, g, v in zip(
                params.arrays(), grads.arrays(), velocity.arrays()
            ):
                v *= optimizer.momentum
                v -= optimizer.learning_rate * g
                p += v
        mean_loss = epoch_loss / n_samples
        if not np.isfinite(mean_loss):
            raise TrainingError(
                f"training diverged at epoch {epoch + 1}", epoch=epoch + 1
            )
        history.append(mean_loss)
    return params, history


def save_checkpoint(params: ModelParams, path) -> None:
    """Write a self-describing checkpoint (single .npz file).

    Contents: a format-version tag, every StackConfig field, and the
    parameter arrays keyed by their documented field order (embed_w,
    embed_b, layer_w_<i>, layer_b_<i>, head_w_<i>, head_b_<i>).
    Round-tripping through :func:`load_checkpoint` is bit-exact.
    """
    cfg = params.config
    arrays = {
        "format_version": np.int64(CHECKPOINT_FORMAT_VERSION),
        "input_dim": np.int64(cfg.input_dim),
        "hidden_dim": np.int64(cfg.hidden_dim),
        "num_layers": np.int64(cfg.num_layers),
        "task": np.str_(cfg.task),
        "num_classes": np.int64(cfg.num_classes),
        "nonlinearity": np.str_(cfg.nonlinearity),
        "seed": np.int64(cfg.seed),
        "embed_w": params.embed_w,
        "embed_b": params.embed_b,
    }
    for i in range(cfg.num_layers):
        arrays[f"layer_w_{i}"] = params.layer_w[i]
        arrays[f"layer_b_{i}"] = params.layer_b[i]
        arrays[f"head_w_{i}"] = params.head_w[i]
        arrays[f"head_b_{i}"] = params.head_b[i]
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> ModelParams:
    """Load a checkpoint written by :func:`save_checkpoint`."""
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != CHECKPOINT_FORMAT_VERSION:
            raise ConfigError(f"unsupported checkpoint format version {version}")
        cfg = StackConfig(
            input_dim=int(data["input_dim"]),
            hidden_dim=int(data["hidden_dim"]),
            num_layers=int(data["num_layers"]),
            task=str(data["task"]),
            num_classes=int(data["num_classes"]),
            nonlinearity=str(data["nonlinearity"]),
            seed=int(data["seed"]),
        )
        return ModelParams(
            config=cfg,
            embed_w=data["embed_w"],
            embed_b=data["embed_b"],
            layer_w=[data[f"layer_w_{i}"] for i in range(cfg.num_layers)],
            layer_b=[data[f"layer_b_{i}"] for i in range(cfg.num_layers)],
            head_w=[data[f"head_w_{i}"] for i in range(cfg.num_layers)],
            head_b=[data[f"head_b_{i}"] for i in range(cfg.num_layers)],
        )
