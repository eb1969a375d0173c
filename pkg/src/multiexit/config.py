"""Flat key-value experiment configuration.

The config file format is one ``dotted.key=value`` pair per line; blank
lines and ``#`` comments are ignored. Unknown keys are errors. The same
keys are accepted on the command line (``--set key=value``), and flag
values override file values.

Key table (see README for details):

    dataset.kind            gaussian_blobs | two_spirals | regression_wave
    dataset.num_train       int >= 1
    dataset.num_eval        int >= 1
    dataset.input_dim       int >= 1 (two_spirals requires 2)
    dataset.seed            int >= 0
    dataset.num_classes     int >= 2 (gaussian_blobs)
    dataset.separation      float > 0 (gaussian_blobs)
    dataset.noise           float >= 0
    model.hidden_dim        int >= 1
    model.num_layers        int >= 2
    model.nonlinearity      tanh | relu
    model.seed              int >= 0
    optimizer.learning_rate float >= 0
    optimizer.momentum      float in [0, 1)
    optimizer.batch_size    int >= 1
    optimizer.epochs        int >= 1
    policy[i].kind          patience | entropy | maxprob | fixed_depth | never
    policy[i].t             int >= 1 (patience)
    policy[i].tau           float > 0 (patience, regression agreement)
    policy[i].threshold     float (entropy / maxprob)
    policy[i].depth         int >= 1 (fixed_depth)
    sweep.t_min             int (patience sweep start)
    sweep.t_max             int (patience sweep end, <= num_layers - 1)
    compare.entropy_grid    colon-separated floats
    compare.maxprob_grid    colon-separated floats
    output.dir              path

The model's input width, task, and class count are derived from the
dataset, so they have no keys of their own.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .datasets import DatasetSpec
from .errors import ConfigError
from .model import OptimizerConfig, StackConfig
from .policies import PolicyConfig

_POLICY_KEY = re.compile(r"^policy\[(\d+)\]\.(kind|t|tau|threshold|depth)$")

_INT_KEYS = {
    "dataset.num_train",
    "dataset.num_eval",
    "dataset.input_dim",
    "dataset.seed",
    "dataset.num_classes",
    "model.hidden_dim",
    "model.num_layers",
    "model.seed",
    "optimizer.batch_size",
    "optimizer.epochs",
    "sweep.t_min",
    "sweep.t_max",
}
_FLOAT_KEYS = {
    "dataset.separation",
    "dataset.noise",
    "optimizer.learning_rate",
    "optimizer.momentum",
}
_STR_KEYS = {
    "dataset.kind",
    "model.nonlinearity",
    "compare.entropy_grid",
    "compare.maxprob_grid",
    "output.dir",
}
KNOWN_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS


@dataclass
class ExperimentConfig:
    """Everything one experiment run needs, resolved and validated."""

    dataset: DatasetSpec
    hidden_dim: int = 32
    num_layers: int = 12
    nonlinearity: str = "tanh"
    model_seed: int = 0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    policies: list[PolicyConfig] = field(default_factory=list)
    sweep_t_min: int | None = None
    sweep_t_max: int | None = None
    entropy_grid: list[float] = field(default_factory=list)
    maxprob_grid: list[float] = field(default_factory=list)
    output_dir: str | None = None

    def stack_config(self, seed: int | None = None) -> StackConfig:
        """Model shape with task/width derived from the dataset."""
        ds = self.dataset
        return StackConfig(
            input_dim=ds.input_dim,
            hidden_dim=self.hidden_dim,
            num_layers=self.num_layers,
            task=ds.task,
            num_classes=ds.effective_num_classes if ds.task == "classification" else 2,
            nonlinearity=self.nonlinearity,
            seed=self.model_seed if seed is None else seed,
        )

    def sweep_range(self) -> tuple[int, int] | None:
        if self.sweep_t_min is None and self.sweep_t_max is None:
            return None
        lo = 1 if self.sweep_t_min is None else self.sweep_t_min
        hi = self.num_layers - 1 if self.sweep_t_max is None else self.sweep_t_max
        if not 1 <= lo <= hi <= self.num_layers - 1:
            raise ConfigError(
                f"patience sweep range [{lo}, {hi}] must lie within "
                f"[1, {self.num_layers - 1}]"
            )
        return lo, hi


def default_pairs() -> dict[str, str]:
    """Built-in defaults: a 12-layer stack on moderately noisy blobs."""
    return {
        "dataset.kind": "gaussian_blobs",
        "dataset.num_train": "2000",
        "dataset.num_eval": "1000",
        "dataset.input_dim": "8",
        "dataset.seed": "0",
        "dataset.num_classes": "3",
        "dataset.separation": "2.0",
        "dataset.noise": "1.0",
        "model.hidden_dim": "32",
        "model.num_layers": "12",
        "model.nonlinearity": "tanh",
        "model.seed": "0",
        "optimizer.learning_rate": "0.05",
        "optimizer.momentum": "0.9",
        "optimizer.batch_size": "32",
        "optimizer.epochs": "40",
    }


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key=value`` lines into an ordered mapping.

    Later occurrences of a key override earlier ones. Keys are validated
    against the known-key table; unknown keys raise :class:`ConfigError`
    naming the offending key.
    """
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        validate_key(key, source=f"{source}:{lineno}")
        pairs[key] = value
    return pairs


def validate_key(key: str, source: str = "<config>") -> None:
    if key in KNOWN_KEYS or _POLICY_KEY.match(key):
        return
    raise ConfigError(f"{source}: unknown config key {key!r}")


def load_config_file(path) -> dict[str, str]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), source=str(path))


def _convert(key: str, value: str):
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
    except ValueError as err:
        raise ConfigError(f"config key {key!r}: {err}") from err
    return value


def _parse_grid(key: str, value: str) -> list[float]:
    try:
        grid = [float(v) for v in value.split(":") if v.strip() != ""]
    except ValueError as err:
        raise ConfigError(f"config key {key!r}: {err}") from err
    if not grid:
        raise ConfigError(f"config key {key!r}: empty grid")
    return grid


def _build_policies(pairs: dict[str, str]) -> list[PolicyConfig]:
    by_index: dict[int, dict[str, str]] = {}
    for key, value in pairs.items():
        m = _POLICY_KEY.match(key)
        if not m:
            continue
        by_index.setdefault(int(m.group(1)), {})[m.group(2)] = value
    if not by_index:
        return []
    indices = sorted(by_index)
    if indices != list(range(len(indices))):
        raise ConfigError(
            f"policy indices must be contiguous from 0, got {indices}"
        )
    policies = []
    for i in indices:
        fields = by_index[i]
        if "kind" not in fields:
            raise ConfigError(f"policy[{i}] is missing its kind")
        try:
            policies.append(
                PolicyConfig(
                    kind=fields["kind"],
                    t=int(fields["t"]) if "t" in fields else None,
                    tau=float(fields["tau"]) if "tau" in fields else None,
                    threshold=(
                        float(fields["threshold"]) if "threshold" in fields else None
                    ),
                    depth=int(fields["depth"]) if "depth" in fields else None,
                )
            )
        except ValueError as err:
            raise ConfigError(f"policy[{i}]: {err}") from err
    return policies


def build_experiment_config(pairs: dict[str, str]) -> ExperimentConfig:
    """Resolve raw key-value pairs (defaults already merged) into a
    validated :class:`ExperimentConfig`."""
    merged = default_pairs()
    merged.update(pairs)
    get = lambda key: _convert(key, merged[key])

    dataset = DatasetSpec(
        kind=get("dataset.kind"),
        num_train=get("dataset.num_train"),
        num_eval=get("dataset.num_eval"),
        input_dim=get("dataset.input_dim"),
        seed=get("dataset.seed"),
        num_classes=get("dataset.num_classes"),
        separation=get("dataset.separation"),
        noise=get("dataset.noise"),
    )
    optimizer = OptimizerConfig(
        learning_rate=get("optimizer.learning_rate"),
        momentum=get("optimizer.momentum"),
        batch_size=get("optimizer.batch_size"),
        epochs=get("optimizer.epochs"),
    )
    config = ExperimentConfig(
        dataset=dataset,
        hidden_dim=get("model.hidden_dim"),
        num_layers=get("model.num_layers"),
        nonlinearity=get("model.nonlinearity"),
        model_seed=get("model.seed"),
        optimizer=optimizer,
        policies=_build_policies(merged),
        sweep_t_min=get("sweep.t_min") if "sweep.t_min" in merged else None,
        sweep_t_max=get("sweep.t_max") if "sweep.t_max" in merged else None,
        entropy_grid=(
            _parse_grid("compare.entropy_grid", merged["compare.entropy_grid"])
            if "compare.entropy_grid" in merged
            else []
        ),
        maxprob_grid=(
            _parse_grid("compare.maxprob_grid", merged["compare.maxprob_grid"])
            if "compare.maxprob_grid" in merged
            else []
        ),
        output_dir=merged.get("output.dir"),
    )
    config.stack_config()  # validates derived model shape early
    config.sweep_range()
    return config
