"""Early-exit decision rules.

Four pluggable criteria decide, after each internal head, whether
inference may stop:

* ``patience``  -- stop once the per-layer predictions have remained
  unchanged for ``t`` consecutive heads (a streak counter that resets on
  any change). For regression, "unchanged" means the new value moved by
  less than ``tau``; a move of exactly ``tau`` resets.
* ``entropy``   -- stop when the head's prediction entropy drops strictly
  below a threshold.
* ``maxprob``   -- stop when the head's top softmax score exceeds a
  threshold strictly.
* ``fixed_depth`` -- always stop at a fixed layer (static truncation).
* ``never``     -- never stop early; gives the conventional full-depth
  baseline through the same interface.

Patience state is a small immutable value updated functionally; the
entropy and maxprob rules are stateless. Nothing here holds shared
mutable state, so policies are thread-safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .numerics import entropy as _entropy

POLICY_KINDS = ("patience", "entropy", "maxprob", "fixed_depth", "never")

DEFAULT_TAU = 0.1  # in standardized target units; config-overridable


@dataclass(frozen=True)
class PatienceState:
    """Streak counter plus the previous head prediction.

    ``prev`` is None before the first head has been seen, and is always
    overwritten with the latest prediction -- including after a reset --
    because the streak rule compares against the immediately preceding
    prediction, not against the prediction that started the streak.
    """

    cnt: int = 0
    prev: int | float | None = None

    def __post_init__(self):
        if self.cnt < 0:
            raise ValueError("cnt must be non-negative")
        if self.prev is None and self.cnt != 0:
            raise ValueError("cnt must be 0 before the first prediction")


@dataclass(frozen=True)
class PolicyConfig:
    """Configuration of one exit rule; only the active kind's fields apply.

    Fields:
        kind: one of ``patience | entropy | maxprob | fixed_depth | never``.
        t: patience streak length (patience kind), >= 1.
        tau: regression agreement threshold (patience kind), > 0.
        threshold: entropy or max-probability cut-off.
        depth: exit layer for fixed_depth.
    """

    kind: str
    t: int | None = None
    tau: float | None = None
    threshold: float | None = None
    depth: int | None = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ConfigError(f"unknown policy kind {self.kind!r}")
        if self.kind == "patience":
            if self.t is None or self.t < 1:
                raise ConfigError("patience policy requires t >= 1")
            tau = DEFAULT_TAU if self.tau is None else self.tau
            if tau <= 0.0:
                raise ConfigError("patience policy requires tau > 0")
            object.__setattr__(self, "tau", float(tau))
            self._forbid(threshold=self.threshold, depth=self.depth)
        elif self.kind in ("entropy", "maxprob"):
            if self.threshold is None:
                raise ConfigError(f"{self.kind} policy requires a threshold")
            self._forbid(t=self.t, tau=self.tau, depth=self.depth)
        elif self.kind == "fixed_depth":
            if self.depth is None or self.depth < 1:
                raise ConfigError("fixed_depth policy requires depth >= 1")
            self._forbid(t=self.t, tau=self.tau, threshold=self.threshold)
        else:  # never
            self._forbid(
                t=self.t, tau=self.tau, threshold=self.threshold, depth=self.depth
            )

    def _forbid(self, **fields):
        for name, value in fields.items():
            if value is not None:
                raise ConfigError(
                    f"policy kind {self.kind!r} does not take field {name!r}"
                )

    def describe(self) -> str:
        """Stable one-token descriptor used in report rows."""
        if self.kind == "patience":
            return f"patience(t={self.t})"
        if self.kind == "entropy":
            return f"entropy(threshold={self.threshold:g})"
        if self.kind == "maxprob":
            return f"maxprob(threshold={self.threshold:g})"
        if self.kind == "fixed_depth":
            return f"fixed_depth(depth={self.depth})"
        return "never"

    def hyperparameter(self) -> str:
        """The sweepable hyperparameter value, empty for ``never``."""
        if self.kind == "patience":
            return str(self.t)
        if self.kind in ("entropy", "maxprob"):
            return f"{self.threshold:g}"
        if self.kind == "fixed_depth":
            return str(self.depth)
        return ""


def patience_update_classification(
    state: PatienceState, y: np.ndarray
) -> PatienceState:
    """Advance the streak counter with a new class distribution.

    The predicted class is argmax with lowest-index tie-break. The counter
    increments when it matches the previous predicted class and resets to
    zero otherwise (or when there is no previous prediction yet).
    """
    label = int(np.argmax(np.asarray(y, dtype=np.float64)))
    if state.prev is not None and label == state.prev:
        return PatienceState(cnt=state.cnt + 1, prev=label)
    return PatienceState(cnt=0, prev=label)


def patience_update_regression(
    state: PatienceState, y: float, tau: float
) -> PatienceState:
    """Advance the streak counter with a new scalar prediction.

    Agreement means |y - prev| < tau; a difference of exactly tau resets.
    """
    if tau <= 0.0:
        raise ConfigError("tau must be positive")
    y = float(y)
    if state.prev is not None and abs(y - state.prev) < tau:
        return PatienceState(cnt=state.cnt + 1, prev=y)
    return PatienceState(cnt=0, prev=y)


def should_exit_patience(state: PatienceState, t: int) -> bool:
    """True iff the streak counter has just reached the patience t.

    Checked after each per-layer update; during a run the counter never
    exceeds t because inference halts at the first hit.
    """
    if t < 1:
        raise ConfigError("patience t must be >= 1")
    return state.cnt == t


def should_exit_entropy(y, threshold: float) -> bool:
    """True iff the prediction entropy is strictly below the threshold."""
    return _entropy(y) < threshold


def should_exit_maxprob(y, threshold: float) -> bool:
    """True iff the top class probability strictly exceeds the threshold."""
    v = np.asarray(y, dtype=np.float64)
    return float(np.max(v)) > threshold


def policy_step(
    policy: PolicyConfig,
    state: PatienceState,
    layer: int,
    output,
    task: str,
) -> tuple[PatienceState, bool]:
    """Apply one head output to the policy; return (new state, exit?).

    ``layer`` is the 1-based index of the head just evaluated. Entropy and
    maxprob operate on class distributions only and reject regression.
    """
    if policy.kind == "patience":
        if task == "classification":
            state = patience_update_classification(state, output)
        else:
            state = patience_update_regression(state, float(output), policy.tau)
        return state, should_exit_patience(state, policy.t)
    if policy.kind == "entropy":
        if task != "classification":
            raise ConfigError("entropy policy does not support regression")
        return state, should_exit_entropy(output, policy.threshold)
    if policy.kind == "maxprob":
        if task != "classification":
            raise ConfigError("maxprob policy does not support regression")
        return state, should_exit_maxprob(output, policy.threshold)
    if policy.kind == "fixed_depth":
        return state, layer >= policy.depth
    return state, False  # never
