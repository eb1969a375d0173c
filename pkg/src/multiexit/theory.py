"""Accuracy-improvement condition checks and Monte Carlo verification.

Idealized model: a chain of n binary classifiers whose correctness events
are mutually independent; the first n-1 (internal) classifiers err with
probability q each and the last (final) classifier errs with probability
p. Patience-based exit improves on always using the final classifier
as long as

    n - t < (1/(2q))^t * (p/q) - c

where the trailing constant c is p in the headline statement of the
condition and q at the end of its derivation. A third, looser variant
with exponent t+1,

    n - t < (1/(2q))^(t+1) * p - q,

also circulates. The three variants are algebraically inequivalent and
can disagree, so all are implemented and reported side by side; this
module does not guess which one was intended.

The simulator measures the true quantities the derivation bounds:
accuracy with and without patience-based exit and the fraction of runs
stopping before the final layer. Its intermediate bounds deliberately
ignore double counting of already-stopped runs, so a gap between bound
and simulation is expected, not an error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SearchError

CONDITION_FORMS = ("minus_p", "minus_q", "t_plus_1")

LOWER_BOUND_TOLERANCE = 0.005  # search tolerance in per-classifier accuracy


@dataclass(frozen=True)
class BoundParams:
    """Inputs of the improvement condition.

    n: number of chained classifiers (the last one is the final/original
    classifier); t: patience; q: internal error rate; p: final error rate.
    The analysis regime is q, p <= 0.5, but any probability in (0, 1) is
    accepted for exploration.
    """

    n: int
    t: int
    p: float
    q: float

    def __post_init__(self):
        if self.n < 2:
            raise ConfigError("n must be >= 2")
        if not 1 <= self.t < self.n:
            raise ConfigError("t must satisfy 1 <= t < n")
        for name, value in (("p", self.p), ("q", self.q)):
            if not 0.0 < value < 1.0:
                raise ConfigError(f"{name} must lie strictly in (0, 1)")


def improvement_condition_sides(
    bp: BoundParams, form: str = "minus_p"
) -> tuple[float, float]:
    """Left and right side of the chosen condition variant."""
    if form not in CONDITION_FORMS:
        raise ConfigError(f"unknown condition form {form!r}")
    lhs = float(bp.n - bp.t)
    inv2q = 1.0 / (2.0 * bp.q)
    if form == "minus_p":
        rhs = inv2q**bp.t * (bp.p / bp.q) - bp.p
    elif form == "minus_q":
        rhs = inv2q**bp.t * (bp.p / bp.q) - bp.q
    else:  # t_plus_1
        rhs = inv2q ** (bp.t + 1) * bp.p - bp.q
    return lhs, rhs


def improvement_condition_holds(bp: BoundParams, form: str = "minus_p") -> bool:
    """Whether patience-based exit provably improves accuracy (strict <)."""
    lhs, rhs = improvement_condition_sides(bp, form)
    return lhs < rhs


def intermediate_bound_sides(bp: BoundParams) -> tuple[float, float]:
    """The derivation's intermediate step before the closed form.

    Compares an upper bound on the early-stop-and-misclassify mass,
    (n-t) q^(t+1) - (n-t-1) q^(t+2), against (1/2)^t * p, the
    worst-case stop probability times the final error rate.
    """
    lhs = (bp.n - bp.t) * bp.q ** (bp.t + 1) - (bp.n - bp.t - 1) * bp.q ** (
        bp.t + 2
    )
    rhs = 0.5**bp.t * bp.p
    return float(lhs), float(rhs)


def intermediate_bound_holds(bp: BoundParams) -> bool:
    lhs, rhs = intermediate_bound_sides(bp)
    return lhs < rhs


def stop_streak_lower_bound(q: float, t: int) -> float:
    """q^(t+1) + (1-q)^(t+1): stop probability from an all-agreeing prefix.

    Minimized at q = 0.5, where it equals (1/2)^t.
    """
    return q ** (t + 1) + (1.0 - q) ** (t + 1)


def condition_report(bp: BoundParams) -> list[dict]:
    """All three condition variants with sides and verdicts."""
    rows = []
    for form in CONDITION_FORMS:
        lhs, rhs = improvement_condition_sides(bp, form)
        rows.append(
            {"form": form, "lhs": lhs, "rhs": rhs, "holds": lhs < rhs}
        )
    return rows


@dataclass(frozen=True)
class SimOutcome:
    """Monte Carlo estimates for one (n, t, q, p) configuration.

    Accuracies and the stop fraction are exact trial fractions (integer
    counts over trials), so aggregation order cannot change them.
    """

    n: int
    t: int
    q: float
    p: float
    trials: int
    seed: int
    acc_patience: float
    acc_conventional: float
    stop_fraction: float

    def to_row(self) -> str:
        return (
            f"{self.n},{self.t},{self.q:.6f},{self.p:.6f},{self.trials},"
            f"{self.seed},{self.acc_patience:.6f},"
            f"{self.acc_conventional:.6f},{self.stop_fraction:.6f}"
        )


def _trial_uniforms(seed: int, trials: int, n: int) -> np.ndarray:
    """Counter-based uniforms: row i is a pure function of (seed, i, n).

    Philox is counter-based, and the (trials, n) matrix fills row-major,
    so trial i always reads counters [i*n, (i+1)*n) regardless of how
    trials are partitioned across workers. Together with integer-count
    aggregation this makes results bit-identical for any worker count.
    """
    gen = np.random.Generator(np.random.Philox(seed))
    return gen.random((trials, n))


def simulate_patience(
    n: int, q: float, p: float, t: int, trials: int, seed: int = 0
) -> SimOutcome:
    """Simulate patience-based exit on independent binary classifiers.

    Per trial, each of the n classifiers predicts the true label
    independently: the first n-1 with probability 1-q, the last with
    probability 1-p. In the binary setting an incorrect prediction is
    deterministically the other label, so two classifiers agree exactly
    when their correctness indicators match. The streak counter runs
    over the label sequence; the trial exits at the first layer where
    the counter reaches t (an exit exactly at layer n is output-identical
    to the fallback and does not count as stopping early). With t >= n
    the counter can never reach t, so both accuracies coincide exactly.
    """
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    if n < 2:
        raise ConfigError("n must be >= 2")
    if t < 1:
        raise ConfigError("t must be >= 1")
    for name, value in (("q", q), ("p", p)):
        if not 0.0 <= value <= 1.0:
            raise ConfigError(f"{name} must lie in [0, 1]")

    u = _trial_uniforms(seed, trials, n)
    accuracy = np.full(n, 1.0 - q)
    accuracy[n - 1] = 1.0 - p
    correct = u < accuracy  # (trials, n) correctness indicators

    cnt = np.zeros(trials, dtype=np.int64)
    exit_layer = np.zeros(trials, dtype=np.int64)  # 0 = not exited yet
    exit_correct = np.zeros(trials, dtype=bool)
    for i in range(1, n):
        agree = correct[:, i] == correct[:, i - 1]
        cnt = np.where(agree, cnt + 1, 0)
        fire = (exit_layer == 0) & (cnt == t)
        exit_layer[fire] = i + 1
        exit_correct[fire] = correct[fire, i]
    fallback = exit_layer == 0
    exit_layer[fallback] = n
    exit_correct[fallback] = correct[fallback, n - 1]

    n_patience = int(np.count_nonzero(exit_correct))
    n_conventional = int(np.count_nonzero(correct[:, n - 1]))
    n_stopped = int(np.count_nonzero(exit_layer < n))
    return SimOutcome(
        n=n,
        t=t,
        q=q,
        p=p,
        trials=trials,
        seed=seed,
        acc_patience=n_patience / trials,
        acc_conventional=n_conventional / trials,
        stop_fraction=n_stopped / trials,
    )


def derive_seed(master_seed: int, *key: int) -> int:
    """Deterministic child seed for sweep rows and search probes."""
    ss = np.random.SeedSequence([int(master_seed), *[int(k) for k in key]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def accuracy_lower_bound(
    n: int,
    t: int,
    target_accuracy: float,
    trials: int,
    seed: int = 0,
    tolerance: float = LOWER_BOUND_TOLERANCE,
    noise_guard_sigmas: float = 4.0,
) -> float:
    """Smallest per-classifier accuracy whose simulated chain accuracy
    reaches the target, located by bisection.

    All classifiers share one accuracy a (q = p = 1 - a). The bracket
    keeps ``lo`` at the largest accuracy judged insufficient and ``hi``
    at the smallest judged sufficient; the returned value is ``lo`` once
    the bracket is narrower than ``tolerance``, i.e. the tightest
    simulation-certified lower bound.

    Because each probe is a finite Monte Carlo estimate, a probe counts
    as insufficient only when it falls below the target by more than
    ``noise_guard_sigmas`` binomial standard errors. A lower bound must
    err low, never high: without the guard, a one-sigma dip at the last
    probe would report a bound above the target whenever the true
    requirement sits exactly at the target (the boundary target 0.5).
    The guard biases results at most ~guard/slope toward smaller values
    and vanishes as the target approaches 1.

    Monotonicity of chain accuracy in a is assumed (and spot-checked in
    the test suite). Each probe uses a child seed derived from
    (seed, t, probe index).
    """
    if not 0.5 <= target_accuracy <= 1.0:
        raise ConfigError("target_accuracy must lie in [0.5, 1.0]")
    if not 1 <= t <= n - 1:
        raise ConfigError("t must lie in [1, n-1]")
    if tolerance <= 0.0:
        raise ConfigError("tolerance must be positive")
    if noise_guard_sigmas < 0.0:
        raise ConfigError("noise_guard_sigmas must be >= 0")

    sigma = np.sqrt(target_accuracy * (1.0 - target_accuracy) / trials)
    cutoff = target_accuracy - noise_guard_sigmas * sigma

    def sufficient(a: float, probe: int) -> bool:
        err = 1.0 - a
        out = simulate_patience(
            n, err, err, t, trials, seed=derive_seed(seed, t, probe)
        )
        return out.acc_patience >= cutoff

    if sufficient(0.5, 0):
        return 0.5
    if not sufficient(1.0, 1):
        raise SearchError(
            f"target accuracy {target_accuracy} unreachable even at a=1.0"
        )
    lo, hi = 0.5, 1.0
    probe = 2
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        if sufficient(mid, probe):
            hi = mid
        else:
            lo = mid
        probe += 1
    return lo
