"""Acceptance gate: every criterion at its stated tolerance.

Run ``pytest tests/test_acceptance.py -v -s`` to see one PASS/FAIL line
per criterion together with the measured numbers. The expensive
benchmark (five training runs on the diversity task) is shared between
the criteria that need it via a session fixture.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from multiexit.bench import compare_criteria, run_experiment
from multiexit.cli import main
from multiexit.config import build_experiment_config, load_config_file
from multiexit.datasets import gen_synthetic
from multiexit.inference import evaluate, predictions
from multiexit.model import (
    StackConfig,
    backward,
    init_params,
    sample_total_loss,
    total_loss,
    train,
)
from multiexit.numerics import finite_diff_grad
from multiexit.policies import (
    PatienceState,
    PolicyConfig,
    patience_update_classification,
    patience_update_regression,
    should_exit_patience,
)
from multiexit.theory import accuracy_lower_bound, derive_seed, simulate_patience

DIVERSITY_CONFIG = Path(__file__).resolve().parent.parent / "configs" / "diversity.cfg"

SEEDS = (0, 1, 2, 3, 4)


def _report(num: int, name: str, ok: bool, detail: str, elapsed: float) -> None:
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {num} ({name}): {status} [{elapsed:.1f}s] {detail}")


@pytest.fixture(scope="session")
def diversity_runs():
    """Five seeded training runs on the pinned diversity benchmark."""
    config = build_experiment_config(load_config_file(DIVERSITY_CONFIG))
    train_set, eval_set = gen_synthetic(config.dataset)
    start = time.time()
    curves, models = [], []
    for seed in SEEDS:
        params = init_params(config.stack_config(seed=seed))
        params, _ = train(params, train_set, config.optimizer)
        models.append(params)
        curves.append(
            compare_criteria(
                params,
                eval_set,
                (1, config.num_layers - 1),
                config.entropy_grid,
                config.maxprob_grid,
            )
        )
    return {
        "config": config,
        "eval_set": eval_set,
        "curves": curves,
        "models": models,
        "elapsed": time.time() - start,
    }


def test_criterion_1_condition_worked_example(capsys):
    start = time.time()
    verdicts = {}
    for t in range(1, 12):
        assert main(["bound", "--n", "12", "--t", str(t), "--p", "0.1", "--q", "0.2"]) == 0
        out = capsys.readouterr().out
        line = next(l for l in out.splitlines() if l.strip().startswith("minus_p"))
        verdicts[t] = "verdict=holds" in line
    elapsed = time.time() - start
    ok = all(not verdicts[t] for t in range(1, 4)) and all(
        verdicts[t] for t in range(4, 12)
    )
    ok = ok and elapsed < 1.0
    with capsys.disabled():
        _report(1, "condition worked example n=12 q=0.2 p=0.1", ok,
                f"false for t=1..3, true for t=4..11: {verdicts}", elapsed)
    assert ok


def test_criterion_2_monte_carlo_inverted_u(capsys):
    start = time.time()
    trials = 100000
    outcomes = [
        simulate_patience(12, 0.2, 0.2, t, trials, seed=derive_seed(0, t))
        for t in range(1, 12)
    ]
    accs = [o.acc_patience for o in outcomes]
    peak_idx = int(np.argmax(accs))
    peak = outcomes[peak_idx]
    sigma = np.sqrt(0.2 * 0.8 / trials)
    elapsed = time.time() - start
    ok = (
        peak.t in (2, 3, 4)
        and peak.acc_patience > peak.acc_conventional
        and abs(peak.acc_conventional - 0.8) <= 4 * sigma
        and elapsed < 30.0
    )
    with capsys.disabled():
        _report(2, "Monte Carlo inverted-U", ok,
                f"peak t={peak.t} acc={peak.acc_patience:.4f} vs "
                f"conventional {peak.acc_conventional:.4f}", elapsed)
    assert ok


def test_criterion_3_lower_bound_grid(capsys):
    start = time.time()
    targets = [round(0.5 + 0.01 * i, 10) for i in range(51)]
    violations = []
    rows = 0
    for i_target, target in enumerate(targets):
        for t in range(1, 12):
            bound = accuracy_lower_bound(
                12, t, target, 10000, seed=derive_seed(0, i_target)
            )
            rows += 1
            if 2 <= t <= 8 and bound > target:
                violations.append((target, t, bound))
    elapsed = time.time() - start
    ok = rows == 51 * 11 and not violations and elapsed < 600.0
    with capsys.disabled():
        _report(3, "lower-bound grid 51x11", ok,
                f"{rows} points, reduction >= 0 for t in [2,8], "
                f"{len(violations)} violations", elapsed)
    assert ok


def test_criterion_4_stop_probability_bound(capsys):
    start = time.time()
    trials = 200000
    margins = {}
    ok = True
    for t in range(1, 7):
        out = simulate_patience(12, 0.5, 0.5, t, trials, seed=derive_seed(0, t))
        bound = 0.5**t
        sigma = np.sqrt(bound * (1 - bound) / trials)
        margins[t] = out.stop_fraction - bound
        ok = ok and out.stop_fraction >= bound - 4 * sigma
    elapsed = time.time() - start
    ok = ok and elapsed < 60.0
    with capsys.disabled():
        _report(4, "stop-probability bound at q=0.5", ok,
                "margins " + " ".join(f"t{t}:{m:+.3f}" for t, m in margins.items()),
                elapsed)
    assert ok


def test_criterion_5_gradient_correctness(capsys):
    start = time.time()
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        task = "classification" if seed % 2 == 0 else "regression"
        cfg = StackConfig(
            input_dim=3, hidden_dim=4, num_layers=3, task=task,
            num_classes=3, nonlinearity="tanh", seed=seed,
        )
        params = init_params(cfg)
        x = rng.standard_normal(3)
        target = (
            int(rng.integers(0, 3)) if task == "classification"
            else float(rng.standard_normal())
        )

        def loss_of(vec, params=params, x=x, target=target):
            return sample_total_loss(params.from_vector(vec), x, target)

        analytic = backward(params, x, target).to_vector()
        numeric = finite_diff_grad(loss_of, params.to_vector(), eps=1e-5)
        scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-12)
        worst = max(worst, float(np.max(np.abs(analytic - numeric)) / scale))
    elapsed = time.time() - start
    ok = worst <= 1e-4 and elapsed < 10.0
    with capsys.disabled():
        _report(5, "gradient correctness 20 configs", ok,
                f"max relative error {worst:.2e} (tol 1e-4)", elapsed)
    assert ok


def test_criterion_6_exact_equivalences(capsys):
    start = time.time()
    # (a) patience t >= n reproduces the never policy instance by instance
    cfg = StackConfig(input_dim=4, hidden_dim=8, num_layers=6, num_classes=3, seed=2)
    params = init_params(cfg)
    rng = np.random.default_rng(3)
    from multiexit.model import LabeledDataset

    data = LabeledDataset(rng.standard_normal((50, 4)), rng.integers(0, 3, size=50))
    base = predictions(params, PolicyConfig(kind="never"), data)
    part_a = all(
        predictions(params, PolicyConfig(kind="patience", t=t), data) == base
        for t in (6, 7, 15)
    )
    # (b) constant per-layer losses: the weighted average is that constant
    part_b = all(total_loss([0.73] * n) == pytest.approx(0.73, abs=1e-15)
                 for n in (1, 2, 7, 12))
    # (c) streak-counter hand traces
    s = patience_update_classification(PatienceState(cnt=1, prev=0), [0.6, 0.4])
    trace_1 = s == PatienceState(cnt=2, prev=0)
    s = patience_update_classification(PatienceState(cnt=3, prev=0), [0.1, 0.9])
    trace_2 = s == PatienceState(cnt=0, prev=1)
    s = patience_update_regression(PatienceState(cnt=0, prev=0.50), 0.52, tau=0.1)
    trace_3 = s == PatienceState(cnt=1, prev=0.52)
    s = patience_update_regression(PatienceState(cnt=2, prev=0.50), 0.70, tau=0.1)
    trace_4 = s == PatienceState(cnt=0, prev=0.70)
    # A A B B B with t=2 exits at the fifth head
    state, fired_at = PatienceState(), None
    for i, y in enumerate([[.9, .1], [.8, .2], [.2, .8], [.3, .7], [.1, .9]], start=1):
        state = patience_update_classification(state, y)
        if fired_at is None and should_exit_patience(state, 2):
            fired_at = i
    part_c = trace_1 and trace_2 and trace_3 and trace_4 and fired_at == 5
    elapsed = time.time() - start
    ok = part_a and part_b and part_c
    with capsys.disabled():
        _report(6, "exact equivalences", ok,
                f"(a) t>=n matches never: {part_a}; (b) constant losses: {part_b}; "
                f"(c) counter traces: {part_c}", elapsed)
    assert ok


def _median_curve(curves):
    med = {}
    for i, pt in enumerate(curves[0]):
        accs = sorted(c[i].accuracy_or_mse for c in curves)
        spds = sorted(c[i].speedup for c in curves)
        med[(pt.policy, pt.hyperparameter)] = (accs[len(accs) // 2], spds[len(spds) // 2])
    return med


def test_criterion_7_speed_accuracy_direction(diversity_runs, capsys):
    start = time.time()
    med = _median_curve(diversity_runs["curves"])
    never_acc = med[("never", "")][0]

    # (a) some patience setting is >= 1.3x faster without losing accuracy
    fast_enough = [
        (hyp, acc, spd)
        for (pol, hyp), (acc, spd) in med.items()
        if pol == "patience" and spd >= 1.3 and acc >= never_acc - 0.005
    ]
    part_a = bool(fast_enough)

    # (b) at matched speed-ups in [1.3, 2.0] (nearest point by speed-up),
    # patience stays within 0.01 of both threshold baselines
    def nearest_acc(policy, target_spd):
        pts = [
            (abs(spd - target_spd), acc)
            for (pol, _), (acc, spd) in med.items()
            if pol == policy
        ]
        return min(pts)[1]

    comparisons = []
    part_b = True
    for (pol, hyp), (acc, spd) in med.items():
        if pol != "patience" or not 1.3 <= spd <= 2.0:
            continue
        ent = nearest_acc("entropy", spd)
        mxp = nearest_acc("maxprob", spd)
        good = acc >= ent - 0.01 and acc >= mxp - 0.01
        part_b = part_b and good
        comparisons.append(f"t={hyp}@{spd:.2f}x: {acc:.3f} vs e{ent:.3f}/m{mxp:.3f}")

    elapsed = diversity_runs["elapsed"] + (time.time() - start)
    ok = part_a and part_b and comparisons and elapsed < 900.0
    with capsys.disabled():
        _report(7, "desk-scale speed-accuracy direction", ok,
                f"never median {never_acc:.4f}; (a) {len(fast_enough)} settings "
                f">=1.3x at parity; (b) {'; '.join(comparisons)}", elapsed)
    assert ok


def test_criterion_8_monotone_cost(diversity_runs, capsys):
    start = time.time()
    eval_set = diversity_runs["eval_set"]
    n = diversity_runs["config"].num_layers
    ok = True
    for params in diversity_runs["models"]:
        prev = 0.0
        for t in range(1, n):
            rep = evaluate(params, PolicyConfig(kind="patience", t=t), eval_set)
            mean_exit = (
                sum((i + 1) * c for i, c in enumerate(rep.exit_histogram))
                / rep.num_instances
            )
            ok = ok and mean_exit >= prev
            prev = mean_exit
    elapsed = time.time() - start
    with capsys.disabled():
        _report(8, "monotone cost in patience", ok,
                f"checked t=1..{n - 1} on {len(diversity_runs['models'])} "
                f"trained models, exact", elapsed)
    assert ok


def test_criterion_9_byte_identical_reruns(tmp_path, capsys):
    start = time.time()
    # simulation CSV via the CLI
    args = [
        "simulate", "--n", "12", "--t", "1:6", "--q", "0.2", "--p", "0.1",
        "--trials", "20000", "--seed", "7", "--no-figures",
    ]
    assert main(args + ["--out", str(tmp_path / "sim_a")]) == 0
    assert main(args + ["--out", str(tmp_path / "sim_b")]) == 0
    sim_ok = (tmp_path / "sim_a" / "simulation.csv").read_bytes() == (
        tmp_path / "sim_b" / "simulation.csv"
    ).read_bytes()

    # experiment CSVs via the library runner
    pairs = {
        "dataset.num_train": "200", "dataset.num_eval": "100",
        "dataset.input_dim": "3", "dataset.num_classes": "2",
        "model.num_layers": "4", "model.hidden_dim": "5",
        "optimizer.epochs": "4",
        "policy[0].kind": "patience", "policy[0].t": "2",
        "sweep.t_min": "1", "sweep.t_max": "3",
        "compare.entropy_grid": "0.1:0.4", "compare.maxprob_grid": "0.8:0.95",
    }
    config = build_experiment_config(pairs)
    files_a = run_experiment(config, tmp_path / "exp_a", render_figures=False)
    run_experiment(config, tmp_path / "exp_b", render_figures=False)
    exp_ok = True
    for f in files_a:
        twin = tmp_path / "exp_b" / f.name
        if f.suffix == ".csv":
            exp_ok = exp_ok and f.read_bytes() == twin.read_bytes()
    elapsed = time.time() - start
    ok = sim_ok and exp_ok
    with capsys.disabled():
        _report(9, "byte-identical reruns", ok,
                f"simulation CSV identical: {sim_ok}; experiment CSVs "
                f"identical: {exp_ok}", elapsed)
    assert ok
