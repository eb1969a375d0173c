"""Command-line entry point.

Subcommands: train, eval, sweep, compare, simulate, bound, lowerbound.
Every experiment flag mirrors a config-file key (see ``--set`` and the
key table in :mod:`multiexit.config`); flags override file values. All
randomness flows from explicit seeds, so identical invocations produce
byte-identical delimited outputs. Report paths render a figure next to
each table they write.

Exit codes: 0 success, 1 validation problem, 2 computation failure,
3 I/O failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .bench import run_experiment, sweep_patience, compare_criteria, write_lines, write_manifest
from .config import (
    ExperimentConfig,
    build_experiment_config,
    load_config_file,
    parse_config_text,
)
from .datasets import gen_synthetic
from .errors import (
    ConfigError,
    MultiexitError,
    NumericError,
    SearchError,
    TrainingError,
)
from .inference import evaluate, wallclock_probe
from .model import init_params, load_checkpoint, save_checkpoint, train
from .theory import (
    BoundParams,
    SimOutcome,
    accuracy_lower_bound,
    condition_report,
    derive_seed,
    simulate_patience,
)

SIM_HEADER = "n,t,q,p,trials,seed,acc_patience,acc_conventional,stop_fraction"
LOWER_BOUND_HEADER = "target_accuracy,t,lower_bound"

_CONDITION_FORMULAS = {
    "minus_p": "n-t < (1/(2q))^t (p/q) - p",
    "minus_q": "n-t < (1/(2q))^t (p/q) - q",
    "t_plus_1": "n-t < (1/(2q))^(t+1) p - q",
}


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage errors exit 1 (validation), not 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_int_range(text: str) -> tuple[int, int]:
    """'4' -> (4, 4); '1:11' -> (1, 11)."""
    parts = text.split(":")
    try:
        if len(parts) == 1:
            v = int(parts[0])
            return v, v
        if len(parts) == 2:
            lo, hi = int(parts[0]), int(parts[1])
            if lo > hi:
                raise ConfigError(f"empty range {text!r}")
            return lo, hi
    except ValueError as err:
        raise ConfigError(f"bad range {text!r}: {err}") from err
    raise ConfigError(f"bad range {text!r} (expected LO:HI)")


def _parse_float_grid(text: str) -> list[float]:
    """'0.5:1.0:0.01' -> inclusive arithmetic grid; '0.3' -> [0.3]."""
    parts = text.split(":")
    try:
        if len(parts) == 1:
            return [float(parts[0])]
        if len(parts) == 3:
            lo, hi, step = (float(p) for p in parts)
            if step <= 0 or hi < lo:
                raise ConfigError(f"bad grid {text!r}")
            count = int(round((hi - lo) / step)) + 1
            return [round(lo + i * step, 10) for i in range(count)]
    except ValueError as err:
        raise ConfigError(f"bad grid {text!r}: {err}") from err
    raise ConfigError(f"bad grid {text!r} (expected LO:HI:STEP)")


def _parse_value_list(text: str) -> list[float]:
    """Explicit colon-separated floats, same as the compare.* config keys."""
    try:
        values = [float(v) for v in text.split(":") if v.strip() != ""]
    except ValueError as err:
        raise ConfigError(f"bad value list {text!r}: {err}") from err
    if not values:
        raise ConfigError(f"empty value list {text!r}")
    return values


def _parse_seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip() != ""]
    except ValueError as err:
        raise ConfigError(f"bad seed list {text!r}: {err}") from err
    if not seeds:
        raise ConfigError("seed list is empty")
    return seeds


def _load_experiment_config(args) -> ExperimentConfig:
    pairs = {}
    if args.config:
        pairs.update(load_config_file(args.config))
    for item in args.set or []:
        pairs.update(parse_config_text(item, source="--set"))
    return build_experiment_config(pairs)


def _resolve_out(args, seeds: list[int], config: ExperimentConfig | None = None) -> Path:
    """--out beats config output.dir beats a timestamp-plus-seed default."""
    if args.out:
        return Path(args.out)
    if config is not None and config.output_dir:
        return Path(config.output_dir)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    return Path("runs") / f"{stamp}-seed{seeds[0]}"


def _add_experiment_flags(parser: _Parser, needs_seeds: bool = True):
    parser.add_argument(
        "--config", metavar="PATH", help="config file of key=value lines"
    )
    parser.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override any config key (same schema as the config file)",
    )
    parser.add_argument(
        "--out",
        metavar="DIR",
        help="output directory [config: output.dir; default: runs/<timestamp>-seed<first>]",
    )
    if needs_seeds:
        parser.add_argument(
            "--seeds",
            default="0",
            metavar="S1,S2,...",
            help="comma-separated model seeds; one run per seed [config: model.seed]",
        )
    parser.add_argument(
        "--workers",
        type=int,
        default=1,
        metavar="N",
        help="parallel evaluation workers; results are schedule-independent",
    )
    parser.add_argument(
        "--no-figures",
        action="store_true",
        help="skip rendering figures next to the delimited outputs",
    )


def _checkpoint_for(config: ExperimentConfig, args, seed: int, out: Path):
    """Load the requested checkpoint, or train one for this seed."""
    if getattr(args, "checkpoint", None):
        return load_checkpoint(args.checkpoint), None
    train_set, _ = gen_synthetic(config.dataset)
    params = init_params(config.stack_config(seed=seed))
    params, history = train(params, train_set, config.optimizer)
    return params, history


def cmd_train(args) -> int:
    config = _load_experiment_config(args)
    seeds = _parse_seeds(args.seeds)
    out = _resolve_out(args, seeds, config)
    train_set, _ = gen_synthetic(config.dataset)
    files = []
    for seed in seeds:
        params = init_params(config.stack_config(seed=seed))
        params, history = train(params, train_set, config.optimizer)
        ckpt = out / f"checkpoint_seed{seed}.npz"
        ckpt.parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(params, ckpt)
        history_csv = out / f"loss_history_seed{seed}.csv"
        write_lines(
            history_csv,
            "epoch,loss",
            (f"{i + 1},{loss:.6f}" for i, loss in enumerate(history)),
        )
        files += [ckpt, history_csv]
        if not args.no_figures:
            from . import plots

            fig = out / f"loss_history_seed{seed}.png"
            plots.plot_loss_history(history, fig)
            files.append(fig)
        print(f"trained seed {seed}: final loss {history[-1]:.6f} -> {ckpt}")
    write_manifest(out, files)
    return 0


def cmd_eval(args) -> int:
    config = _load_experiment_config(args)
    if not config.policies:
        raise ConfigError("eval needs at least one policy[i].kind in the config")
    seeds = _parse_seeds(args.seeds)
    out = _resolve_out(args, seeds, config)
    _, eval_set = gen_synthetic(config.dataset)
    files = []
    for seed in seeds:
        params, _ = _checkpoint_for(config, args, seed, out)
        rows = []
        for policy in config.policies:
            report = evaluate(params, policy, eval_set)
            rows.append(report.to_row(policy))
            if args.wallclock:
                latency = wallclock_probe(params, policy, eval_set, args.wallclock)
                print(
                    f"seed {seed} {policy.describe()}: median per-instance "
                    f"latency {latency * 1e6:.1f} us (wall-clock probe)"
                )
        eval_csv = out / f"eval_seed{seed}.csv"
        write_lines(eval_csv, "policy,accuracy_or_mse,speedup,exit_histogram", rows)
        files.append(eval_csv)
        print(f"seed {seed}: wrote {eval_csv}")
    write_manifest(out, files)
    return 0


def cmd_sweep(args) -> int:
    config = _load_experiment_config(args)
    seeds = _parse_seeds(args.seeds)
    out = _resolve_out(args, seeds, config)
    t_range = config.sweep_range()
    if args.t:
        t_range = _parse_int_range(args.t)
    if t_range is None:
        t_range = (1, config.num_layers - 1)
    _, eval_set = gen_synthetic(config.dataset)
    files = []
    for seed in seeds:
        params, _ = _checkpoint_for(config, args, seed, out)
        rows = sweep_patience(params, eval_set, t_range, args.workers)
        sweep_csv = out / f"sweep_seed{seed}.csv"
        write_lines(
            sweep_csv,
            "t,accuracy_or_mse,speedup,exit_histogram",
            (
                f"{t},{rep.accuracy_or_mse:.6f},{rep.speedup:.6f},"
                + ":".join(str(c) for c in rep.exit_histogram)
                for t, rep in rows
            ),
        )
        files.append(sweep_csv)
        if not args.no_figures:
            from . import plots

            fig = out / f"sweep_seed{seed}.png"
            plots.plot_patience_sweep(rows, fig, task=config.dataset.task)
            files.append(fig)
        print(f"seed {seed}: wrote {sweep_csv}")
    write_manifest(out, files)
    return 0


def cmd_compare(args) -> int:
    config = _load_experiment_config(args)
    seeds = _parse_seeds(args.seeds)
    out = _resolve_out(args, seeds, config)
    entropy_grid = (
        _parse_value_list(args.entropy_grid) if args.entropy_grid else config.entropy_grid
    )
    maxprob_grid = (
        _parse_value_list(args.maxprob_grid) if args.maxprob_grid else config.maxprob_grid
    )
    if not entropy_grid or not maxprob_grid:
        raise ConfigError(
            "compare needs entropy and maxprob grids "
            "(--entropy-grid/--maxprob-grid or compare.* config keys)"
        )
    t_range = _parse_int_range(args.t) if args.t else (
        config.sweep_range() or (1, config.num_layers - 1)
    )
    _, eval_set = gen_synthetic(config.dataset)
    files = []
    for seed in seeds:
        params, _ = _checkpoint_for(config, args, seed, out)
        curve = compare_criteria(
            params, eval_set, t_range, entropy_grid, maxprob_grid, args.workers
        )
        criteria_csv = out / f"criteria_seed{seed}.csv"
        write_lines(
            criteria_csv,
            "policy,hyperparameter,accuracy_or_mse,speedup",
            (pt.to_row() for pt in curve),
        )
        files.append(criteria_csv)
        if not args.no_figures:
            from . import plots

            fig = out / f"criteria_seed{seed}.png"
            plots.plot_speed_accuracy(curve, fig, task=config.dataset.task)
            files.append(fig)
        print(f"seed {seed}: wrote {criteria_csv}")
    write_manifest(out, files)
    return 0


def cmd_run(args) -> int:
    config = _load_experiment_config(args)
    seeds = _parse_seeds(args.seeds)
    out = _resolve_out(args, seeds, config)
    for seed in seeds:
        files = run_experiment(
            config,
            out,
            seed=seed,
            workers=args.workers,
            render_figures=not args.no_figures,
        )
        print(f"seed {seed}: wrote {len(files)} files under {out}")
    return 0


def cmd_simulate(args) -> int:
    if args.trials < 1:
        raise ConfigError("--trials must be >= 1")
    t_lo, t_hi = _parse_int_range(args.t)
    out = Path(args.out) if args.out else Path("runs") / (
        time.strftime("%Y%m%d-%H%M%S") + f"-seed{args.seed}"
    )
    outcomes: list[SimOutcome] = []
    if args.acc_grid:
        grid = _parse_float_grid(args.acc_grid)
        for i_acc, acc in enumerate(grid):
            if not 0.0 <= acc <= 1.0:
                raise ConfigError(f"per-classifier accuracy {acc} out of [0, 1]")
            err = 1.0 - acc
            for t in range(t_lo, t_hi + 1):
                outcomes.append(
                    simulate_patience(
                        args.n, err, err, t, args.trials,
                        seed=derive_seed(args.seed, t, i_acc),
                    )
                )
    else:
        if args.q is None or args.p is None:
            raise ConfigError("simulate needs --q and --p (or --acc-grid)")
        for t in range(t_lo, t_hi + 1):
            seed = args.seed if t_lo == t_hi else derive_seed(args.seed, t)
            outcomes.append(
                simulate_patience(args.n, args.q, args.p, t, args.trials, seed=seed)
            )
    sim_csv = out / "simulation.csv"
    write_lines(sim_csv, SIM_HEADER, (o.to_row() for o in outcomes))
    files = [sim_csv]
    if not args.no_figures:
        from . import plots

        fig = out / "simulation.png"
        if args.acc_grid:
            plots.plot_simulation_grid(outcomes, fig)
        else:
            plots.plot_simulation_sweep(outcomes, fig)
        files.append(fig)
    write_manifest(out, files)
    print(f"wrote {len(outcomes)} simulation rows -> {sim_csv}")
    return 0


def cmd_bound(args) -> int:
    bp = BoundParams(n=args.n, t=args.t, p=args.p, q=args.q)
    print(f"accuracy-improvement condition at n={bp.n} t={bp.t} p={bp.p:g} q={bp.q:g}")
    for row in condition_report(bp):
        verdict = "holds" if row["holds"] else "fails"
        print(
            f"  {row['form']:<9s} ({_CONDITION_FORMULAS[row['form']]}): "
            f"lhs={row['lhs']:.6f} rhs={row['rhs']:.6f} verdict={verdict}"
        )
    if bp.p == bp.q:
        print("  note: p = q, so forms minus_p and minus_q coincide")
    else:
        print("  note: p != q, so forms minus_p and minus_q differ; disagreements are possible")
    return 0


def cmd_lowerbound(args) -> int:
    if args.trials < 1:
        raise ConfigError("--trials must be >= 1")
    t_lo, t_hi = _parse_int_range(args.t)
    targets = _parse_float_grid(args.targets)
    out = Path(args.out) if args.out else Path("runs") / (
        time.strftime("%Y%m%d-%H%M%S") + f"-seed{args.seed}"
    )
    rows = []
    for i_target, target in enumerate(targets):
        for t in range(t_lo, t_hi + 1):
            bound = accuracy_lower_bound(
                args.n,
                t,
                target,
                args.trials,
                seed=derive_seed(args.seed, i_target),
                tolerance=args.tolerance,
            )
            rows.append((target, t, bound))
    lb_csv = out / "lower_bound.csv"
    write_lines(
        lb_csv,
        LOWER_BOUND_HEADER,
        (f"{tgt:.6f},{t},{lb:.6f}" for tgt, t, lb in rows),
    )
    files = [lb_csv]
    if not args.no_figures:
        from . import plots

        fig = out / "lower_bound.png"
        plots.plot_lower_bound(rows, fig)
        files.append(fig)
    write_manifest(out, files)
    print(f"wrote {len(rows)} lower-bound rows -> {lb_csv}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(
        prog="multiexit",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a multi-exit stack, write checkpoints")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate configured policies on the eval split")
    _add_experiment_flags(p)
    p.add_argument("--checkpoint", metavar="PATH", help="load instead of training")
    p.add_argument(
        "--wallclock",
        type=int,
        metavar="REPEATS",
        help="also print a median per-instance wall-clock probe (>= 3 repeats)",
    )
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="patience sweep table and figure")
    _add_experiment_flags(p)
    p.add_argument("--checkpoint", metavar="PATH", help="load instead of training")
    p.add_argument("--t", metavar="LO:HI", help="patience range [config: sweep.t_min/t_max]")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="speed-accuracy curves across exit criteria")
    _add_experiment_flags(p)
    p.add_argument("--checkpoint", metavar="PATH", help="load instead of training")
    p.add_argument("--t", metavar="LO:HI", help="patience range [config: sweep.t_min/t_max]")
    p.add_argument(
        "--entropy-grid",
        metavar="V1:V2:...",
        help="explicit entropy thresholds [config: compare.entropy_grid]",
    )
    p.add_argument(
        "--maxprob-grid",
        metavar="V1:V2:...",
        help="explicit max-probability thresholds [config: compare.maxprob_grid]",
    )
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser(
        "run", help="full experiment: train, eval, sweep, compare, manifest"
    )
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("simulate", help="Monte Carlo chain simulation")
    p.add_argument("--n", type=int, required=True, help="number of chained classifiers")
    p.add_argument("--t", required=True, metavar="T|LO:HI", help="patience or range")
    p.add_argument("--q", type=float, help="internal classifier error rate")
    p.add_argument("--p", type=float, help="final classifier error rate")
    p.add_argument(
        "--acc-grid",
        metavar="LO:HI:STEP",
        help="per-classifier accuracy grid; sets q=p=1-a per point",
    )
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bound", help="report all improvement-condition forms")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--q", type=float, required=True)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser(
        "lowerbound", help="required per-classifier accuracy to reach target accuracy"
    )
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--t", required=True, metavar="T|LO:HI", help="patience or range")
    p.add_argument(
        "--targets", required=True, metavar="LO:HI:STEP", help="target accuracy grid"
    )
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=0.005)
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_lowerbound)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit:
        raise
    except (ConfigError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (TrainingError, NumericError, SearchError, ArithmeticError) as err:
        print(f"computation failed: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"I/O failure: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
