"""Config parsing, sweeps, criteria comparison, experiment determinism."""

import numpy as np
import pytest

from multiexit.bench import (
    compare_criteria,
    file_sha256,
    run_experiment,
    sweep_patience,
)
from multiexit.config import (
    build_experiment_config,
    default_pairs,
    parse_config_text,
)
from multiexit.datasets import DatasetSpec, gen_synthetic
from multiexit.errors import ConfigError
from multiexit.inference import evaluate
from multiexit.model import OptimizerConfig, StackConfig, init_params, train
from multiexit.policies import PolicyConfig

SMALL_CONFIG = """
# small smoke experiment
dataset.kind=gaussian_blobs
dataset.num_train=200
dataset.num_eval=100
dataset.input_dim=3
dataset.num_classes=2
dataset.separation=2.0
dataset.noise=1.0
dataset.seed=1
model.hidden_dim=6
model.num_layers=4
model.seed=1
optimizer.epochs=5
policy[0].kind=patience
policy[0].t=2
policy[1].kind=never
sweep.t_min=1
sweep.t_max=3
compare.entropy_grid=0.05:0.3:0.6
compare.maxprob_grid=0.7:0.9:0.99
"""


class TestConfigParsing:
    def test_round_trip(self):
        pairs = parse_config_text(SMALL_CONFIG)
        config = build_experiment_config(pairs)
        assert config.num_layers == 4
        assert config.dataset.kind == "gaussian_blobs"
        assert [p.kind for p in config.policies] == ["patience", "never"]
        assert config.policies[0].t == 2
        assert config.sweep_range() == (1, 3)
        assert config.entropy_grid == [0.05, 0.3, 0.6]

    def test_unknown_key_named_in_error(self):
        with pytest.raises(ConfigError, match="model.depth"):
            parse_config_text("model.depth=3")

    def test_missing_equals_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("model.num_layers 12")

    def test_flag_overrides_file_value(self):
        pairs = parse_config_text(SMALL_CONFIG)
        pairs.update(parse_config_text("model.num_layers=6", source="--set"))
        config = build_experiment_config(pairs)
        assert config.num_layers == 6

    def test_policy_indices_must_be_contiguous(self):
        with pytest.raises(ConfigError, match="contiguous"):
            build_experiment_config(parse_config_text("policy[1].kind=never"))

    def test_bad_value_type(self):
        with pytest.raises(ConfigError, match="model.num_layers"):
            build_experiment_config(parse_config_text("model.num_layers=twelve"))

    def test_sweep_range_validated_against_depth(self):
        pairs = parse_config_text("sweep.t_min=1\nsweep.t_max=12")
        with pytest.raises(ConfigError):
            build_experiment_config(pairs)  # default depth 12 allows t <= 11

    def test_defaults_build(self):
        config = build_experiment_config({})
        assert config.num_layers == 12
        assert config.dataset.kind == "gaussian_blobs"
        assert default_pairs()["model.num_layers"] == "12"


def small_trained_model():
    spec = DatasetSpec(
        kind="gaussian_blobs", num_train=300, num_eval=150, input_dim=3,
        seed=1, num_classes=2, separation=2.0, noise=1.0,
    )
    train_set, eval_set = gen_synthetic(spec)
    cfg = StackConfig(input_dim=3, hidden_dim=6, num_layers=6, num_classes=2, seed=1)
    params, _ = train(init_params(cfg), train_set, OptimizerConfig(epochs=10))
    return params, eval_set


class TestSweepPatience:
    def test_rows_ascend_and_speedup_non_increasing(self):
        params, eval_set = small_trained_model()
        rows = sweep_patience(params, eval_set, (1, 5))
        assert [t for t, _ in rows] == [1, 2, 3, 4, 5]
        speedups = [rep.speedup for _, rep in rows]
        assert all(a >= b for a, b in zip(speedups, speedups[1:]))

    def test_high_patience_approaches_full_depth(self):
        params, eval_set = small_trained_model()
        rows = sweep_patience(params, eval_set, (5, 5))
        never = evaluate(params, PolicyConfig(kind="never"), eval_set)
        _, rep = rows[0]
        assert rep.speedup == pytest.approx(1.0, abs=0.25)
        assert abs(rep.accuracy_or_mse - never.accuracy_or_mse) <= 0.02

    def test_range_validation(self):
        params, eval_set = small_trained_model()
        with pytest.raises(ConfigError):
            sweep_patience(params, eval_set, (1, 6))  # t must stay < n

    def test_workers_do_not_change_results(self):
        params, eval_set = small_trained_model()
        seq = sweep_patience(params, eval_set, (1, 4), workers=1)
        par = sweep_patience(params, eval_set, (1, 4), workers=4)
        assert [(t, r.accuracy_or_mse, r.speedup, r.exit_histogram) for t, r in seq] == [
            (t, r.accuracy_or_mse, r.speedup, r.exit_histogram) for t, r in par
        ]


class TestCompareCriteria:
    def test_trivial_threshold_extremes(self):
        params, eval_set = small_trained_model()
        n = params.config.num_layers
        # entropy threshold above ln|Z| lets every head exit at layer 1
        rep = evaluate(
            params, PolicyConfig(kind="entropy", threshold=np.log(2) + 0.1), eval_set
        )
        assert rep.speedup == pytest.approx(float(n))
        assert rep.exit_histogram[0] == rep.num_instances
        # maxprob threshold 1.0 is unreachable under strict >
        rep = evaluate(params, PolicyConfig(kind="maxprob", threshold=1.0), eval_set)
        assert rep.speedup == 1.0

    def test_table_covers_all_policies(self):
        params, eval_set = small_trained_model()
        curve = compare_criteria(
            params, eval_set, (1, 3), [0.1, 0.3], [0.8, 0.95]
        )
        kinds = [pt.policy for pt in curve]
        assert kinds.count("never") == 1
        assert kinds.count("patience") == 3
        assert kinds.count("entropy") == 2
        assert kinds.count("maxprob") == 2
        pat = [pt for pt in curve if pt.policy == "patience"]
        assert [pt.hyperparameter for pt in pat] == ["1", "2", "3"]

    def test_empty_grid_rejected(self):
        params, eval_set = small_trained_model()
        with pytest.raises(ConfigError):
            compare_criteria(params, eval_set, (1, 2), [], [0.9])


class TestRunExperiment:
    def test_empty_policy_list_fails_before_work(self, tmp_path):
        config = build_experiment_config({})
        assert config.policies == []
        with pytest.raises(ConfigError, match="policy"):
            run_experiment(config, tmp_path / "out")

    def test_byte_identical_reruns(self, tmp_path):
        config = build_experiment_config(parse_config_text(SMALL_CONFIG))
        files_a = run_experiment(config, tmp_path / "a", render_figures=False)
        files_b = run_experiment(config, tmp_path / "b", render_figures=False)
        names_a = sorted(f.name for f in files_a)
        names_b = sorted(f.name for f in files_b)
        assert names_a == names_b
        for name in names_a:
            assert file_sha256(tmp_path / "a" / name) == file_sha256(
                tmp_path / "b" / name
            ), name

    def test_manifest_lists_all_files_with_hashes(self, tmp_path):
        config = build_experiment_config(parse_config_text(SMALL_CONFIG))
        files = run_experiment(config, tmp_path / "out", render_figures=False)
        manifest = tmp_path / "out" / "manifest.csv"
        assert manifest in files
        lines = manifest.read_text().splitlines()
        assert lines[0] == "file,sha256"
        listed = {line.split(",")[0]: line.split(",")[1] for line in lines[1:]}
        for f in files:
            if f == manifest:
                continue
            assert listed[f.name] == file_sha256(f)

    def test_figures_rendered_alongside_tables(self, tmp_path):
        config = build_experiment_config(parse_config_text(SMALL_CONFIG))
        files = run_experiment(config, tmp_path / "out", render_figures=True)
        names = {f.name for f in files}
        assert {"sweep.csv", "sweep.png", "criteria.csv", "criteria.png"} <= names
        for f in files:
            assert f.exists() and f.stat().st_size > 0

    def test_sweep_csv_schema(self, tmp_path):
        config = build_experiment_config(parse_config_text(SMALL_CONFIG))
        run_experiment(config, tmp_path / "out", render_figures=False)
        lines = (tmp_path / "out" / "sweep.csv").read_text().splitlines()
        assert lines[0] == "t,accuracy_or_mse,speedup,exit_histogram"
        assert len(lines) == 1 + 3  # t in 1..3
        first = lines[1].split(",")
        assert first[0] == "1"
        assert len(first[3].split(":")) == config.num_layers
