"""Multi-exit neural inference with patience-based early exit.

A small, fully deterministic lab around one idea: attach a prediction
head to every layer of a stacked network, then stop inference as soon as
consecutive heads agree for long enough. The package bundles

* the multi-head stack and its depth-weighted training (:mod:`.model`),
* pluggable exit rules -- patience, entropy, max-probability, fixed
  depth (:mod:`.policies`),
* per-instance adaptive inference with traces and layer-ratio speed-ups
  (:mod:`.inference`),
* the accuracy-improvement condition checks and the Monte Carlo
  verification of the idealized classifier chain (:mod:`.theory`),
* synthetic benchmarks, sweeps, and the experiment runner
  (:mod:`.datasets`, :mod:`.bench`, :mod:`.config`),
* a CLI over all of it (``multiexit``, :mod:`.cli`).
"""

from .datasets import DatasetSpec, gen_synthetic
from .errors import (
    ConfigError,
    MultiexitError,
    NumericError,
    SearchError,
    ShapeError,
    TrainingError,
)
from .inference import EvalReport, InferenceTrace, evaluate, run_instance, wallclock_probe
from .model import (
    LabeledDataset,
    ModelParams,
    OptimizerConfig,
    StackConfig,
    backward,
    forward_all,
    init_params,
    load_checkpoint,
    loss_classification,
    loss_regression,
    save_checkpoint,
    total_loss,
    train,
)
from .numerics import entropy, finite_diff_grad, matmul, softmax
from .policies import (
    PatienceState,
    PolicyConfig,
    patience_update_classification,
    patience_update_regression,
    should_exit_entropy,
    should_exit_maxprob,
    should_exit_patience,
)
from .theory import (
    BoundParams,
    SimOutcome,
    accuracy_lower_bound,
    improvement_condition_holds,
    improvement_condition_sides,
    intermediate_bound_holds,
    intermediate_bound_sides,
    simulate_patience,
    stop_streak_lower_bound,
)

__version__ = "0.1.0"
