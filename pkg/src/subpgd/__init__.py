"""Subspace-constrained PGD attacks and budget/dimension scaling analysis."""

__version__ = "0.1.0"

from .geometry import (INF, NormSpec, lp_norm, dual_exponent,
                       normalized_gradient, project_ball, clip_pullback)
from .seeding import as_rng, derive_rng
from .subspace import Subspace, sample_basis_subset, sample_grassmannian
from .models import (
    Dataset,
    LinearClassifier,
    MlpClassifier,
    TrainConfig,
    TrainResult,
    TrainingDiverged,
    load_idx,
    read_idx,
    save_model,
    load_model,
    loss_input_gradient,
    synth_gaussian_dataset,
    train_sgd,
)
from .attack import (AttackConfig, AttackOutcome, StepRecord, pgd_attack,
                     attack_success_rate, step_size)
from .theory import (
    MarginResult,
    McEstimate,
    margin_closed_form,
    margin_bruteforce,
    normal_cdf,
    normal_quantile,
    halfnormal_cdf,
    halfnormal_quantile,
    l1_reparam_factor,
    scaling_ratio_exact,
    scaling_ratio_mc,
    oracle_success_rate,
)
from .sweep import (
    SweepConfig,
    SweepResult,
    SweepTable,
    Curve,
    CollapseReport,
    log_grid,
    run_sweep,
    reparametrize,
    collapse_score,
    write_csv,
    read_csv,
    write_svg,
)

__all__ = [
    "INF", "NormSpec", "lp_norm", "dual_exponent", "normalized_gradient",
    "project_ball", "clip_pullback",
    "as_rng", "derive_rng",
    "Subspace", "sample_basis_subset", "sample_grassmannian",
    "Dataset", "LinearClassifier", "MlpClassifier", "TrainConfig", "TrainResult",
    "TrainingDiverged", "load_idx", "read_idx",
    "save_model", "load_model", "loss_input_gradient", "synth_gaussian_dataset",
    "train_sgd",
    "AttackConfig", "AttackOutcome", "StepRecord", "pgd_attack",
    "attack_success_rate", "step_size",
    "MarginResult", "McEstimate", "margin_closed_form", "margin_bruteforce",
    "normal_cdf", "normal_quantile",
    "halfnormal_cdf", "halfnormal_quantile", "l1_reparam_factor",
    "scaling_ratio_exact", "scaling_ratio_mc", "oracle_success_rate",
    "SweepConfig", "SweepResult", "SweepTable", "Curve", "CollapseReport",
    "log_grid", "run_sweep",
    "reparametrize", "collapse_score", "write_csv", "read_csv", "write_svg",
]
