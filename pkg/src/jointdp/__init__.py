"""Stochastic convex optimization under joint differential privacy.

Library plus CLI simulator: collaborative noisy SGD whose shared-block
gradients carry calibrated Gaussian noise, the per-silo / non-private /
full-DP baselines, the user-level group-privacy reduction, and a smooth-loss
variant built on private mean estimation of per-user gradients.
"""

from .params import (
    BlockGradient,
    ConfigurationError,
    DomainSpec,
    PartitionedParams,
    apply_step,
    project,
    radius,
)
from .data import (
    Federation,
    ProblemSpec,
    SyntheticTask,
    generate,
    load_federation,
    replace_record,
    replace_user,
    sample_task,
    save_federation,
)
from .losses import (
    LossModel,
    ObjectiveValue,
    empirical_loss,
    grad,
    logistic_model,
    loss,
    population_loss_estimate,
    shared_mean_huber_model,
    shared_mean_norm_model,
)
from .privacy import (
    BudgetReport,
    NoisePlan,
    PrivacySpec,
    budget_report,
    calibrate_sigma,
    concentration_radius,
    group_privacy_lift,
    make_noise_plan,
    no_privacy,
    private_mean,
    user_level_reduction,
)
from .optim import (
    OptimizerConfig,
    TrainResult,
    initial_params,
    run,
    run_full_dp,
    run_nsgd,
    run_per_silo,
    run_rsgd,
    run_smooth_nsgd,
)
from .harness import (
    ExperimentConfig,
    LossSpec,
    OptSpec,
    RunReport,
    StabilityReport,
    SweepSpec,
    TaskSpec,
    compare_paradigms,
    risk_decomposition,
    scaling_sweep,
    stability_experiment,
    user_level_sweep,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
