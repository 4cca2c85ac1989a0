"""Unsupervised exit selection for multi-exit cascades."""

__version__ = "0.1.0"

from .core import (
    BanditState,
    ContractError,
    DegenerateGapError,
    DimensionError,
    DomainError,
    ExitBanditError,
    ExitProfile,
    LossVector,
    PredictionRecord,
    build_loss_vector,
    optimal_exit,
    reward_gaps,
)
from .environment import (
    EnvironmentSpec,
    SyntheticEnvironment,
    TraceFile,
    draw_sd_sample,
    empirical_gammas,
    inject_violation,
    open_trace,
)
from .evaluation import (
    CategoryCounts,
    RegretSummary,
    Trajectory,
    aggregate_trials,
    categorize,
    run_episode,
    run_trials,
    sd_violation_sweep,
    theorem_bound,
)
from .policy import Decision, PolicyKind, make_policy
