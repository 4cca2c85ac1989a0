"""Regret evaluation: episodes, trial aggregation, sample categories and the UCB regret bound."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from .core import (
    ContractError,
    DegenerateGapError,
    DimensionError,
    DomainError,
    ExitBanditError,
    ExitProfile,
    LossVector,
    build_loss_vector,
    optimal_exit,
    reward_gaps,
)
from .environment import EnvironmentSpec, SyntheticEnvironment, TraceFile
from .policy import PolicyKind, make_policy

Z_95 = 1.96
DEFAULT_TRIALS = 20

# child-stream tags used when deriving per-trial seeds
_ENV, _POLICY, _SHUFFLE = 0, 1, 2


class TraceExhaustedError(ExitBanditError, ValueError):
    def __init__(self, rounds_completed: int, requested: int):
        self.rounds_completed = rounds_completed
        self.requested = requested
        super().__init__(
            f"trace exhausted after {rounds_completed} of {requested} rounds")


def derive_seed(seed: int, *tags: int) -> int:
    ss = np.random.SeedSequence([int(seed), *tags])
    return int(ss.generate_state(1, np.uint64)[0])


def trial_seeds(base_seed: int, trials: int) -> list[int]:
    return [derive_seed(base_seed, 1000, i) for i in range(trials)]


@dataclass(frozen=True)
class Trajectory:
    chosen_exits: np.ndarray
    per_round_regret: np.ndarray
    cumulative_regret: np.ndarray
    trial_seed: int

    @property
    def n(self) -> int:
        return len(self.chosen_exits)


@dataclass(frozen=True)
class ReplaySource:
    """A trace to replay, optionally shuffled once per trial."""

    trace: TraceFile
    shuffle: bool = True


Source = Union[EnvironmentSpec, TraceFile, ReplaySource]


def _episode_data(source: Source, n: int, seed: int):
    if isinstance(source, EnvironmentSpec):
        spec = replace(source, seed=derive_seed(seed, _ENV), n_max=None)
        return SyntheticEnvironment(spec).take(n)
    if isinstance(source, TraceFile):
        source = ReplaySource(source, shuffle=False)
    trace = source.trace
    if len(trace) < n:
        raise TraceExhaustedError(len(trace), n)
    order = trace.order(derive_seed(seed, _SHUFFLE) if source.shuffle else None)[:n]
    return trace.predictions[order], trace.labels[order]


def _source_K(source: Source) -> int:
    if isinstance(source, ReplaySource):
        return source.trace.K
    return source.K


def run_episode(profile: ExitProfile, kind: PolicyKind, source: Source,
                losses: LossVector, n: int, seed: int) -> Trajectory:
    """Play ``n`` rounds of ``kind`` against ``source`` and record regret.

    Unsupervised policies only ever see the prediction prefix of the exits
    they pass through; labels reach the policy only for supervised kinds.
    """
    if n < 1:
        raise DomainError("at least one round is required")
    if not profile.K == losses.K == _source_K(source):
        raise DimensionError(
            f"profile, losses and source disagree on K: "
            f"{profile.K}, {losses.K}, {_source_K(source)}")
    preds, labels = _episode_data(source, n, seed)
    policy = make_policy(profile, kind, seed=derive_seed(seed, _POLICY))
    rows = preds.tolist()
    chosen = np.empty(n, dtype=np.int64)
    select, update = policy.select, policy.update
    if policy.supervised:
        ys = labels.tolist()
        if min(ys) < 0:
            raise ContractError(f"{kind.label} needs labeled records")
        for t in range(n):
            i = select(t + 1)
            update(rows[t][:i], ys[t])
            chosen[t] = i
    else:
        for t in range(n):
            i = select(t + 1)
            update(rows[t][:i])
            chosen[t] = i
    return _trajectory(chosen, losses, seed)


def _trajectory(chosen: np.ndarray, losses: LossVector, seed: int) -> Trajectory:
    gaps = reward_gaps(losses)
    per_round = gaps[chosen - 1]
    # count-weighted sums keep constant policies exact: n * gap, not n additions
    counts = np.zeros((len(chosen), losses.K), dtype=np.int64)
    counts[np.arange(len(chosen)), chosen - 1] = 1
    np.cumsum(counts, axis=0, out=counts)
    cumulative = counts.astype(float) @ gaps
    return Trajectory(chosen, per_round, cumulative, int(seed))


def _run_one(args) -> Trajectory:
    return run_episode(*args)


def run_trials(profile: ExitProfile, kind: PolicyKind, source: Source, losses: LossVector,
               n: int, trials: int = DEFAULT_TRIALS, base_seed: int = 0,
               parallelism: int = 1) -> list[Trajectory]:
    """Independent trials seeded by ``(base_seed, trial_index)``; order is by trial."""
    if trials < 1:
        raise DomainError("at least one trial is required")
    jobs = [(profile, kind, source, losses, n, s) for s in trial_seeds(base_seed, trials)]
    if parallelism <= 1 or trials == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(_run_one, jobs))


@dataclass(frozen=True)
class RegretSummary:
    policy: str
    mean: np.ndarray
    ci_halfwidth: np.ndarray
    std: np.ndarray
    trials: int

    @property
    def rounds(self) -> int:
        return len(self.mean)

    @property
    def final_mean(self) -> float:
        return float(self.mean[-1])


def aggregate_trials(trajectories: Sequence[Trajectory], policy: str = "") -> RegretSummary:
    """Pointwise mean and normal-approximation 95% CI of cumulative regret.

    A single trajectory gets a zero-width interval.
    """
    if not trajectories:
        raise DimensionError("no trajectories to aggregate")
    lengths = {t.n for t in trajectories}
    if len(lengths) != 1:
        raise DimensionError(f"trajectories have ragged lengths {sorted(lengths)}")
    # sorting each column makes the float sums independent of trial order
    stack = np.sort(np.stack([t.cumulative_regret for t in trajectories]), axis=0)
    m = len(trajectories)
    mean = stack.mean(axis=0)
    if m == 1:
        std = np.zeros_like(mean)
    else:
        std = stack.std(axis=0, ddof=1)
    ci = Z_95 * std / math.sqrt(m)
    return RegretSummary(policy, mean, ci, std, m)


@dataclass(frozen=True)
class CategoryCounts:
    sd_violation: int
    all_wrong: int
    all_correct: int
    good: int

    @property
    def total(self) -> int:
        return self.sd_violation + self.all_wrong + self.all_correct + self.good

    def as_dict(self) -> dict:
        return {"sd_violation": self.sd_violation, "all_wrong": self.all_wrong,
                "all_correct": self.all_correct, "good": self.good}

    def percentages(self) -> dict:
        total = self.total
        return {k: (100.0 * v / total if total else 0.0) for k, v in self.as_dict().items()}


def classify_correctness(b: Sequence[int]) -> str:
    if all(b):
        return "all_correct"
    if not any(b):
        return "all_wrong"
    if any(b[i] and not b[j] for i in range(len(b)) for j in range(i + 1, len(b))):
        return "sd_violation"
    return "good"


def categorize(trace: TraceFile) -> CategoryCounts:
    if not trace.labeled:
        raise ContractError("categorizing samples needs a label on every record")
    b = trace.predictions == trace.labels[:, None]
    all_correct = b.all(axis=1)
    all_wrong = ~b.any(axis=1)
    # a correct exit followed later by a wrong one
    violation = (np.maximum.accumulate(b, axis=1) & ~b).any(axis=1)
    good = ~(all_correct | all_wrong | violation)
    return CategoryCounts(int(violation.sum()), int(all_wrong.sum()),
                          int(all_correct.sum()), int(good.sum()))


def per_exit_accuracy(trace: TraceFile) -> np.ndarray:
    if not trace.labeled:
        raise ContractError("accuracy needs labels")
    if len(trace) == 0:
        return np.zeros(trace.K)
    return (trace.predictions == trace.labels[:, None]).mean(axis=0)


def theorem_bound(losses, n: float) -> float:
    """``8 * sum(ln n / gap) + (pi^2/3 + 1) * sum(gap)`` over the suboptimal exits.

    The leading constant is used as is, with no dependence on alpha.
    """
    if n < 2:
        raise DomainError(f"the bound needs n >= 2, got {n}")
    gaps = reward_gaps(losses)
    star = optimal_exit(losses) - 1
    others = np.delete(gaps, star)
    if np.any(others <= 0):
        raise DegenerateGapError("several exits attain the minimum loss; the bound is undefined")
    return float(8.0 * np.sum(math.log(n) / others)
                 + (math.pi ** 2 / 3 + 1) * np.sum(others))


def sd_violation_sweep(profile: ExitProfile, spec: EnvironmentSpec, epsilons: Sequence[float],
                       kind: PolicyKind, n: int, trials: int = DEFAULT_TRIALS,
                       base_seed: int = 0, losses: Optional[LossVector] = None,
                       parallelism: int = 1) -> dict[float, RegretSummary]:
    """Trial protocol at each violation rate.

    Regret is measured against the losses of the uncorrupted spec (or
    ``losses`` when given), so every point of the sweep shares one target.
    Trial seeds are shared across rates.
    """
    if losses is None:
        losses = build_loss_vector(spec.gammas, profile)
    out = {}
    for eps in epsilons:
        eps_spec = replace(spec, violation_rate=float(eps))
        trajs = run_trials(profile, kind, eps_spec, losses, n, trials, base_seed, parallelism)
        out[float(eps)] = aggregate_trials(trajs, kind.label)
    return out
