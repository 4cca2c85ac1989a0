"""Shared domain types and the loss/cost algebra for multi-exit cascades.

Exit indices are 1-based throughout the public API: exit 1 is the shallowest
head, exit ``K`` the last one. Arrays are stored 0-based internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

# Absolute tolerance used when comparing losses that should be equal.
LOSS_ATOL = 1e-12


class ExitBanditError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(ExitBanditError, ValueError):
    """Vector lengths disagree with the number of exits."""


class DomainError(ExitBanditError, ValueError):
    """A value lies outside its admissible range."""


class ContractError(ExitBanditError, RuntimeError):
    """An operation was called out of protocol."""


class DegenerateGapError(ExitBanditError, ValueError):
    """A suboptimal exit has zero gap, so the regret bound is undefined."""


def _as_vector(values: Sequence[float], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ExitProfile:
    """Exit placement along the backbone plus the accumulated cost of each exit.

    Costs already include the accuracy/cost trade-off weight.
    """

    layer_positions: tuple[int, ...]
    costs: np.ndarray

    def __post_init__(self):
        layers = tuple(int(p) for p in self.layer_positions)
        costs = _as_vector(self.costs, "costs")
        if not layers:
            raise DimensionError("an exit profile needs at least one exit")
        if len(costs) != len(layers):
            raise DimensionError(
                f"{len(costs)} costs given for {len(layers)} exits"
            )
        if layers[0] < 1 or any(b <= a for a, b in zip(layers, layers[1:])):
            raise DomainError(
                f"layer positions must be positive and strictly increasing: {layers}"
            )
        if not np.all(np.isfinite(costs)) or np.any(costs < 0):
            raise DomainError(f"costs must be finite and non-negative: {costs.tolist()}")
        if np.any(np.diff(costs) < 0):
            raise DomainError(f"costs must be non-decreasing: {costs.tolist()}")
        object.__setattr__(self, "layer_positions", layers)
        object.__setattr__(self, "costs", _frozen(costs))

    @property
    def K(self) -> int:
        return len(self.layer_positions)

    @classmethod
    def from_costs(cls, costs: Sequence[float]) -> "ExitProfile":
        """Profile with exits placed after layers 1..K."""
        return cls(tuple(range(1, len(costs) + 1)), np.asarray(costs, dtype=float))


@dataclass(frozen=True)
class PredictionRecord:
    predictions: tuple[int, ...]
    true_label: Optional[int] = None

    def __post_init__(self):
        preds = tuple(int(p) for p in self.predictions)
        if not preds:
            raise DimensionError("a record needs at least one prediction")
        if any(p < 0 for p in preds):
            raise DomainError(f"labels must be non-negative integers: {preds}")
        if self.true_label is not None and int(self.true_label) < 0:
            raise DomainError(f"labels must be non-negative integers: {self.true_label}")
        object.__setattr__(self, "predictions", preds)
        if self.true_label is not None:
            object.__setattr__(self, "true_label", int(self.true_label))

    @property
    def K(self) -> int:
        return len(self.predictions)

    def correctness(self) -> tuple[int, ...]:
        if self.true_label is None:
            raise ContractError("record carries no ground-truth label")
        return tuple(int(p == self.true_label) for p in self.predictions)

    def unlabeled(self) -> "PredictionRecord":
        return PredictionRecord(self.predictions)


@dataclass(frozen=True)
class LossVector:
    gammas: np.ndarray
    losses: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gammas", _frozen(_as_vector(self.gammas, "gammas")))
        object.__setattr__(self, "losses", _frozen(_as_vector(self.losses, "losses")))
        if len(self.gammas) != len(self.losses):
            raise DimensionError("gammas and losses differ in length")

    @property
    def K(self) -> int:
        return len(self.losses)

    @property
    def costs(self) -> np.ndarray:
        return self.losses - self.gammas


@dataclass
class BanditState:
    """Counters kept by the unsupervised exit-selection policy.

    ``N[k]`` counts rounds in which exit ``k+1`` was observed, ``X[k]`` the
    rounds in which it disagreed with exit 1.
    """

    N: list[int]
    X: list[int]
    P1: list[float]
    t: int = 0

    @classmethod
    def zeros(cls, K: int) -> "BanditState":
        return cls([0] * K, [0] * K, [0.0] * K, 0)

    def copy(self) -> "BanditState":
        return BanditState(list(self.N), list(self.X), list(self.P1), self.t)


def build_loss_vector(gammas: Sequence[float], profile: ExitProfile) -> LossVector:
    g = _as_vector(gammas, "gammas")
    if len(g) != profile.K:
        raise DimensionError(f"{len(g)} error rates given for {profile.K} exits")
    if np.any(~np.isfinite(g)) or np.any(g < 0) or np.any(g > 1):
        raise DomainError(f"error rates must lie in [0, 1]: {g.tolist()}")
    return LossVector(g, g + profile.costs)


def _loss_array(losses) -> np.ndarray:
    if isinstance(losses, LossVector):
        return losses.losses
    return _as_vector(losses, "losses")


def optimal_exit(losses) -> int:
    """1-based index of the minimum-loss exit; ties go to the shallower exit."""
    arr = _loss_array(losses)
    if arr.size == 0:
        raise DimensionError("cannot pick an exit from an empty loss vector")
    best = arr.min()
    return int(np.flatnonzero(arr <= best + LOSS_ATOL)[0]) + 1


def reward_gaps(losses) -> np.ndarray:
    """Excess loss of each exit over the optimal one."""
    arr = _loss_array(losses)
    if arr.size == 0:
        raise DimensionError("empty loss vector")
    gaps = arr - arr[optimal_exit(arr) - 1]
    # values within tolerance of the optimum are ties, not negative gaps
    gaps[np.abs(gaps) <= LOSS_ATOL] = 0.0
    return np.maximum(gaps, 0.0)
