"""Exit-selection policies sharing one sequential interface.

Each round the driver calls ``select(t)`` (or ``decide(t)`` for diagnostics)
and then ``update(prefix)`` with the predictions of exits ``1..I_t``. Only
supervised policies receive the ground-truth label.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import BanditState, ContractError, DomainError, ExitProfile

UEE_UCB = "uee_ucb"
LAST_EXIT = "last_exit"
RANDOM_EXIT = "random_exit"
FIXED = "fixed"
ORACLE_UCB1 = "oracle_ucb1"

_KINDS = (UEE_UCB, LAST_EXIT, RANDOM_EXIT, FIXED, ORACLE_UCB1)


@dataclass(frozen=True)
class PolicyKind:
    name: str
    alpha: float = 1.0
    exit: Optional[int] = None

    def __post_init__(self):
        if self.name not in _KINDS:
            raise DomainError(f"unknown policy {self.name!r}; choose from {_KINDS}")
        if self.name in (UEE_UCB, ORACLE_UCB1) and not self.alpha > 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")
        if self.name == FIXED and (self.exit is None or self.exit < 1):
            raise DomainError("fixed policy needs an exit index >= 1")

    @classmethod
    def parse(cls, text: str, alpha: float = 1.0) -> "PolicyKind":
        """Parse ``name`` or ``name:param``, e.g. ``uee_ucb:1.5`` or ``fixed:2``."""
        name, _, param = text.strip().lower().partition(":")
        name = name.replace("-", "_")
        try:
            if name == FIXED:
                if not param:
                    raise DomainError("fixed policy needs an exit, e.g. 'fixed:2'")
                return cls(FIXED, exit=int(param))
            if param:
                if name not in (UEE_UCB, ORACLE_UCB1):
                    raise DomainError(f"policy {name!r} takes no parameter")
                return cls(name, alpha=float(param))
        except ValueError as exc:
            if isinstance(exc, DomainError):
                raise
            raise DomainError(f"bad policy parameter in {text!r}") from None
        return cls(name, alpha=alpha)

    @property
    def label(self) -> str:
        if self.name == FIXED:
            return f"fixed:{self.exit}"
        if self.name in (UEE_UCB, ORACLE_UCB1):
            return f"{self.name}:{self.alpha:g}"
        return self.name

    @property
    def supervised(self) -> bool:
        return self.name == ORACLE_UCB1


@dataclass(frozen=True)
class Decision:
    chosen_exit: int
    ucb_indices: Optional[tuple[float, ...]] = None


def _argmax_first(values: Sequence[float]) -> int:
    best, best_k = values[0], 0
    for k in range(1, len(values)):
        if values[k] > best:
            best, best_k = values[k], k
    return best_k


class Policy:
    supervised = False

    def __init__(self, profile: ExitProfile):
        self.profile = profile
        self.K = profile.K
        self.costs = [float(c) for c in profile.costs]
        self._pending: Optional[int] = None
        self.t = 0

    def select(self, t: int) -> int:
        raise NotImplementedError

    def decide(self, t: int) -> Decision:
        return Decision(self.select(t))

    def _check_prefix(self, prefix) -> int:
        if self._pending is None:
            raise ContractError("update called without a preceding decision")
        if len(prefix) != self._pending:
            raise ContractError(
                f"expected predictions of exits 1..{self._pending}, got {len(prefix)}")
        i, self._pending = self._pending, None
        return i

    def update(self, prefix: Sequence[int], true_label: Optional[int] = None) -> None:
        self._check_prefix(prefix)
        self.t += 1


class FixedExit(Policy):
    def __init__(self, profile: ExitProfile, exit: int):
        super().__init__(profile)
        if not 1 <= exit <= profile.K:
            raise DomainError(f"exit {exit} outside 1..{profile.K}")
        self.exit = exit

    def select(self, t: int) -> int:
        self._pending = self.exit
        return self.exit


class LastExit(FixedExit):
    def __init__(self, profile: ExitProfile):
        super().__init__(profile, profile.K)


class RandomExit(Policy):
    def __init__(self, profile: ExitProfile, seed=None):
        super().__init__(profile)
        self.rng = np.random.default_rng(seed)

    def select(self, t: int) -> int:
        self._pending = int(self.rng.integers(1, self.K + 1))
        return self._pending


class UEEUCB(Policy):
    """Unsupervised UCB over disagreement with the first exit.

    The first round runs the sample through every exit; afterwards the exit
    maximising ``P1[k] + c_1 - c_k + sqrt(alpha * ln t / N[k])`` is played and
    all exits up to it are observed.
    """

    def __init__(self, profile: ExitProfile, alpha: float = 1.0):
        super().__init__(profile)
        if not alpha > 0:
            raise DomainError(f"alpha must be positive, got {alpha}")
        self.alpha = float(alpha)
        self.state = BanditState.zeros(self.K)

    def indices(self, t: int) -> list[float]:
        st = self.state
        if min(st.N) == 0:
            raise ContractError("every exit must be observed before computing indices")
        c1, lt = self.costs[0], self.alpha * math.log(t)
        return [p + c1 - c + math.sqrt(lt / n)
                for p, c, n in zip(st.P1, self.costs, st.N)]

    def _choose(self, t: int, with_indices: bool):
        if t < 1:
            raise ContractError(f"rounds start at t=1, got {t}")
        if self.state.t == 0:
            if t != 1:
                raise ContractError("the first decision must be the forced full pass at t=1")
            return self.K, None
        idx = self.indices(t)
        return _argmax_first(idx) + 1, (tuple(idx) if with_indices else None)

    def select(self, t: int) -> int:
        i, _ = self._choose(t, False)
        self._pending = i
        return i

    def decide(self, t: int) -> Decision:
        i, idx = self._choose(t, True)
        self._pending = i
        return Decision(i, idx)

    def update(self, prefix: Sequence[int], true_label: Optional[int] = None) -> None:
        i = self._check_prefix(prefix)
        st = self.state
        y1 = prefix[0]
        N, X, P1 = st.N, st.X, st.P1
        for k in range(i):
            N[k] += 1
            if prefix[k] != y1:
                X[k] += 1
            P1[k] = X[k] / N[k]
        st.t += 1
        self.t = st.t


class OracleUCB1(Policy):
    """Supervised UCB1 reference: needs the true label every round."""

    supervised = True

    def __init__(self, profile: ExitProfile, alpha: float = 1.0):
        super().__init__(profile)
        self.alpha = float(alpha)
        self.N = [0] * self.K
        self.errors = [0] * self.K

    def indices(self, t: int) -> list[float]:
        lt = self.alpha * math.log(t)
        return [e / n + c - math.sqrt(lt / n)
                for e, c, n in zip(self.errors, self.costs, self.N)]

    def _choose(self, t: int, with_indices: bool):
        if t < 1:
            raise ContractError(f"rounds start at t=1, got {t}")
        if self.t == 0:
            return self.K, None
        idx = self.indices(t)
        neg = [-v for v in idx]
        return _argmax_first(neg) + 1, (tuple(idx) if with_indices else None)

    def select(self, t: int) -> int:
        i, _ = self._choose(t, False)
        self._pending = i
        return i

    def decide(self, t: int) -> Decision:
        i, idx = self._choose(t, True)
        self._pending = i
        return Decision(i, idx)

    def update(self, prefix: Sequence[int], true_label: Optional[int] = None) -> None:
        if true_label is None:
            raise ContractError("the supervised reference policy needs the true label")
        i = self._check_prefix(prefix)
        for k in range(i):
            self.N[k] += 1
            if prefix[k] != true_label:
                self.errors[k] += 1
        self.t += 1


def make_policy(profile: ExitProfile, kind: PolicyKind, seed=None) -> Policy:
    if kind.name == UEE_UCB:
        return UEEUCB(profile, kind.alpha)
    if kind.name == LAST_EXIT:
        return LastExit(profile)
    if kind.name == RANDOM_EXIT:
        return RandomExit(profile, seed)
    if kind.name == FIXED:
        return FixedExit(profile, kind.exit)
    return OracleUCB1(profile, kind.alpha)
