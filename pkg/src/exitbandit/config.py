"""Experiment configuration: cost structures, exit-configuration vectors and the YAML config file."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import yaml

from .core import DomainError, ExitBanditError, ExitProfile
from .environment import EnvironmentSpec
from .policy import PolicyKind

DEFAULT_LAMBDA = 1.0 / 12.0
DEFAULT_POLICIES = ("uee_ucb", "last_exit", "random_exit")

# exit configurations of a 12-layer backbone
EXIT_CONFIGS = {
    "EC-1": "101000100001",
    "EC-2": "101010101001",
    "EC-3": "111110101001",
}


class ConfigError(ExitBanditError, ValueError):
    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.problems))


def parse_exit_vector(vector) -> tuple[int, ...]:
    """Layers carrying an exit; position ``i`` (0-based) set means an exit after layer ``i + 1``.

    Accepts ``"101000100001"``, a list of 0/1 values or a named config such as ``"EC-1"``.
    """
    if isinstance(vector, str):
        vector = EXIT_CONFIGS.get(vector.upper(), vector)
        bits = [c for c in vector if c not in " ,[]"]
    else:
        bits = [str(int(b)) for b in vector]
    if not bits or any(b not in "01" for b in bits):
        raise DomainError(f"exit vector must be a non-empty string of 0/1, got {vector!r}")
    layers = tuple(i + 1 for i, b in enumerate(bits) if b == "1")
    if not layers:
        raise DomainError("exit vector marks no exits")
    return layers


def _check_layers(layers: Sequence[int]) -> None:
    if not layers or layers[0] < 1 or any(b <= a for a, b in zip(layers, layers[1:])):
        raise DomainError(f"layer positions must be positive and strictly increasing: {list(layers)}")


def build_cs1(layers: Sequence[int], lam: float = DEFAULT_LAMBDA) -> np.ndarray:
    """Cost proportional to depth: ``lam * layer``."""
    _check_layers(layers)
    if not lam > 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    return lam * np.asarray(layers, dtype=float)


def build_cs2(layers: Sequence[int], threshold: int = 7, low: float = 0.5,
              high: float = 1.0) -> np.ndarray:
    """Two-slab cost: ``low`` up to ``threshold`` layers, ``high`` beyond."""
    _check_layers(layers)
    if low > high:
        raise DomainError(f"low cost {low} exceeds high cost {high}")
    if low < 0:
        raise DomainError("costs must be non-negative")
    return np.where(np.asarray(layers) <= threshold, float(low), float(high))


@dataclass
class ProfileConfig:
    exits: Optional[str] = None
    layers: Optional[list] = None
    cost_structure: str = "cs1"
    lam: float = DEFAULT_LAMBDA
    threshold: int = 7
    low: float = 0.5
    high: float = 1.0
    costs: Optional[list] = None

    def resolve_layers(self) -> tuple[int, ...]:
        if self.layers is not None:
            return tuple(int(x) for x in self.layers)
        return parse_exit_vector(self.exits)

    def build(self) -> ExitProfile:
        layers = self.resolve_layers()
        cs = self.cost_structure.lower().replace("-", "")
        if cs == "cs1":
            costs = build_cs1(layers, self.lam)
        elif cs == "cs2":
            costs = build_cs2(layers, self.threshold, self.low, self.high)
        elif cs == "explicit":
            costs = np.asarray(self.costs, dtype=float)
        else:
            raise DomainError(f"unknown cost structure {self.cost_structure!r}")
        return ExitProfile(layers, costs)

    def to_dict(self) -> dict:
        d = {"cost_structure": self.cost_structure}
        if self.layers is not None:
            d["layers"] = [int(x) for x in self.layers]
        else:
            d["exits"] = self.exits
        cs = self.cost_structure.lower().replace("-", "")
        if cs == "cs1":
            d["lambda"] = self.lam
        elif cs == "cs2":
            d.update(threshold=self.threshold, low=self.low, high=self.high)
        else:
            d["costs"] = [float(c) for c in self.costs or []]
        return d


@dataclass
class ExperimentConfig:
    profile: ProfileConfig
    environment: Optional[dict] = None
    trace: Optional[str] = None
    shuffle: bool = True
    policies: list = field(default_factory=lambda: list(DEFAULT_POLICIES))
    alpha: float = 1.0
    rounds: int = 2000
    trials: int = 20
    seed: int = 0
    epsilons: list = field(default_factory=lambda: [0.0, 0.1, 0.25])
    base_dir: str = field(default=".", repr=False, compare=False)

    _KEYS = ("profile", "environment", "trace", "shuffle", "policies", "alpha",
             "rounds", "trials", "seed", "epsilons")

    @classmethod
    def from_dict(cls, data: dict, base_dir: str = ".") -> "ExperimentConfig":
        problems = []
        if not isinstance(data, dict):
            raise ConfigError(["configuration must be a mapping"])
        unknown = set(data) - set(cls._KEYS)
        if unknown:
            problems.append(f"unknown keys: {sorted(unknown)}")
        prof = dict(data.get("profile") or {})
        if "lambda" in prof:
            prof["lam"] = prof.pop("lambda")
        try:
            profile = ProfileConfig(**prof)
        except TypeError as exc:
            raise ConfigError(problems + [f"profile: {exc}"])
        cfg = cls(profile=profile,
                  environment=data.get("environment"),
                  trace=data.get("trace"),
                  shuffle=bool(data.get("shuffle", True)),
                  policies=list(data.get("policies", DEFAULT_POLICIES)),
                  alpha=data.get("alpha", 1.0),
                  rounds=data.get("rounds", 2000),
                  trials=data.get("trials", 20),
                  seed=data.get("seed", 0),
                  epsilons=list(data.get("epsilons", [0.0, 0.1, 0.25])),
                  base_dir=base_dir)
        cfg.validate(problems)
        return cfg

    def validate(self, problems: Optional[list] = None) -> None:
        """Collect every problem and raise them together."""
        problems = list(problems or [])
        if self.profile.layers is None and self.profile.exits is None:
            problems.append("profile needs 'exits' (binary vector) or 'layers'")
        else:
            try:
                self.build_profile()
            except (ExitBanditError, TypeError, ValueError) as exc:
                problems.append(f"profile: {exc}")
        if (self.environment is None) == (self.trace is None):
            problems.append("exactly one of 'environment' and 'trace' must be given")
        if self.environment is not None:
            try:
                self.build_spec()
            except (ExitBanditError, TypeError, ValueError, KeyError) as exc:
                problems.append(f"environment: {exc}")
        for name in ("rounds", "trials"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                problems.append(f"{name} must be an integer >= 1, got {v!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            problems.append(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if not isinstance(self.alpha, (int, float)) or not self.alpha > 0:
            problems.append(f"alpha must be positive, got {self.alpha!r}")
        if not self.policies:
            problems.append("at least one policy is required")
        for p in self.policies:
            try:
                PolicyKind.parse(str(p), float(self.alpha) if self.alpha else 1.0)
            except (ExitBanditError, ValueError) as exc:
                problems.append(f"policy {p!r}: {exc}")
        for e in self.epsilons:
            if not isinstance(e, (int, float)) or not 0 <= e <= 1:
                problems.append(f"epsilon values must lie in [0, 1], got {e!r}")
        if problems:
            raise ConfigError(problems)

    def build_profile(self) -> ExitProfile:
        return self.profile.build()

    def build_spec(self) -> EnvironmentSpec:
        env = dict(self.environment)
        unknown = set(env) - {"gammas", "label_prior", "violation_rate"}
        if unknown:
            raise DomainError(f"unknown keys {sorted(unknown)}")
        if "gammas" not in env:
            raise DomainError("'gammas' is required")
        spec = EnvironmentSpec(tuple(env["gammas"]), float(env.get("label_prior", 0.5)),
                               float(env.get("violation_rate", 0.0)), self.seed)
        if spec.K != len(self.profile.resolve_layers()):
            raise DomainError(
                f"{spec.K} error rates for {len(self.profile.resolve_layers())} exits")
        return spec

    def trace_path(self) -> str:
        if os.path.isabs(self.trace):
            return self.trace
        return os.path.join(self.base_dir, self.trace)

    def policy_kinds(self) -> list[PolicyKind]:
        return [PolicyKind.parse(str(p), float(self.alpha)) for p in self.policies]

    def to_dict(self) -> dict:
        d = {"profile": self.profile.to_dict()}
        if self.environment is not None:
            d["environment"] = dict(self.environment)
        else:
            d["trace"] = self.trace
            d["shuffle"] = self.shuffle
        d.update(policies=[str(p) for p in self.policies], alpha=self.alpha,
                 rounds=self.rounds, trials=self.trials, seed=self.seed,
                 epsilons=list(self.epsilons))
        return d


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    return ExperimentConfig.from_dict(data or {}, base_dir=os.path.dirname(os.path.abspath(path)))
