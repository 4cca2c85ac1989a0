"""Sample streams for exit selection: synthetic Strong-Dominance generators and trace replay.

Synthetic records are binary. A record is generated by drawing the label and
the index ``J`` of the first exit that predicts it correctly; every exit from
``J`` on is correct and every earlier exit predicts the other label. With
``Pr{J <= k} = 1 - gammas[k]`` the marginal error rate of exit ``k`` is exactly
``gammas[k]``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from .core import ContractError, DimensionError, DomainError, ExitBanditError, PredictionRecord

# Records are generated in blocks of this size; part of the stream definition.
CHUNK = 4096


class TraceParseError(ExitBanditError, ValueError):
    """A trace file line could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class TraceDimensionError(TraceParseError, DimensionError):
    pass


@dataclass(frozen=True)
class EnvironmentSpec:
    gammas: tuple[float, ...]
    label_prior: float = 0.5
    violation_rate: float = 0.0
    seed: int = 0
    n_max: Optional[int] = None

    def __post_init__(self):
        g = tuple(float(x) for x in self.gammas)
        if not g:
            raise DimensionError("at least one exit error rate is required")
        if any(not 0.0 <= x <= 1.0 for x in g):
            raise DomainError(f"error rates must lie in [0, 1]: {g}")
        if any(b > a for a, b in zip(g, g[1:])):
            raise DomainError(f"error rates must be non-increasing along the cascade: {g}")
        if not 0.0 <= self.label_prior <= 1.0:
            raise DomainError(f"label_prior must lie in [0, 1]: {self.label_prior}")
        if not 0.0 <= self.violation_rate <= 1.0:
            raise DomainError(f"violation_rate must lie in [0, 1]: {self.violation_rate}")
        if self.n_max is not None and self.n_max < 0:
            raise DomainError("n_max must be non-negative")
        object.__setattr__(self, "gammas", g)
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def K(self) -> int:
        return len(self.gammas)

    def first_correct_probs(self) -> np.ndarray:
        """Distribution of the first correct exit over 1..K plus "never" (last entry)."""
        cdf = 1.0 - np.asarray(self.gammas)
        return np.diff(np.concatenate(([0.0], cdf, [1.0])))

    def effective_gammas(self) -> np.ndarray:
        """Exact marginal error rates once violations are injected."""
        p = self.first_correct_probs()
        K = self.K
        g = np.asarray(self.gammas, dtype=float).copy()
        for j in range(1, K):  # first correct exit j (1-based), j <= K-1
            share = self.violation_rate * p[j - 1] / (K - j)
            g[j:] += share
        return g


def _first_correct(spec: EnvironmentSpec, u: np.ndarray) -> np.ndarray:
    # J = smallest k with u < 1 - gamma_k; K+1 when no exit is correct
    cdf = 1.0 - np.asarray(spec.gammas)
    return np.searchsorted(cdf, u, side="right") + 1


def draw_sd_batch(spec: EnvironmentSpec, rng: np.random.Generator, size: int):
    """Draw ``size`` SD-consistent records.

    Returns ``(predictions, labels, first_correct)`` with predictions of shape
    ``(size, K)`` and ``first_correct`` 1-based (``K + 1`` means all wrong).
    """
    labels = (rng.random(size) < spec.label_prior).astype(np.int64)
    J = _first_correct(spec, rng.random(size))
    exits = np.arange(1, spec.K + 1)
    correct = exits[None, :] >= J[:, None]
    preds = np.where(correct, labels[:, None], 1 - labels[:, None])
    return preds, labels, J


def draw_sd_sample(spec: EnvironmentSpec, rng: np.random.Generator) -> PredictionRecord:
    preds, labels, _ = draw_sd_batch(spec, rng, 1)
    return PredictionRecord(tuple(preds[0].tolist()), int(labels[0]))


def inject_violations_batch(preds, labels, J, rate: float, rng: np.random.Generator):
    """Flip one exit after the first correct one, with probability ``rate`` per record.

    Modifies ``preds`` in place and returns it. Records that are all wrong or
    correct only at the last exit are never touched.
    """
    n, K = preds.shape
    hit = rng.random(n) < rate
    offset = rng.random(n)
    if rate <= 0.0 or K < 2:
        return preds
    eligible = hit & (J <= K - 1)
    rows = np.flatnonzero(eligible)
    if rows.size:
        span = K - J[rows]  # number of exits strictly after J
        # 0-based column of one of the exits J+1..K
        target = J[rows] + np.minimum((offset[rows] * span).astype(np.int64), span - 1)
        preds[rows, target] = 1 - labels[rows]
    return preds


def inject_violation(record: PredictionRecord, spec: EnvironmentSpec,
                     rng: np.random.Generator) -> PredictionRecord:
    if record.true_label is None:
        raise ContractError("violation injection needs the ground-truth label")
    if record.K != spec.K:
        raise DimensionError(f"record has {record.K} exits, spec has {spec.K}")
    b = record.correctness()
    J = b.index(1) + 1 if 1 in b else spec.K + 1
    preds = np.array([record.predictions], dtype=np.int64)
    y = record.true_label
    # corruption of a binary label; larger alphabets are not generated here
    inject_violations_batch(preds, np.array([y]), np.array([J]), spec.violation_rate, rng)
    return PredictionRecord(tuple(preds[0].tolist()), y)


class SyntheticEnvironment:
    """Deterministic record stream for an :class:`EnvironmentSpec`.

    The base draws and the violation coin flips use separate child streams of
    the spec seed, so changing only the violation rate keeps the underlying
    SD-consistent samples identical.
    """

    def __init__(self, spec: EnvironmentSpec):
        self.spec = spec

    @property
    def K(self) -> int:
        return self.spec.K

    def _rngs(self):
        base, inject = np.random.SeedSequence(self.spec.seed).spawn(2)
        return np.random.default_rng(base), np.random.default_rng(inject)

    def chunks(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        base_rng, inject_rng = self._rngs()
        remaining = self.spec.n_max
        while remaining is None or remaining > 0:
            size = CHUNK if remaining is None else min(CHUNK, remaining)
            # always draw full chunks so truncation does not shift the stream
            preds, labels, J = draw_sd_batch(self.spec, base_rng, CHUNK)
            inject_violations_batch(preds, labels, J, self.spec.violation_rate, inject_rng)
            yield preds[:size], labels[:size]
            if remaining is not None:
                remaining -= size

    def take(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """First ``n`` records as ``(predictions, labels)`` arrays."""
        if self.spec.n_max is not None and n > self.spec.n_max:
            raise DimensionError(f"stream holds {self.spec.n_max} records, {n} requested")
        parts_p, parts_l, have = [], [], 0
        if n <= 0:
            return np.zeros((0, self.K), dtype=np.int64), np.zeros(0, dtype=np.int64)
        for preds, labels in self.chunks():
            parts_p.append(preds)
            parts_l.append(labels)
            have += len(labels)
            if have >= n:
                break
        return np.concatenate(parts_p)[:n], np.concatenate(parts_l)[:n]

    def __iter__(self) -> Iterator[PredictionRecord]:
        for preds, labels in self.chunks():
            for p, y in zip(preds.tolist(), labels.tolist()):
                yield PredictionRecord(tuple(p), y)


@dataclass(frozen=True)
class TraceFile:
    """Recorded exit predictions, one row per sample.

    ``labels`` holds -1 where a record carries no ground truth.
    """

    K: int
    n_labels: int
    predictions: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        preds = np.asarray(self.predictions, dtype=np.int64).reshape(-1, self.K)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if len(labels) != len(preds):
            raise DimensionError("one label slot per record is required")
        preds.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "predictions", preds)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def labeled(self) -> bool:
        return bool(np.all(self.labels >= 0))

    def __iter__(self) -> Iterator[PredictionRecord]:
        for p, y in zip(self.predictions.tolist(), self.labels.tolist()):
            yield PredictionRecord(tuple(p), None if y < 0 else y)

    def records(self, shuffle_seed: Optional[int] = None) -> Iterator[PredictionRecord]:
        """Replay from the start, optionally in a seeded random order."""
        order = self.order(shuffle_seed)
        for i in order.tolist():
            y = int(self.labels[i])
            yield PredictionRecord(tuple(self.predictions[i].tolist()), None if y < 0 else y)

    def order(self, shuffle_seed: Optional[int] = None) -> np.ndarray:
        if shuffle_seed is None:
            return np.arange(len(self))
        return np.random.default_rng(shuffle_seed).permutation(len(self))

    def without_labels(self) -> "TraceFile":
        return TraceFile(self.K, self.n_labels, self.predictions,
                         np.full(len(self), -1, dtype=np.int64))

    @classmethod
    def from_records(cls, records: Sequence[PredictionRecord], K: Optional[int] = None,
                     n_labels: int = 2) -> "TraceFile":
        records = list(records)
        if K is None:
            if not records:
                raise DimensionError("K is required for an empty trace")
            K = records[0].K
        for i, r in enumerate(records):
            if r.K != K:
                raise DimensionError(f"record {i} has {r.K} predictions, expected {K}")
        preds = np.array([r.predictions for r in records], dtype=np.int64).reshape(-1, K)
        labels = np.array([-1 if r.true_label is None else r.true_label for r in records],
                          dtype=np.int64)
        return cls(K, n_labels, preds, labels)


def _parse_header(line: str) -> tuple[int, int]:
    fields = dict(part.split("=", 1) for part in line.split() if "=" in part)
    try:
        K, n_labels = int(fields["K"]), int(fields["labels"])
    except (KeyError, ValueError):
        raise TraceParseError(f"expected header 'K=<int> labels=<int>', got {line!r}", 1)
    if K < 1 or n_labels < 1:
        raise TraceParseError("K and labels must be positive", 1)
    return K, n_labels


def parse_trace(text: str) -> TraceFile:
    lines = text.split("\n")
    if not lines or not lines[0].strip():
        raise TraceParseError("missing header", 1)
    K, n_labels = _parse_header(lines[0])
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            values = [int(v) for v in line.strip().split(",")]
        except ValueError:
            raise TraceParseError(f"non-integer field in {line!r}", lineno)
        if len(values) != K + 1:
            raise TraceDimensionError(
                f"record has {len(values) - 1} predictions, header declares K={K}", lineno)
        if any(v < 0 or v >= n_labels for v in values):
            raise TraceParseError(f"label outside alphabet of size {n_labels}", lineno)
        rows.append(values)
    arr = np.array(rows, dtype=np.int64).reshape(-1, K + 1)
    return TraceFile(K, n_labels, arr[:, 1:], arr[:, 0])


def open_trace(path) -> TraceFile:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_trace(fh.read())


def format_trace(trace: TraceFile) -> str:
    if not trace.labeled:
        raise ContractError("the trace format requires a label on every record")
    out = [f"K={trace.K} labels={trace.n_labels}"]
    for y, p in zip(trace.labels.tolist(), trace.predictions.tolist()):
        out.append(",".join(map(str, [y, *p])))
    return "\n".join(out) + "\n"


def write_trace(trace: TraceFile, path) -> None:
    with open(os.fspath(path), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_trace(trace))


def empirical_gammas(trace: TraceFile) -> np.ndarray:
    if not trace.labeled:
        raise ContractError("empirical error rates need a label on every record")
    if len(trace) == 0:
        raise DimensionError("empty trace has no error rates")
    wrong = trace.predictions != trace.labels[:, None]
    return wrong.mean(axis=0)


def synthetic_trace(spec: EnvironmentSpec, n: int) -> TraceFile:
    preds, labels = SyntheticEnvironment(spec).take(n)
    return TraceFile(spec.K, 2, preds, labels)


CATEGORIES = ("sd_violation", "all_wrong", "all_correct", "good")


def planted_trace(counts: dict, K: int, seed: int = 0) -> TraceFile:
    """Binary trace holding exactly ``counts[c]`` records of each joint-prediction class.

    Patterns within a class are drawn at random; record order is shuffled.
    """
    if K < 2 and (counts.get("sd_violation", 0) or counts.get("good", 0)):
        raise DomainError("violating and good records need at least two exits")
    unknown = set(counts) - set(CATEGORIES)
    if unknown:
        raise DomainError(f"unknown categories: {sorted(unknown)}")
    rng = np.random.default_rng(seed)
    rows = []
    for cat in CATEGORIES:
        for _ in range(int(counts.get(cat, 0))):
            if cat == "all_correct":
                b = np.ones(K, dtype=np.int64)
            elif cat == "all_wrong":
                b = np.zeros(K, dtype=np.int64)
            elif cat == "good":
                J = rng.integers(2, K + 1)  # first correct exit, not the first one
                b = (np.arange(1, K + 1) >= J).astype(np.int64)
            else:
                b = rng.integers(0, 2, size=K)
                while not _violates(b):
                    b = rng.integers(0, 2, size=K)
            y = int(rng.integers(0, 2))
            rows.append((y, np.where(b == 1, y, 1 - y)))
    order = rng.permutation(len(rows))
    labels = np.array([rows[i][0] for i in order], dtype=np.int64)
    preds = np.array([rows[i][1] for i in order], dtype=np.int64).reshape(-1, K)
    return TraceFile(K, 2, preds, labels)


def _violates(b) -> bool:
    seen = False
    for v in b:
        if v:
            seen = True
        elif seen:
            return True
    return False
