"""Shared domain types: bias vectors, codes, coalitions and per-user state.

Segment indices are 1-based throughout (``i`` runs over ``1..length``), and so
are user indices in coalitions and decision events. Arrays are 0-based
internally; convert with ``user - 1``.

All scores are natural-log quantities (nats).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class InstanceError(ValueError):
    """Raised when a combination of bias vector, code and coalition is inconsistent."""


class _CertainlyInnocent:
    """Sentinel returned by score functions for the "minus infinity" case.

    It never takes part in arithmetic: engines turn it into a terminal
    ``certainly_innocent`` transition instead of adding it to a score.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "CERTAINLY_INNOCENT"

    def __reduce__(self):
        return (_CertainlyInnocent, ())


CERTAINLY_INNOCENT = _CertainlyInnocent()


def is_certainly_innocent(value) -> bool:
    return value is CERTAINLY_INNOCENT


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class BiasVector:
    """Per-segment probabilities of emitting symbol 1, each strictly inside (0, 1)."""

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.values, float)
        if arr.ndim != 1 or arr.size < 1:
            raise InstanceError("precondition violated: bias vector must be 1-D with length >= 1")
        if not np.all((arr > 0.0) & (arr < 1.0)):
            raise InstanceError("precondition violated: bias entry at boundary (every p_i must lie in (0,1))")
        object.__setattr__(self, "values", arr)

    @property
    def length(self) -> int:
        return int(self.values.size)

    def __len__(self) -> int:
        return self.length

    def __getitem__(self, i):
        return self.values[i]

    def __eq__(self, other) -> bool:
        return isinstance(other, BiasVector) and np.array_equal(self.values, other.values)


@dataclass(frozen=True, eq=False)
class CodeMatrix:
    """Binary code: ``rows[j]`` is user ``j+1``'s codeword of length ``length``."""

    rows: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.rows)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InstanceError("precondition violated: code must be an n x length matrix with n, length >= 1")
        if not np.all((arr == 0) | (arr == 1)):
            raise InstanceError("precondition violated: code entries must be 0 or 1")
        object.__setattr__(self, "rows", _frozen_array(arr, np.uint8))

    @property
    def n(self) -> int:
        return int(self.rows.shape[0])

    @property
    def length(self) -> int:
        return int(self.rows.shape[1])

    def column(self, i: int) -> np.ndarray:
        """Symbols of all users in 1-based segment ``i``."""
        return self.rows[:, i - 1]

    def without_user(self, user: int) -> "CodeMatrix":
        return CodeMatrix(np.delete(self.rows, user - 1, axis=0))

    def __eq__(self, other) -> bool:
        return isinstance(other, CodeMatrix) and np.array_equal(self.rows, other.rows)


@dataclass(frozen=True)
class CoalitionSpec:
    """Colluding users (1-based), plus the decoder's assumed bound ``c0``."""

    members: frozenset
    c0: int

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(int(m) for m in self.members))
        if self.c < 1:
            raise InstanceError("precondition violated: coalition must be non-empty (c >= 1)")
        if self.c0 < self.c:
            raise InstanceError(f"precondition violated: c0 >= c (got c0={self.c0}, c={self.c})")

    @property
    def c(self) -> int:
        return len(self.members)

    def sorted_members(self) -> list:
        return sorted(self.members)


def validate_instance(bias: BiasVector, code: CodeMatrix, coalition: CoalitionSpec) -> None:
    """Check the cross-type invariants; raise :class:`InstanceError` on the first violation.

    Per-type invariants (open-interval biases, binary entries, ``c <= c0``) are
    enforced at construction, so this only checks how the three fit together.
    """
    if code.length != bias.length:
        raise InstanceError(
            f"dimension mismatch: code length {code.length} != bias length {bias.length}"
        )
    bad = [m for m in coalition.members if not 1 <= m <= code.n]
    if bad:
        raise InstanceError(f"coalition index out of range 1..{code.n}: {sorted(bad)}")
    if coalition.c0 > code.n:
        raise InstanceError(f"precondition violated: c0 <= n (got c0={coalition.c0}, n={code.n})")


class Status(enum.Enum):
    ACTIVE = "active"
    ACCUSED = "accused"
    ACQUITTED = "acquitted"
    CERTAINLY_INNOCENT = "certainly_innocent"


class StateTransitionError(RuntimeError):
    pass


@dataclass
class UserState:
    """Mutable per-user tracing state, confined to one trial."""

    cumulative_score: float = 0.0
    status: Status = Status.ACTIVE
    decided_at: Optional[int] = None
    disconnect_pending_until: Optional[int] = None

    @property
    def active(self) -> bool:
        return self.status is Status.ACTIVE

    def _finish(self, status: Status, segment: int) -> None:
        if self.status is not Status.ACTIVE:
            raise StateTransitionError(
                f"user already {self.status.value} at segment {self.decided_at}; cannot become {status.value}"
            )
        self.status = status
        self.decided_at = segment

    def accuse(self, segment: int, delay: int = 0) -> None:
        self._finish(Status.ACCUSED, segment)
        self.disconnect_pending_until = segment + delay

    def acquit(self, segment: int) -> None:
        self._finish(Status.ACQUITTED, segment)

    def certify_innocent(self, segment: int) -> None:
        self._finish(Status.CERTAINLY_INNOCENT, segment)


@dataclass
class OvershootStats:
    """Distances (nats) by which score paths jumped past a boundary when crossing it."""

    samples: list = field(default_factory=list)

    def add(self, value: float) -> None:
        self.samples.append(float(value))

    def extend(self, other: "OvershootStats") -> None:
        self.samples.extend(other.samples)

    @property
    def count(self) -> int:
        return len(self.samples)

    @property
    def mean(self) -> Optional[float]:
        return float(np.mean(self.samples)) if self.samples else None
