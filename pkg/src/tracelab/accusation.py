"""Stopping rules for sequential tracing.

Engines compare raw cumulative scores with an affine boundary. Any score
normalisation happens upstream, in the scoring module. The non-adaptive
scheme, sequential Tardos and Wald's SPRT then differ only in the
:class:`Boundary` they are given:

* non-adaptive: no crossing lines, one decision at the truncation point;
* sequential Tardos: a decreasing upper line ending at the truncation point;
* Wald: horizontal lines, optionally truncated.

Ties: crossings are strict (``score > upper``, ``score < lower``) while the
final forced decision is inclusive (``score >= eta_final`` accuses).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, TextIO

import numpy as np

from .model import (
    CERTAINLY_INNOCENT,
    OvershootStats,
    Status,
    UserState,
)

SCHEMES = ("non_adaptive", "sequential_tardos", "wald_sprt", "truncated_sprt")
VARIANTS = ("aggressive", "conservative", "upper_only")


class EngineError(RuntimeError):
    pass


@dataclass(frozen=True)
class Line:
    """Affine threshold ``intercept + slope * i0`` in nats."""

    intercept: float
    slope: float = 0.0

    def __call__(self, i0):
        return self.intercept + self.slope * i0


@dataclass(frozen=True)
class Truncation:
    length: int
    eta_final: float

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("precondition violated: truncation length >= 1")


@dataclass(frozen=True)
class Boundary:
    upper: Optional[Line] = None
    lower: Optional[Line] = None
    truncation: Optional[Truncation] = None

    def __post_init__(self):
        if self.upper is not None and self.lower is not None:
            end = self.truncation.length if self.truncation else None
            # affine lines: checking both ends of the range suffices
            for i0 in (0, end) if end is not None else (0,):
                if not self.lower(i0) < self.upper(i0):
                    raise ValueError(f"precondition violated: lower < upper at i0={i0}")
            if end is None and self.upper.slope < self.lower.slope:
                raise ValueError("precondition violated: untruncated boundaries must not converge")

    def truncated(self, length: int, eta_final: float) -> "Boundary":
        return Boundary(self.upper, self.lower, Truncation(length, eta_final))

    def as_dict(self) -> dict:
        def line(l):
            return None if l is None else {"intercept": l.intercept, "slope": l.slope}

        trunc = None
        if self.truncation is not None:
            trunc = {"length": self.truncation.length, "eta_final": self.truncation.eta_final}
        return {"upper": line(self.upper), "lower": line(self.lower), "truncation": trunc}


def wald_thresholds(eps1: float, eps2: float, variant: str = "upper_only") -> Boundary:
    """Horizontal SPRT thresholds from per-user error probabilities.

    ``aggressive``: eta0 = ln(eps2/(1-eps1)), eta1 = ln((1-eps2)/eps1).
    ``conservative``: eta0 = -ln(1/eps2), eta1 = ln(1/eps1).
    ``upper_only``: no lower threshold, eta1 = ln(1/eps1); ``eps2`` is ignored.
    """
    variant = variant.replace("-", "_")
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {', '.join(VARIANTS)}")
    if not 0.0 < eps1 < 1.0:
        raise ValueError("precondition violated: 0 < eps1 < 1")
    if not 0.0 <= eps2 < 1.0:
        raise ValueError("precondition violated: 0 <= eps2 < 1")
    if variant == "upper_only":
        return Boundary(upper=Line(math.log(1.0 / eps1)))
    if eps2 == 0.0:
        raise ValueError(f"precondition violated: eps2 = 0 is only allowed with variant upper_only (got {variant})")
    if variant == "aggressive":
        return Boundary(upper=Line(math.log((1.0 - eps2) / eps1)), lower=Line(math.log(eps2 / (1.0 - eps1))))
    return Boundary(upper=Line(math.log(1.0 / eps1)), lower=Line(-math.log(1.0 / eps2)))


def per_user_epsilons(eps1: float, eps2: float, n: int, c: int) -> tuple:
    """Split global error targets over users: (eps1/n, eps2/c)."""
    if n < 1 or c < 1:
        raise ValueError("precondition violated: n >= 1 and c >= 1")
    return eps1 / n, eps2 / c


def tardos_boundary(length: int, eta_final: float, slope: float) -> Boundary:
    """Sequential Tardos accusation line through ``(length, eta_final)``.

    ``slope`` is the innocent drift and must be negative. ``-inf`` (a decoder
    with certainly-innocent outcomes) makes the line vertical, leaving only
    the decision at ``length``.
    """
    if length < 1:
        raise ValueError("precondition violated: length >= 1")
    if math.isnan(slope) or slope >= 0.0:
        raise ValueError(f"precondition violated: slope < 0 (innocent drift), got {slope}")
    trunc = Truncation(length, eta_final)
    if math.isinf(slope):
        return Boundary(truncation=trunc)
    return Boundary(upper=Line(eta_final - slope * length, slope), truncation=trunc)


def halve_epsilons(eps1: float, eps2: float) -> tuple:
    """Non-adaptive error targets that make the sequential scheme meet (eps1, eps2) overall."""
    if not (0.0 < eps1 < 1.0 and 0.0 < eps2 < 1.0):
        raise ValueError("precondition violated: eps1, eps2 in (0,1)")
    return eps1 / 2.0, eps2 / 2.0


@dataclass(frozen=True)
class ErrorBound:
    false_positive: float
    false_negative: float


def sequential_error_bound(eps1: float, eps2: float) -> ErrorBound:
    """Error bounds of the sequential Tardos scheme built from non-adaptive
    parameters (eps1, eps2): at most 2*eps1 false positives and 2*eps2 missed colluders."""
    if not (0.0 < eps1 < 0.5 and 0.0 < eps2 < 0.5):
        raise ValueError("precondition violated: eps1, eps2 in (0, 1/2)")
    return ErrorBound(2.0 * eps1, 2.0 * eps2)


@dataclass(frozen=True)
class EngineConfig:
    boundary: Boundary
    scheme: str = "wald_sprt"
    delay: int = 0
    tainting: bool = False

    def __post_init__(self):
        b = self.boundary
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {', '.join(SCHEMES)}")
        if self.delay < 0:
            raise ValueError("precondition violated: delay B >= 0")
        if self.scheme == "non_adaptive" and (b.truncation is None or b.lower is not None or b.upper is not None):
            raise ValueError("precondition violated: non_adaptive needs truncation only (no crossing lines)")
        if self.scheme == "sequential_tardos" and (b.truncation is None or b.lower is not None):
            raise ValueError("precondition violated: sequential_tardos needs truncation and no lower boundary")
        if self.scheme in ("wald_sprt", "truncated_sprt") and b.upper is None:
            raise ValueError("precondition violated: wald_sprt requires an upper boundary")
        if self.scheme == "truncated_sprt" and b.truncation is None:
            raise ValueError("precondition violated: truncated_sprt requires truncation")
        if self.scheme == "wald_sprt" and b.truncation is not None:
            raise ValueError("precondition violated: wald_sprt is untruncated; use truncated_sprt")


ACCUSED = "accused"
ACQUITTED = "acquitted"
CERTAIN = "certainly_innocent"
FORCED = "forced_at_truncation"


@dataclass(frozen=True)
class DecisionEvent:
    """One terminal decision. ``user`` and ``segment`` are 1-based.

    ``overshoot`` is set for boundary crossings only; ``accused`` tells the
    outcome (needed for forced decisions at truncation).
    """

    user: int
    segment: int
    kind: str
    accused: bool
    overshoot: Optional[float] = None


def _taint_active(states: Sequence[UserState], i0: int) -> bool:
    return any(
        s.status is Status.ACCUSED and s.decided_at < i0 <= s.disconnect_pending_until
        for s in states
    )


def engine_step(config: EngineConfig, states: List[UserState], segment_scores: Sequence, i0: int) -> List[DecisionEvent]:
    """Process segment ``i0`` for every user, mutating ``states`` in place.

    ``segment_scores[j]`` is a float or ``CERTAINLY_INNOCENT``. This is the
    straightforward per-user reference; :class:`AccusationEngine` is the
    vectorised equivalent used by the simulator.
    """
    b = config.boundary
    if b.truncation is not None and not 1 <= i0 <= b.truncation.length:
        raise EngineError(f"segment index {i0} outside 1..{b.truncation.length}")
    if not any(s.active for s in states):
        raise EngineError("stepping a finished engine: no active users")
    tainted = config.tainting and _taint_active(states, i0)
    events = []
    for j, (state, s) in enumerate(zip(states, segment_scores)):
        if not state.active:
            continue
        if tainted:
            s = 0.0
        if s is CERTAINLY_INNOCENT:
            state.certify_innocent(i0)
            events.append(DecisionEvent(j + 1, i0, CERTAIN, False))
            continue
        state.cumulative_score += float(s)
        score = state.cumulative_score
        if b.upper is not None and score > b.upper(i0):
            state.accuse(i0, config.delay)
            events.append(DecisionEvent(j + 1, i0, ACCUSED, True, score - b.upper(i0)))
        elif b.lower is not None and score < b.lower(i0):
            state.acquit(i0)
            events.append(DecisionEvent(j + 1, i0, ACQUITTED, False, b.lower(i0) - score))
    if b.truncation is not None and i0 == b.truncation.length:
        for j, state in enumerate(states):
            if state.active:
                guilty = state.cumulative_score >= b.truncation.eta_final
                if guilty:
                    state.accuse(i0, config.delay)
                else:
                    state.acquit(i0)
                events.append(DecisionEvent(j + 1, i0, FORCED, guilty))
    return events


_ACTIVE, _ACCUSED, _ACQUITTED, _CERTAIN = 0, 1, 2, 3
_STATUS = {_ACTIVE: Status.ACTIVE, _ACCUSED: Status.ACCUSED,
           _ACQUITTED: Status.ACQUITTED, _CERTAIN: Status.CERTAINLY_INNOCENT}


class AccusationEngine:
    """Array-backed accusation engine for ``n`` users, one per trial."""

    def __init__(self, config: EngineConfig, n: int):
        self.config = config
        self.n = n
        self.scores = np.zeros(n)
        self.status = np.zeros(n, dtype=np.int8)
        self.decided_at = np.zeros(n, dtype=np.int64)
        self.last_segment = 0
        self.taint_until = 0
        self.overshoots = OvershootStats()
        self._n_active = n

    @property
    def finished(self) -> bool:
        t = self.config.boundary.truncation
        return self._n_active == 0 or (t is not None and self.last_segment >= t.length)

    def tainted(self, i0: int) -> bool:
        return self.config.tainting and i0 <= self.taint_until

    def step(self, scores: np.ndarray, certain: Optional[np.ndarray], i0: int) -> List[DecisionEvent]:
        """Add one segment of scores; ``certain`` flags certainly-innocent outcomes."""
        if self.finished:
            raise EngineError("stepping a finished engine")
        if i0 <= self.last_segment:
            raise EngineError(f"segment index out of order: {i0} after {self.last_segment}")
        b = self.config.boundary
        if b.truncation is not None and i0 > b.truncation.length:
            raise EngineError(f"segment index {i0} beyond truncation at {b.truncation.length}")
        self.last_segment = i0
        active = self.status == _ACTIVE
        events = []
        if not self.tainted(i0):
            if certain is not None:
                hit = np.flatnonzero(certain & active)
                if hit.size:
                    self.status[hit] = _CERTAIN
                    self.decided_at[hit] = i0
                    active[hit] = False
                    events.extend(DecisionEvent(int(j) + 1, i0, CERTAIN, False) for j in hit)
            self.scores[active] += scores[active]
        if b.upper is not None:
            up = b.upper(i0)
            hit = np.flatnonzero(active & (self.scores > up))
            if hit.size:
                self.status[hit] = _ACCUSED
                self.decided_at[hit] = i0
                active[hit] = False
                self.taint_until = max(self.taint_until, i0 + self.config.delay)
                for j in hit:
                    over = float(self.scores[j] - up)
                    self.overshoots.add(over)
                    events.append(DecisionEvent(int(j) + 1, i0, ACCUSED, True, over))
        if b.lower is not None:
            low = b.lower(i0)
            hit = np.flatnonzero(active & (self.scores < low))
            if hit.size:
                self.status[hit] = _ACQUITTED
                self.decided_at[hit] = i0
                active[hit] = False
                for j in hit:
                    over = float(low - self.scores[j])
                    self.overshoots.add(over)
                    events.append(DecisionEvent(int(j) + 1, i0, ACQUITTED, False, over))
        events.sort(key=lambda e: e.user)
        if b.truncation is not None and i0 == b.truncation.length:
            for j in np.flatnonzero(active):
                guilty = bool(self.scores[j] >= b.truncation.eta_final)
                self.status[j] = _ACCUSED if guilty else _ACQUITTED
                self.decided_at[j] = i0
                events.append(DecisionEvent(int(j) + 1, i0, FORCED, guilty))
            active[:] = False
        self._n_active = int(np.count_nonzero(active))
        return events

    def states(self) -> List[UserState]:
        """Snapshot as :class:`UserState` objects."""
        out = []
        for j in range(self.n):
            st = _STATUS[int(self.status[j])]
            at = int(self.decided_at[j]) if st is not Status.ACTIVE else None
            pending = at + self.config.delay if st is Status.ACCUSED else None
            out.append(UserState(float(self.scores[j]), st, at, pending))
        return out


EVENT_FIELDS = ("trial", "user", "segment", "kind", "overshoot")


def write_events_csv(stream: TextIO, rows: Iterable[tuple]) -> None:
    """Write ``(trial, DecisionEvent)`` pairs as ``trial,user,segment,kind,overshoot``.

    Forced decisions at truncation are written as ``forced_accused`` or
    ``forced_acquitted`` so that the outcome survives the export.
    """
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(EVENT_FIELDS)
    for trial, ev in rows:
        kind = ev.kind if ev.kind != FORCED else ("forced_accused" if ev.accused else "forced_acquitted")
        over = "" if ev.overshoot is None else f"{ev.overshoot:.17g}"
        w.writerow((trial, ev.user, ev.segment, kind, over))
