"""Per-segment score functions and their innocent/guilty moments.

A score function maps (user symbol x, pirate symbol y, bias p) to a log-score in
nats, or to :data:`~tracelab.model.CERTAINLY_INNOCENT` when (x, y) is impossible
for a colluder. Decoders are parametrised by ``c0``, the tracer's assumed
coalition size, independently of the true size the channel runs at.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel import CollusionChannel, binomial_pmf, make_attack
from .encoder import BiasDistribution
from .model import CERTAINLY_INNOCENT

DECODERS = ("symmetric", "interleaving_ll", "all_one", "generic_np")

LN2 = math.log(2.0)


def _check_p(p: float) -> None:
    if not 0.0 < p < 1.0:
        raise ValueError("precondition violated: bias p at boundary (0 < p < 1 required)")


def symmetric_score(x: int, y: int, p: float) -> float:
    """Symmetrised Tardos score: +-sqrt(p/(1-p)) when x = 0, +-sqrt((1-p)/p) when x = 1,
    positive iff x == y."""
    _check_p(p)
    mag = math.sqrt((1.0 - p) / p) if x else math.sqrt(p / (1.0 - p))
    return mag if x == y else -mag


def interleaving_ll_score(x: int, y: int, p: float, c0: int):
    """Log-likelihood ratio against the interleaving attack at coalition size ``c0``."""
    _check_p(p)
    if c0 < 1:
        raise ValueError("precondition violated: c0 >= 1")
    if x != y:
        # c0 = 1 means y copies x, so a mismatch rules the user out
        return CERTAINLY_INNOCENT if c0 == 1 else math.log1p(-1.0 / c0)
    if x:
        return math.log1p((1.0 - p) / (c0 * p))
    return math.log1p(p / (c0 * (1.0 - p)))


def all_one_score(x: int, y: int, c0: int, printed: bool = False):
    """Group-testing decoder for the all-1 attack with bias ~ (ln 2)/c0.

    The (x, y) = (0, 1) entry defaults to ln(2 - 2^(1/c0)), the first-order
    form of the exact likelihood ratio; ``printed=True`` gives the
    ln(2 - 2^(-1/c0)) variant instead, whose likelihood ratio does not average
    to one under the innocent hypothesis.
    """
    if c0 < 1:
        raise ValueError("precondition violated: c0 >= 1")
    if x and not y:
        return CERTAINLY_INNOCENT
    if x:
        return LN2
    if not y:
        return LN2 / c0
    if c0 == 1 and not printed:
        # exact: a lone colluder holding 0 never outputs 1
        return CERTAINLY_INNOCENT
    return math.log(2.0 - 2.0 ** ((-1.0 if printed else 1.0) / c0))


def _guilty_given_x(channel: CollusionChannel, p: float) -> np.ndarray:
    """``h[x, y] = P(Y = y | p, X_colluder = x)`` with the other c-1 colluders i.i.d."""
    w = binomial_pmf(channel.c - 1, p)
    theta = np.asarray(channel.theta)
    h = np.empty((2, 2))
    for x in (0, 1):
        # both columns summed directly so that impossible outcomes are exactly 0
        h[x, 1] = float(np.dot(w, theta[x:x + channel.c]))
        h[x, 0] = float(np.dot(w, 1.0 - theta[x:x + channel.c]))
    return h


def _output_dist(channel: CollusionChannel, p: float) -> np.ndarray:
    w = binomial_pmf(channel.c, p)
    theta = np.asarray(channel.theta)
    return np.array([float(np.dot(w, 1.0 - theta)), float(np.dot(w, theta))])


def joint_distributions(channel: CollusionChannel, p: float) -> tuple:
    """``(f1, f0)``: 2x2 arrays of f(x, y | p, H1) and f(x, y | p, H0), indexed [x, y]."""
    _check_p(p)
    px = np.array([1.0 - p, p])
    f0 = np.outer(px, _output_dist(channel, p))
    f1 = px[:, None] * _guilty_given_x(channel, p)
    return f1, f0


def _np_table(channel: CollusionChannel, p: float) -> tuple:
    # P(x|p) cancels between numerator and denominator, so it is left out
    h = _guilty_given_x(channel, p)
    py = _output_dist(channel, p)
    values = np.zeros((2, 2))
    certain = np.zeros((2, 2), dtype=bool)
    for x in (0, 1):
        for y in (0, 1):
            num, den = h[x, y], py[y]
            if num <= 0.0 and den <= 0.0:
                raise ValueError(f"invalid channel/bias: f(x={x}, y={y}) is zero under both hypotheses")
            if num <= 0.0:
                certain[x, y] = True
            elif den <= 0.0:
                raise ValueError(f"invalid channel/bias: f(x={x}, y={y}|H0) = 0 while f(.|H1) > 0")
            else:
                values[x, y] = math.log(num / den)
    return values, certain


def generic_np_score(x: int, y: int, p: float, channel: CollusionChannel):
    """Neyman-Pearson log-likelihood ratio ln f(x,y|p,H1) / f(x,y|p,H0) for ``channel``."""
    _check_p(p)
    values, certain = _np_table(channel, p)
    return CERTAINLY_INNOCENT if certain[x, y] else float(values[x, y])


@dataclass(frozen=True)
class ScoreFunction:
    """A decoder choice.

    ``kind`` is one of :data:`DECODERS`; ``attack`` names the channel the
    generic Neyman-Pearson decoder is built against (instantiated at ``c0``).
    """

    kind: str
    c0: int = 1
    attack: Optional[str] = None
    printed: bool = False
    channel: Optional[CollusionChannel] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in DECODERS:
            raise ValueError(f"unknown decoder {self.kind!r}; expected one of {', '.join(DECODERS)}")
        if self.c0 < 1:
            raise ValueError("precondition violated: c0 >= 1")
        if self.kind == "generic_np":
            if self.channel is None:
                if self.attack is None:
                    raise ValueError("generic_np decoder needs an attack or channel")
                object.__setattr__(self, "channel", make_attack(self.attack, self.c0))
            elif self.channel.c != self.c0:
                raise ValueError(f"generic_np channel has c={self.channel.c}, decoder c0={self.c0}")

    def table(self, p: float) -> tuple:
        """Scores for all four (x, y) at bias ``p``: ``(values, certain)``, both 2x2.

        Entries flagged in ``certain`` are certainly-innocent; their value is 0
        and must not be used.
        """
        if self.kind == "generic_np":
            _check_p(p)
            return _np_table(self.channel, p)
        values = np.zeros((2, 2))
        certain = np.zeros((2, 2), dtype=bool)
        for x in (0, 1):
            for y in (0, 1):
                s = self(x, y, p)
                if s is CERTAINLY_INNOCENT:
                    certain[x, y] = True
                else:
                    values[x, y] = s
        return values, certain

    def scores(self, x: np.ndarray, y: np.ndarray, p: np.ndarray) -> tuple:
        """Vectorised scoring of aligned arrays: ``(values, certain)``."""
        x = np.asarray(x, dtype=bool)
        y = np.asarray(y, dtype=bool)
        p = np.asarray(p, dtype=float)
        if np.any((p <= 0.0) | (p >= 1.0)):
            raise ValueError("precondition violated: bias p at boundary (0 < p < 1 required)")
        certain = np.zeros(x.shape, dtype=bool)
        match = x == y
        if self.kind == "symmetric":
            mag = np.where(x, np.sqrt((1.0 - p) / p), np.sqrt(p / (1.0 - p)))
            return np.where(match, mag, -mag), certain
        if self.kind == "interleaving_ll":
            same = np.where(x, np.log1p((1.0 - p) / (self.c0 * p)), np.log1p(p / (self.c0 * (1.0 - p))))
            if self.c0 == 1:
                return np.where(match, same, 0.0), ~match
            return np.where(match, same, math.log1p(-1.0 / self.c0)), certain
        if self.kind == "all_one":
            table, cert = self.table(0.5)
            return table[x.astype(int), y.astype(int)], cert[x.astype(int), y.astype(int)]
        values = np.zeros(x.shape)
        for k in np.ndindex(*x.shape):
            table, cert = self.table(float(p[k]))
            values[k] = table[int(x[k]), int(y[k])]
            certain[k] = cert[int(x[k]), int(y[k])]
        return values, certain

    def __call__(self, x: int, y: int, p: float):
        if self.kind == "symmetric":
            return symmetric_score(x, y, p)
        if self.kind == "interleaving_ll":
            return interleaving_ll_score(x, y, p, self.c0)
        if self.kind == "all_one":
            return all_one_score(x, y, self.c0, printed=self.printed)
        return generic_np_score(x, y, p, self.channel)


@dataclass(frozen=True)
class SegmentMoments:
    """Per-segment score moments (nats).

    Innocent moments are taken over the finite outcomes only; ``p0_certain``
    is the innocent probability of a certainly-innocent event (a point mass
    at minus infinity). ``p1_certain`` is the same for colluders and is zero
    whenever decoder and channel are matched.
    """

    mu0: float
    sigma0: float
    mu1: float = math.nan
    sigma1: float = math.nan
    p0_certain: float = 0.0
    p1_certain: float = 0.0


def _raw_moments(weights: np.ndarray, values: np.ndarray, certain: np.ndarray) -> np.ndarray:
    finite = ~certain
    w = weights[finite]
    v = values[finite]
    return np.array([w.sum(), (w * v).sum(), (w * v * v).sum(), weights[certain].sum()])


def _finish(raw: np.ndarray) -> tuple:
    mass, s1, s2, pc = raw
    if mass <= 0.0:
        return math.nan, math.nan, float(pc)
    mu = s1 / mass
    var = max(s2 / mass - mu * mu, 0.0)
    return float(mu), math.sqrt(var), float(pc)


def _raw_pair(score: ScoreFunction, channel: Optional[CollusionChannel], p: float, y: Optional[int]) -> np.ndarray:
    values, certain = score.table(p)
    px = np.array([1.0 - p, p])
    if y is not None:
        w0 = np.zeros((2, 2))
        w0[:, y] = px
        raw0 = _raw_moments(w0, values, certain)
        if channel is None:
            return np.concatenate([raw0, np.full(4, math.nan)])
        f1, _ = joint_distributions(channel, p)
        w1 = np.zeros((2, 2))
        total = f1[:, y].sum()
        if total <= 0.0:
            return np.concatenate([raw0, np.zeros(4)])
        w1[:, y] = f1[:, y] / total
        return np.concatenate([raw0, _raw_moments(w1, values, certain)])
    if channel is None:
        raise ValueError("unconditional moments need the collusion channel")
    f1, f0 = joint_distributions(channel, p)
    return np.concatenate([_raw_moments(f0, values, certain), _raw_moments(f1, values, certain)])


def _to_moments(raw: np.ndarray) -> SegmentMoments:
    mu0, s0, pc0 = _finish(raw[:4])
    mu1, s1, pc1 = _finish(raw[4:]) if not np.isnan(raw[4]) else (math.nan, math.nan, 0.0)
    return SegmentMoments(mu0, s0, mu1, s1, pc0, pc1)


def segment_moments(score: ScoreFunction, channel: Optional[CollusionChannel], p: float,
                    y: Optional[int] = None) -> SegmentMoments:
    """Exact moments at bias ``p`` by enumerating (x, y).

    With ``y`` given the moments are conditional on the observed pirate
    symbol; innocent moments then do not depend on the channel (x is
    independent of y for innocents), so ``channel`` may be ``None``.
    """
    _check_p(p)
    return _to_moments(_raw_pair(score, channel, p, y))


def averaged_moments(score: ScoreFunction, channel: CollusionChannel, dist: BiasDistribution,
                     epsabs: float = 1e-12) -> SegmentMoments:
    """Unconditional moments averaged over the bias distribution by quadrature."""
    def raw(p):
        p = min(max(p, 1e-15), 1.0 - 1e-15)
        return _raw_pair(score, channel, p, None)

    return _to_moments(np.asarray(dist.expect(raw, epsabs=epsabs)))


def normalize_scores(raw, moments: SegmentMoments):
    """Centre and scale by the innocent moments: (s - mu0) / sigma0.

    A degenerate segment (sigma0 == 0) carries no information and maps to 0.
    """
    arr = np.asarray(raw, dtype=float)
    if moments.sigma0 == 0.0:
        out = np.zeros_like(arr)
    else:
        out = (arr - moments.mu0) / moments.sigma0
    return float(out) if out.ndim == 0 else out
