"""Closed-form and quadrature predictions for sequential tracing.

Everything is computed in nats; the bits-based forms (mutual information in
bits, log2 n) are converted at the function boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import CollusionChannel
from .encoder import BiasDistribution
from .scoring import joint_distributions


def _xlogy(a: float, b: float) -> float:
    return 0.0 if a == 0.0 else a * math.log(a / b)


def kl_divergence(a: float, b: float) -> float:
    """Binary relative entropy d(a || b) = a ln(a/b) + (1-a) ln((1-a)/(1-b)), in nats."""
    if not 0.0 <= a <= 1.0:
        raise ValueError("precondition violated: a in [0, 1]")
    if not 0.0 <= b <= 1.0:
        raise ValueError("precondition violated: b in (0, 1)")
    if b in (0.0, 1.0):
        if a == b:
            return 0.0
        raise ValueError(f"precondition violated: b in (0, 1) unless a == b (got a={a}, b={b})")
    return max(_xlogy(a, b) + _xlogy(1.0 - a, 1.0 - b), 0.0)


@dataclass(frozen=True)
class TerminationPrediction:
    """Expected decision times (segments). H0 values are ``None`` without a lower boundary."""

    expected_T_h0: Optional[float]
    expected_T_h1: float
    approx_T_h0: Optional[float]
    approx_T_h1: float


def expected_termination(eps1: float, eps2: float, mu0: float, mu1: float) -> TerminationPrediction:
    """Wald's expected stopping times for per-user error probabilities (eps1, eps2).

    Exact forms: E(T|H0) = d(eps1 || 1-eps2)/(-mu0), E(T|H1) = d(eps2 || 1-eps1)/mu1.
    Approximations drop the small-probability terms: ln(1/eps2)/(-mu0) and
    ln(1/eps1)/mu1. With eps2 = 0 there is no acquittal boundary and the H0
    prediction is absent.
    """
    if not (mu0 < 0.0 < mu1):
        raise ValueError(f"precondition violated: mu0 < 0 < mu1 (got mu0={mu0}, mu1={mu1})")
    if not (0.0 <= eps1 < 1.0 and 0.0 <= eps2 < 1.0) or (eps1 == 0.0 and eps2 == 0.0):
        raise ValueError("precondition violated: eps1, eps2 in [0, 1), not both 0")
    if eps1 == 0.0:
        raise ValueError("precondition violated: eps1 > 0 (an accusation boundary is required)")
    t1 = kl_divergence(eps2, 1.0 - eps1) / mu1
    a1 = math.log(1.0 / eps1) / mu1
    if eps2 == 0.0:
        return TerminationPrediction(None, t1, None, a1)
    t0 = kl_divergence(eps1, 1.0 - eps2) / (-mu0)
    a0 = math.log(1.0 / eps2) / (-mu0)
    return TerminationPrediction(t0, t1, a0, a1)


def asymptotic_code_length(c: int, n: float) -> float:
    """2 c^2 ln n segments."""
    if c < 1 or n < 2:
        raise ValueError("precondition violated: c >= 1 and n >= 2")
    return 2.0 * c * c * math.log(n)


def _mutual_info(channel: CollusionChannel, p: float) -> float:
    f1, f0 = joint_distributions(channel, p)
    # f0 is the product of the marginals of (X1, Y) under H1
    mask = f1 > 0.0
    return float(np.sum(f1[mask] * np.log(f1[mask] / f0[mask])))


@dataclass(frozen=True)
class InformationRate:
    nats: float

    @property
    def bits(self) -> float:
        return self.nats / math.log(2.0)

    def min_expected_time(self, n: float) -> float:
        """Lower bound log2(n) / E_P I(X1; Y | P) (I in bits) on the expected time to accuse a colluder."""
        return math.log2(n) / self.bits


def mutual_info_rate(channel: CollusionChannel, bias_dist: BiasDistribution) -> InformationRate:
    """E_P I(X1; Y | P) between one colluder's symbol and the pirate output."""

    def f(p):
        return _mutual_info(channel, min(max(p, 1e-15), 1.0 - 1e-15))

    rate = float(bias_dist.expect(f, epsabs=1e-14))
    if rate <= 0.0:
        raise ValueError("degenerate channel: pirate output carries no information on a colluder's symbol")
    return InformationRate(rate)


@dataclass(frozen=True)
class DriftIntegrals:
    I: float
    mu0: float
    mu1: float


def drift_integrals(c: int, epsabs: float = 1e-13) -> DriftIntegrals:
    """Innocent and colluder drifts of the interleaving log-likelihood decoder
    against the interleaving attack (arcsine biases), and the integral

        I = int_0^1 sqrt(p(1-p)) ln(1 + c / ((c-1)^2 p (1-p))) dp,

    which satisfies mu1 - mu0 = I / (pi c) and I < pi c / (c-1)^2.

    Each integral is written out directly in p rather than built from the
    scoring module, so it serves as an independent check on it.
    """
    if c < 2:
        raise ValueError("precondition violated: c >= 2")
    m = math.log1p(-1.0 / c)

    def integrands(p):
        p = min(max(p, 1e-15), 1.0 - 1e-15)
        q = 1.0 - p
        a = (1.0 - p) / (c * p)
        b = p / (c * q)
        la, lb = math.log1p(a), math.log1p(b)
        mu0 = p * p * la + 2.0 * p * q * m + q * q * lb
        mu1 = p * p * (1.0 + a) * la + 2.0 * p * q * (1.0 - 1.0 / c) * m + q * q * (1.0 + b) * lb
        # I = pi * E_arcsine[p(1-p) ln(...)] after absorbing the weight 1/(pi sqrt(p(1-p)))
        i = math.pi * p * q * math.log1p(c / ((c - 1) ** 2 * p * q))
        return np.array([i, mu0, mu1])

    i, mu0, mu1 = BiasDistribution.arcsine().expect(integrands, epsabs=epsabs, epsrel=1e-12)
    return DriftIntegrals(float(i), float(mu0), float(mu1))


def group_testing_lengths(c: int, n: float) -> tuple:
    """Asymptotic code lengths for classical group testing: simple decoding
    c ln n / (ln 2)^2 and joint decoding c log2 n."""
    if c < 1 or n < 2:
        raise ValueError("precondition violated: c >= 1 and n >= 2")
    return c * math.log(n) / math.log(2.0) ** 2, c * math.log2(n)
