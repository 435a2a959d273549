"""Colluder-symmetric collusion channels.

A channel is the vector ``theta`` with ``theta[z] = P(Y = 1 | coalition holds z ones)``.
The marking assumption pins ``theta[0] = 0`` and ``theta[c] = 1``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from math import comb
from typing import Optional, Sequence

import numpy as np

ATTACKS = ("interleaving", "all_one", "majority", "minority", "coin")


@dataclass(frozen=True)
class CollusionChannel:
    theta: tuple
    kind: Optional[str] = None

    def __post_init__(self):
        theta = tuple(float(t) for t in self.theta)
        object.__setattr__(self, "theta", theta)
        if len(theta) < 2:
            raise ValueError("precondition violated: channel needs c >= 1 (theta of length c+1)")
        if any(not 0.0 <= t <= 1.0 for t in theta):
            raise ValueError("precondition violated: 0 <= theta_z <= 1")
        if theta[0] != 0.0 or theta[-1] != 1.0:
            raise ValueError("marking assumption violated: theta_0 = 0 and theta_c = 1 required")

    @property
    def c(self) -> int:
        return len(self.theta) - 1

    def resized(self, c: int) -> "CollusionChannel":
        """Same attack kind re-instantiated for a coalition of size ``c``."""
        if self.kind is None:
            raise ValueError("cannot resize a channel without an attack kind")
        return make_attack(self.kind, c)


@functools.lru_cache(maxsize=None)
def make_attack(kind: str, c: int) -> CollusionChannel:
    if c < 1:
        raise ValueError("precondition violated: coalition size c >= 1")
    z = np.arange(c + 1)
    if kind == "interleaving":
        theta = z / c
    elif kind == "all_one":
        theta = (z >= 1).astype(float)
    elif kind == "majority":
        theta = np.where(2 * z > c, 1.0, 0.0)
        theta[2 * z == c] = 0.5
    elif kind == "minority":
        theta = np.where(2 * z < c, 1.0, 0.0)
        theta[2 * z == c] = 0.5
    elif kind == "coin":
        theta = np.full(c + 1, 0.5)
    else:
        raise ValueError(f"unknown attack {kind!r}; expected one of {', '.join(ATTACKS)}")
    theta = theta.astype(float)
    theta[0], theta[c] = 0.0, 1.0
    return CollusionChannel(tuple(theta), kind)


def binomial_pmf(k: int, p: float) -> np.ndarray:
    """P(Bin(k, p) = z) for z = 0..k, by direct evaluation."""
    q = 1.0 - p
    return np.array([comb(k, z) * p ** z * q ** (k - z) for z in range(k + 1)])


def marginal_output_prob(channel: CollusionChannel, p: float) -> float:
    """P(Y = 1 | p) when all ``c`` colluders hold i.i.d. Bernoulli(p) symbols."""
    if not 0.0 < p < 1.0:
        raise ValueError("precondition violated: 0 < p < 1")
    return float(np.dot(binomial_pmf(channel.c, p), channel.theta))


def pirate_output(channel: CollusionChannel, colluder_bits: Sequence[int], rng: np.random.Generator) -> int:
    """Pirate symbol for one segment; consumes exactly one uniform from ``rng``."""
    bits = np.asarray(colluder_bits)
    if bits.size == 0:
        raise ValueError("empty coalition: every colluder is already disconnected")
    if bits.size != channel.c:
        raise ValueError(f"channel built for c={channel.c} but {bits.size} colluders are active")
    z = int(bits.sum())
    return int(rng.random() < channel.theta[z])
