"""Bias distributions, bias vectors and binary codes.

Randomness is organised in counter-style substreams: every draw comes from a
Philox generator keyed by ``(master seed, *stream key, block index)``. Segments
are grouped in blocks of :data:`BLOCK` so that any block of the bias vector or
code can be regenerated independently, and a lazily generated code (see
:class:`LazyCode`) is identical to the eagerly materialised one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, TextIO

import numpy as np
from scipy import integrate

from .model import BiasVector, CodeMatrix

BLOCK = 512

# stream identifiers under a master seed
BIAS_STREAM = 0
CODE_STREAM = 1
PIRATE_STREAM = 2
COALITION_STREAM = 3

_P_MAX = float(np.nextafter(1.0, 0.0))
_P_MIN = 5e-324


def derive_rng(seed, *key: int) -> np.random.Generator:
    """Independent Philox generator for substream ``key`` under ``seed``."""
    if isinstance(seed, np.random.SeedSequence):
        ss = np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(key))
    else:
        ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def arcsine_cdf(p):
    """F(p) = (2/pi) arcsin(sqrt(p))."""
    return 2.0 / math.pi * np.arcsin(np.sqrt(p))


def arcsine_inverse_cdf(u):
    """Inverse of :func:`arcsine_cdf`: sin^2(pi u / 2).

    Accepts scalars or arrays; every ``u`` must lie in [0, 1].
    """
    arr = np.asarray(u, dtype=float)
    if np.any((arr < 0.0) | (arr > 1.0)) or np.any(np.isnan(arr)):
        raise ValueError("precondition violated: 0 <= u <= 1")
    out = np.sin(0.5 * math.pi * arr) ** 2
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BiasDistribution:
    """Distribution of per-segment biases.

    ``kind`` is ``"arcsine"``, ``"arcsine_with_cutoff"`` (support [t, 1-t]) or
    ``"fixed"`` (every bias equals ``p``).
    """

    kind: str = "arcsine"
    t: Optional[float] = None
    p: Optional[float] = None

    def __post_init__(self):
        if self.kind == "arcsine":
            return
        if self.kind == "arcsine_with_cutoff":
            if self.t is None or not 0.0 < self.t < 0.5:
                raise ValueError("precondition violated: arcsine_with_cutoff requires 0 < t < 1/2")
        elif self.kind == "fixed":
            if self.p is None or not 0.0 < self.p < 1.0:
                raise ValueError("precondition violated: fixed bias requires 0 < p < 1")
        else:
            raise ValueError(f"unknown bias distribution kind {self.kind!r}")

    @classmethod
    def arcsine(cls) -> "BiasDistribution":
        return cls("arcsine")

    @classmethod
    def with_cutoff(cls, t: float) -> "BiasDistribution":
        return cls("arcsine_with_cutoff", t=t)

    @classmethod
    def fixed(cls, p: float) -> "BiasDistribution":
        return cls("fixed", p=p)

    @property
    def u_range(self) -> tuple:
        if self.kind == "arcsine_with_cutoff":
            return float(arcsine_cdf(self.t)), float(arcsine_cdf(1.0 - self.t))
        return 0.0, 1.0

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms on [0,1) to biases by inverse CDF."""
        if self.kind == "fixed":
            return np.full(np.shape(u), self.p)
        lo, hi = self.u_range
        p = arcsine_inverse_cdf(lo + (hi - lo) * np.asarray(u))
        if self.kind == "arcsine_with_cutoff":
            # inverse-CDF rounding can land an ulp outside the support
            p = np.clip(p, self.t, 1.0 - self.t)
        return np.clip(p, _P_MIN, _P_MAX)

    def expect(self, f: Callable[[float], object], epsabs: float = 1e-12, epsrel: float = 1e-10):
        """E[f(P)] for P drawn from this distribution.

        The arcsine weight is absorbed by the substitution p = sin^2(pi u/2),
        under which P is uniform in u; the integrand is then smooth and
        adaptive Gauss-Kronrod quadrature handles it directly. ``f`` may return
        a scalar or a 1-D array.
        """
        if self.kind == "fixed":
            return f(self.p)
        lo, hi = self.u_range

        def g(u):
            p = min(max(math.sin(0.5 * math.pi * u) ** 2, _P_MIN), _P_MAX)
            return np.asarray(f(p), dtype=float)

        val, _err = integrate.quad_vec(g, lo, hi, epsabs=epsabs, epsrel=epsrel, limit=400)
        val = val / (hi - lo)
        return float(val) if np.ndim(val) == 0 else val


def bias_block(dist: BiasDistribution, seed, block: int, size: int = BLOCK) -> np.ndarray:
    """Biases for segments ``block*BLOCK + 1 .. block*BLOCK + size``."""
    u = derive_rng(seed, BIAS_STREAM, block).random(size)
    return dist.from_uniform(u)


def code_block(p: np.ndarray, n: int, seed, block: int) -> np.ndarray:
    """Symbols for one block, shape ``(len(p), n)`` (segment-major)."""
    u = derive_rng(seed, CODE_STREAM, block).random((len(p), n))
    return (u < np.asarray(p)[:, None]).astype(np.uint8)


def _blocks(length: int) -> Iterable[tuple]:
    for b in range((length + BLOCK - 1) // BLOCK):
        start = b * BLOCK
        yield b, start, min(BLOCK, length - start)


def sample_bias_vector(dist: BiasDistribution, length: int, seed) -> BiasVector:
    """Draw ``length`` i.i.d. biases from ``dist``, deterministic in ``seed``."""
    if length < 1:
        raise ValueError("precondition violated: segment count >= 1")
    parts = [bias_block(dist, seed, b, size) for b, _, size in _blocks(length)]
    return BiasVector(np.concatenate(parts))


def generate_code(bias: BiasVector, n: int, seed) -> CodeMatrix:
    """n x length code with independent Bernoulli(p_i) entries in column i."""
    if n < 1:
        raise ValueError("precondition violated: user count n >= 1")
    rows = np.empty((n, bias.length), dtype=np.uint8)
    for b, start, size in _blocks(bias.length):
        rows[:, start:start + size] = code_block(bias.values[start:start + size], n, seed, b).T
    return CodeMatrix(rows)


class LazyCode:
    """Segment-by-segment view of the code produced by :func:`sample_bias_vector`
    and :func:`generate_code` under the same seed, without materialising it.

    Memory is O(BLOCK * n); ``length`` may be left open for untruncated schemes.
    """

    def __init__(self, dist: BiasDistribution, n: int, seed):
        if n < 1:
            raise ValueError("precondition violated: user count n >= 1")
        self.dist = dist
        self.n = n
        self.seed = seed
        self._block = -1
        self._p = None
        self._x = None

    def _load(self, block: int) -> None:
        self._p = bias_block(self.dist, self.seed, block)
        self._x = code_block(self._p, self.n, self.seed, block)
        self._block = block

    def segment(self, i: int) -> tuple:
        """``(p_i, symbols of all users)`` for 1-based segment ``i``."""
        block, offset = divmod(i - 1, BLOCK)
        if block != self._block:
            self._load(block)
        return float(self._p[offset]), self._x[offset]


def write_code_text(stream: TextIO, bias: BiasVector, code: CodeMatrix) -> None:
    """Columnar text export: header ``length n``, then ``p_i x_1,i ... x_n,i`` per segment."""
    if code.length != bias.length:
        raise ValueError(f"dimension mismatch: code length {code.length} != bias length {bias.length}")
    stream.write(f"{bias.length} {code.n}\n")
    for i in range(bias.length):
        bits = " ".join(str(int(b)) for b in code.rows[:, i])
        stream.write(f"{bias.values[i]:.17g} {bits}\n")


def read_code_text(stream: TextIO) -> tuple:
    header = stream.readline().split()
    if len(header) != 2:
        raise ValueError("malformed header: expected 'length n'")
    length, n = int(header[0]), int(header[1])
    p = np.empty(length)
    rows = np.empty((n, length), dtype=np.uint8)
    for i in range(length):
        fields = stream.readline().split()
        if len(fields) != n + 1:
            raise ValueError(f"segment {i + 1}: expected {n + 1} fields, got {len(fields)}")
        p[i] = float(fields[0])
        rows[:, i] = [int(f) for f in fields[1:]]
    return BiasVector(p), CodeMatrix(rows)
