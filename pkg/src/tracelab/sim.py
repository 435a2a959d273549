"""Seeded Monte Carlo harness: encode, attack, score, accuse.

A trial draws its coalition, biases, code and pirate randomness from separate
substreams of ``(master_seed, trial_index)``. The code is fixed in advance,
because its stream never sees anything the pirates do. Trials are therefore
reproducible one by one and can be farmed out to worker processes without
changing any result.
"""

from __future__ import annotations

import csv
import dataclasses
import functools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, TextIO

import numpy as np

from .accusation import (
    ACCUSED,
    AccusationEngine,
    Boundary,
    DecisionEvent,
    EngineConfig,
    Truncation,
    per_user_epsilons,
    tardos_boundary,
    sequential_error_bound,
    wald_thresholds,
    write_events_csv,
)
from .channel import make_attack, pirate_output
from .encoder import (
    COALITION_STREAM,
    PIRATE_STREAM,
    BiasDistribution,
    LazyCode,
    derive_rng,
)
from .model import OvershootStats
from .scoring import ScoreFunction, averaged_moments, normalize_scores, segment_moments

LN2 = math.log(2.0)
DEFAULT_CAP = 1_000_000


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to rerun an experiment.

    ``scheme`` selects the boundary: ``wald_sprt`` and ``truncated_sprt`` use
    ``variant`` and the per-user split (eps1/n, eps2/c0) of the global
    targets; ``sequential_tardos`` draws its line through
    ``(length, eta_final)`` with slope from ``eta_initial`` if given, else
    ``slope``, else the innocent drift of the decoder/attack pair;
    ``non_adaptive`` decides only at ``length``.

    With ``single_user`` each trial follows one innocent and one colluder
    score path instead of a full population, and ``eps1``/``eps2`` are taken
    as the per-user targets directly.
    """

    n: int = 1000
    c: int = 10
    c0: Optional[int] = None
    eps1: float = 1e-3
    eps2: float = 0.0
    attack: str = "interleaving"
    decoder: str = "interleaving_ll"
    scheme: str = "wald_sprt"
    variant: str = "upper_only"
    bias: BiasDistribution = field(default_factory=BiasDistribution.arcsine)
    trials: int = 1
    master_seed: int = 0
    max_segments: Optional[int] = None
    delay_B: int = 0
    tainting: bool = False
    activation_schedule: Optional[tuple] = None
    length: Optional[int] = None
    eta_final: Optional[float] = None
    eta_initial: Optional[float] = None
    slope: Optional[float] = None
    normalize: bool = False
    single_user: bool = False
    printed_all_one: bool = False

    def __post_init__(self):
        if self.c0 is None:
            object.__setattr__(self, "c0", self.c)
        if self.activation_schedule is not None:
            object.__setattr__(self, "activation_schedule", tuple(int(s) for s in self.activation_schedule))
        if self.variant:
            object.__setattr__(self, "variant", self.variant.replace("-", "_"))
        if self.trials < 1:
            raise ValueError("precondition violated: trials >= 1")
        if self.max_segments is not None and self.max_segments < 1:
            raise ValueError("precondition violated: max_segments >= 1")
        if not 1 <= self.c <= self.c0 <= self.n:
            raise ValueError(f"precondition violated: 1 <= c <= c0 <= n (got c={self.c}, c0={self.c0}, n={self.n})")
        if self.delay_B < 0:
            raise ValueError("precondition violated: delay B >= 0")
        sched = self.activation_schedule
        if sched is not None:
            if len(sched) != self.c:
                raise ValueError("precondition violated: activation_schedule needs one start segment per colluder")
            if min(sched) < 1:
                raise ValueError("precondition violated: activation start segments are 1-based (>= 1)")
        make_attack(self.attack, self.c)
        self.score_function()

    # --- derived pieces -------------------------------------------------

    def score_function(self) -> ScoreFunction:
        attack = self.attack if self.decoder == "generic_np" else None
        return ScoreFunction(self.decoder, self.c0, attack=attack, printed=self.printed_all_one)

    def per_user_eps(self) -> tuple:
        if self.single_user:
            return self.eps1, self.eps2
        return per_user_epsilons(self.eps1, self.eps2, self.n, self.c0)

    def moments(self):
        """Bias-averaged score moments of the decoder against the attack at the true size ``c``."""
        return _moments(self.score_function(), self.attack, self.c, self.bias)

    def boundary(self) -> Boundary:
        if self.scheme in ("wald_sprt", "truncated_sprt"):
            eps1, eps2 = self.per_user_eps()
            b = wald_thresholds(eps1, eps2, self.variant)
            if self.scheme == "truncated_sprt":
                self._need_truncation()
                b = b.truncated(self.length, self.eta_final)
            return b
        self._need_truncation()
        if self.scheme == "non_adaptive":
            return Boundary(truncation=Truncation(self.length, self.eta_final))
        if self.scheme == "sequential_tardos":
            return tardos_boundary(self.length, self.eta_final, self.tardos_slope())
        raise ValueError(f"unknown scheme {self.scheme!r}")

    def tardos_slope(self) -> float:
        if self.eta_initial is not None:
            return (self.eta_final - self.eta_initial) / self.length
        if self.slope is not None:
            return self.slope
        m = self.moments()
        return -math.inf if m.p0_certain > 0.0 else m.mu0

    def _need_truncation(self) -> None:
        if self.length is None or self.eta_final is None:
            raise ValueError(f"precondition violated: scheme {self.scheme} needs length and eta_final")

    def engine_config(self) -> EngineConfig:
        return EngineConfig(self.boundary(), self.scheme, self.delay_B, self.tainting)

    def predicted_catch_time(self) -> Optional[float]:
        """ln(1/eps1')/mu1, the expected single-colluder accusation time."""
        eps1, _ = self.per_user_eps()
        mu1 = self.moments().mu1
        if not mu1 > 0.0:
            return None
        return math.log(1.0 / eps1) / mu1

    def segment_cap(self) -> int:
        if self.max_segments is not None:
            cap = self.max_segments
        else:
            t = self.predicted_catch_time()
            cap = DEFAULT_CAP if t is None else max(int(math.ceil(10.0 * t)), 100)
        b = self.boundary()
        if b.truncation is not None:
            cap = min(cap, b.truncation.length)
        return cap

    def error_bounds(self):
        """Sequential-Tardos error bounds implied by treating (eps1, eps2) as non-adaptive parameters."""
        if self.scheme != "sequential_tardos" or not (0 < self.eps1 < 0.5 and 0 < self.eps2 < 0.5):
            return None
        return sequential_error_bound(self.eps1, self.eps2)

    # --- serialisation --------------------------------------------------

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["bias"] = {k: v for k, v in dataclasses.asdict(self.bias).items() if v is not None}
        if self.activation_schedule is not None:
            d["activation_schedule"] = list(self.activation_schedule)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown config fields: {', '.join(sorted(unknown))}")
        bias = d.get("bias")
        if isinstance(bias, dict):
            d["bias"] = BiasDistribution(**bias)
        elif isinstance(bias, str):
            d["bias"] = BiasDistribution(bias)
        return cls(**d)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


@functools.lru_cache(maxsize=64)
def _moments(score: ScoreFunction, attack: str, c: int, bias: BiasDistribution):
    return averaged_moments(score, make_attack(attack, c), bias)


@dataclass
class TrialResult:
    trial: int
    catch_all_time: Optional[int]
    per_colluder_catch_times: list
    false_positive_count: int
    false_negative_count: int
    overshoots: OvershootStats
    segments_generated: int
    cap_hit: bool = False
    colluders: list = field(default_factory=list)
    events: List[DecisionEvent] = field(default_factory=list)

    @property
    def mean_overshoot(self) -> Optional[float]:
        return self.overshoots.mean


def _trial_seed(config: ExperimentConfig, trial_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(config.master_seed, spawn_key=(trial_index,))


def choose_coalition(config: ExperimentConfig, trial_index: int) -> list:
    rng = derive_rng(_trial_seed(config, trial_index), COALITION_STREAM)
    return sorted(int(j) + 1 for j in rng.choice(config.n, size=config.c, replace=False))


def run_trial(config: ExperimentConfig, trial_index: int, code: Optional[LazyCode] = None) -> TrialResult:
    """One full trial: fixed code, per-segment pirate output, scoring and accusation.

    ``code`` replaces the seeded code source (same interface as
    :class:`~tracelab.encoder.LazyCode`); tests use it to tamper with symbols.
    """
    if config.single_user:
        return run_single_user_trial(config, trial_index)
    seed = _trial_seed(config, trial_index)
    members = choose_coalition(config, trial_index)
    member_idx = np.array(members) - 1
    is_colluder = {u: k for k, u in enumerate(members)}
    c = config.c
    start = list(config.activation_schedule) if config.activation_schedule else [1] * c
    accused_at: list = [None] * c
    wrongly_cleared = [False] * c

    if code is None:
        code = LazyCode(config.bias, config.n, seed)
    score = config.score_function()
    engine = AccusationEngine(config.engine_config(), config.n)
    pirate_rng = derive_rng(seed, PIRATE_STREAM)
    cap = config.segment_cap()
    zeros = np.zeros(config.n)

    events: List[DecisionEvent] = []
    fp = 0
    i = 0
    while i < cap and not engine.finished:
        i += 1
        contributing = [k for k in range(c)
                        if start[k] <= i and (accused_at[k] is None or i <= accused_at[k] + config.delay_B)]
        if not contributing:
            if all(a is not None for a in accused_at):
                i -= 1
                break
            # only sleepers remain: no pirate content this segment
            step_events = engine.step(zeros, None, i)
        else:
            p, x = code.segment(i)
            channel = make_attack(config.attack, len(contributing))
            y = pirate_output(channel, x[member_idx[contributing]], pirate_rng)
            values, certain = score.table(p)
            if config.normalize:
                values = np.where(certain, 0.0, normalize_scores(values, segment_moments(score, None, p, y=y)))
            s = values[:, y][x]
            cert = certain[:, y][x] if certain[:, y].any() else None
            step_events = engine.step(s, cert, i)
        for ev in step_events:
            k = is_colluder.get(ev.user)
            if k is None:
                fp += ev.accused
            elif ev.accused:
                accused_at[k] = ev.segment
            else:
                wrongly_cleared[k] = True
        events.extend(step_events)

    caught = all(a is not None for a in accused_at)
    return TrialResult(
        trial=trial_index,
        catch_all_time=max(accused_at) if caught else None,
        per_colluder_catch_times=list(accused_at),
        false_positive_count=fp,
        false_negative_count=sum(wrongly_cleared),
        overshoots=engine.overshoots,
        segments_generated=i,
        cap_hit=not caught and not engine.finished and i >= cap,
        colluders=members,
        events=events,
    )


# --- single-user fast path ------------------------------------------------

_WALK_BLOCK = 256


def _simulate_walk(config: ExperimentConfig, boundary: Boundary, guilty: bool, rng: np.random.Generator,
                   cap: int) -> tuple:
    """Score path of one user until it leaves the boundary.

    Applies the same rules as :class:`AccusationEngine` for a single user, but
    a block of segments at a time. Returns ``(decision, segment, overshoot)``
    where decision is True (accused), False (cleared) or None (cap hit).
    """
    score = config.score_function()
    theta = np.asarray(make_attack(config.attack, config.c).theta)
    s0 = 0.0
    done = 0
    up, low, trunc = boundary.upper, boundary.lower, boundary.truncation
    while done < cap:
        k = min(_WALK_BLOCK, cap - done)
        p = config.bias.from_uniform(rng.random(k))
        bits = rng.random((k, config.c)) < p[:, None]
        y = rng.random(k) < theta[bits.sum(axis=1)]
        x = bits[:, 0] if guilty else rng.random(k) < p
        values, certain = score.scores(x, y, p)
        seg = done + 1 + np.arange(k)
        path = s0 + np.cumsum(np.where(certain, 0.0, values))
        hits = certain.copy()
        if up is not None:
            hits |= path > up(seg)
        if low is not None:
            hits |= path < low(seg)
        if trunc is not None:
            hits |= seg == trunc.length
        if hits.any():
            j = int(np.argmax(hits))
            i0 = int(seg[j])
            if certain[j]:
                return False, i0, None
            # recompute with the engine's sequential summation order
            total = s0
            for v in values[:j + 1]:
                total += v
            if up is not None and total > up(i0):
                return True, i0, total - up(i0)
            if low is not None and total < low(i0):
                return False, i0, low(i0) - total
            if trunc is not None and i0 == trunc.length:
                return total >= trunc.eta_final, i0, None
            # cumsum rounding disagreed with sequential summation: keep walking
            s0 = total
            done = i0
            continue
        s0 = float(path[-1])
        done += k
    return None, done, None


def run_single_user_trial(config: ExperimentConfig, trial_index: int) -> TrialResult:
    """One innocent path and one colluder path, each from its own substream."""
    seed = _trial_seed(config, trial_index)
    boundary = config.boundary()
    cap = config.segment_cap()
    g_dec, g_at, g_over = _simulate_walk(config, boundary, True, derive_rng(seed, PIRATE_STREAM, 1), cap)
    # without a lower line the innocent is only watched while the trial lasts,
    # as in the full simulation, which stops once the colluders are caught
    i_cap = cap if boundary.lower is not None or boundary.truncation is not None else max(g_at, 1)
    i_dec, i_at, i_over = _simulate_walk(config, boundary, False, derive_rng(seed, PIRATE_STREAM, 0), i_cap)
    over = OvershootStats([v for v in (g_over, i_over) if v is not None])
    return TrialResult(
        trial=trial_index,
        catch_all_time=g_at if g_dec else None,
        per_colluder_catch_times=[g_at if g_dec else None],
        false_positive_count=int(bool(i_dec)),
        false_negative_count=int(g_dec is False),
        overshoots=over,
        segments_generated=max(g_at, i_at),
        cap_hit=g_dec is None or (i_dec is None and i_at >= cap),
    )


# --- experiments ------------------------------------------------------------


@dataclass(frozen=True)
class AggregateStats:
    trials: int
    caught_all: int
    mean_catch_all_time: Optional[float]
    median_catch_all_time: Optional[float]
    p90_catch_all_time: Optional[float]
    fp_rate: float
    fn_rate: float
    per_user_fp_rate: float
    per_user_fn_rate: float
    mean_overshoot: Optional[float]
    cap_hits: int

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def aggregate(results: List[TrialResult], config: ExperimentConfig) -> AggregateStats:
    """Order-independent summary of a batch of trials."""
    results = sorted(results, key=lambda r: r.trial)
    t = len(results)
    times = np.array([r.catch_all_time for r in results if r.catch_all_time is not None], dtype=float)
    samples = [s for r in results for s in r.overshoots.samples]
    innocents = 1 if config.single_user else config.n - config.c
    colluders = 1 if config.single_user else config.c
    return AggregateStats(
        trials=t,
        caught_all=int(times.size),
        mean_catch_all_time=float(np.mean(times)) if times.size else None,
        median_catch_all_time=float(np.median(times)) if times.size else None,
        p90_catch_all_time=float(np.percentile(times, 90)) if times.size else None,
        fp_rate=sum(r.false_positive_count > 0 for r in results) / t,
        fn_rate=sum(r.false_negative_count > 0 for r in results) / t,
        per_user_fp_rate=sum(r.false_positive_count for r in results) / (t * innocents),
        per_user_fn_rate=sum(r.false_negative_count for r in results) / (t * colluders),
        mean_overshoot=float(np.mean(samples)) if samples else None,
        cap_hits=sum(r.cap_hit for r in results),
    )


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    stats: AggregateStats
    trials: List[TrialResult]

    def summary(self) -> dict:
        """Aggregate JSON payload: statistics plus the configuration that produced them."""
        return {"config": self.config.to_dict(), "stats": self.stats.as_dict()}


def _run_one(args) -> TrialResult:
    config, index = args
    return run_trial(config, index)


def run_experiment(config: ExperimentConfig, parallelism: int = 1) -> ExperimentResult:
    """Run ``config.trials`` trials (serially, or over ``parallelism`` processes)."""
    jobs = [(config, i) for i in range(config.trials)]
    if parallelism > 1 and config.trials > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_run_one, jobs, chunksize=max(1, config.trials // (4 * parallelism))))
    else:
        results = [_run_one(j) for j in jobs]
    return ExperimentResult(config, aggregate(results, config), results)


TRIAL_FIELDS = ("trial", "catch_all_time", "false_positives", "false_negatives", "segments_generated",
                "mean_overshoot")


def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_trials_csv(stream: TextIO, results: List[TrialResult]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(TRIAL_FIELDS)
    for r in sorted(results, key=lambda r: r.trial):
        w.writerow((r.trial, _num(r.catch_all_time), r.false_positive_count, r.false_negative_count,
                    r.segments_generated, _num(r.mean_overshoot)))


def write_trial_events_csv(stream: TextIO, results: List[TrialResult]) -> None:
    write_events_csv(stream, ((r.trial, ev) for r in sorted(results, key=lambda r: r.trial) for ev in r.events))


def dumps_json(obj) -> str:
    """JSON with floats at 17 significant digits (round-trip exact)."""
    def conv(o):
        if isinstance(o, float):
            if math.isfinite(o):
                return float(f"{o:.17g}")
            return None
        if isinstance(o, dict):
            return {k: conv(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [conv(v) for v in o]
        return o

    return json.dumps(conv(obj), indent=2, sort_keys=True)


# --- presets ------------------------------------------------------------------

_WALD_TOY = dict(n=1000, c=10, c0=10, eps1=1e-3, eps2=0.0, scheme="wald_sprt", variant="upper_only")

PRESETS = {
    "wald_interleaving_toy": dict(_WALD_TOY, attack="interleaving", decoder="interleaving_ll",
                                  bias=BiasDistribution.arcsine(), trials=200),
    "tardos_interleaving_toy": dict(_WALD_TOY, attack="interleaving", decoder="interleaving_ll",
                                    bias=BiasDistribution.arcsine(), trials=100, scheme="sequential_tardos",
                                    length=17953, eta_final=6.9078, eta_initial=68.41),
    "wald_grouptesting_toy": dict(_WALD_TOY, attack="all_one", decoder="all_one",
                                  bias=BiasDistribution.fixed(LN2 / 10), trials=200),
    "tardos_grouptesting_toy": dict(_WALD_TOY, attack="all_one", decoder="all_one",
                                    bias=BiasDistribution.fixed(LN2 / 10), trials=200, scheme="sequential_tardos",
                                    length=459, eta_final=6.91, slope=-math.inf),
    "sprt_error_sum": dict(n=5, c=5, c0=5, eps1=0.05, eps2=0.05, attack="interleaving", decoder="interleaving_ll",
                           scheme="wald_sprt", variant="aggressive", bias=BiasDistribution.arcsine(),
                           trials=10_000, single_user=True),
}

PRESET_NOTES = {
    "wald_interleaving_toy": "Wald SPRT without lower threshold, eta1 = ln(n/eps1) ~ 13.82; about 3000 segments",
    "tardos_interleaving_toy": "sequential Tardos line from (0, 68.41) to (17953, 6.9078); roughly 9000 segments",
    "wald_grouptesting_toy": "all-1 attack, fixed bias (ln 2)/10, group-testing decoder, eta1 ~ 13.82",
    "tardos_grouptesting_toy": "all-1 attack, vertical boundary: single decision at length 459 with eta 6.91",
    "sprt_error_sum": "two-sided SPRT, eps1' = eps2' = 0.05, matched interleaving decoder at c = 5, single-user paths",
}


def preset(name: str, **overrides) -> ExperimentConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; known: {', '.join(PRESETS)}")
    return ExperimentConfig(**{**PRESETS[name], **overrides})
