import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tracelab.accusation import (
    ACCUSED,
    CERTAIN,
    FORCED,
    AccusationEngine,
    Boundary,
    DecisionEvent,
    EngineConfig,
    EngineError,
    Line,
    Truncation,
    engine_step,
    halve_epsilons,
    per_user_epsilons,
    tardos_boundary,
    sequential_error_bound,
    wald_thresholds,
    write_events_csv,
)
from tracelab.model import CERTAINLY_INNOCENT, Status, UserState


def test_wald_threshold_variants():
    assert wald_thresholds(1e-6, 0.0, "upper_only").upper.intercept == pytest.approx(13.8155, abs=1e-4)
    agg = wald_thresholds(0.05, 0.05, "aggressive")
    assert agg.upper.intercept == pytest.approx(math.log(19), abs=1e-12)
    assert agg.lower.intercept == pytest.approx(-2.9444, abs=1e-4)
    con = wald_thresholds(0.05, 0.05, "conservative")
    assert (con.lower.intercept, con.upper.intercept) == pytest.approx((-math.log(20), math.log(20)))
    assert wald_thresholds(1e-3, 0.0, "upper-only").lower is None


@pytest.mark.parametrize("variant", ["aggressive", "conservative"])
def test_two_sided_needs_eps2(variant):
    with pytest.raises(ValueError, match="eps2 = 0"):
        wald_thresholds(1e-3, 0.0, variant)


def test_per_user_and_halving():
    assert per_user_epsilons(1e-3, 0.0, 1000, 10) == (pytest.approx(1e-6), 0.0)
    assert per_user_epsilons(0.5, 0.5, 1, 1) == (0.5, 0.5)
    assert per_user_epsilons(1e-2, 1e-1, 100, 10) == pytest.approx((1e-4, 1e-2))
    assert halve_epsilons(1e-3, 1e-2) == pytest.approx((5e-4, 5e-3))
    assert halve_epsilons(0.999, 0.1)[0] == pytest.approx(0.4995)
    g = sequential_error_bound(1e-3, 1e-2)
    assert (g.false_positive, g.false_negative) == pytest.approx((2e-3, 2e-2))
    assert sequential_error_bound(0.4999, 0.1).false_positive == pytest.approx(0.9998)
    with pytest.raises(ValueError):
        sequential_error_bound(0.5, 0.1)


def test_tardos_boundary():
    b = tardos_boundary(17953, 6.9078, -0.0034257)
    assert b.upper(0) == pytest.approx(68.41, abs=0.01)
    assert b.upper(17953) == pytest.approx(6.9078)
    with pytest.raises(ValueError, match="slope"):
        tardos_boundary(100, 5.0, 0.0)
    with pytest.raises(ValueError):
        tardos_boundary(100, 5.0, 0.1)
    vertical = tardos_boundary(459, 6.91, -math.inf)
    assert vertical.upper is None and vertical.truncation == Truncation(459, 6.91)


def test_boundary_ordering():
    with pytest.raises(ValueError):
        Boundary(upper=Line(1.0), lower=Line(2.0))
    with pytest.raises(ValueError):
        Boundary(upper=Line(1.0, -0.1), lower=Line(-1.0))


def test_engine_config_checks():
    with pytest.raises(ValueError):
        EngineConfig(wald_thresholds(0.1, 0.1, "aggressive").truncated(10, 0.0), "wald_sprt")
    with pytest.raises(ValueError):
        EngineConfig(wald_thresholds(0.1, 0.1, "aggressive"), "truncated_sprt")
    with pytest.raises(ValueError):
        EngineConfig(Boundary(upper=Line(1.0), truncation=Truncation(5, 0.0)), "non_adaptive")
    with pytest.raises(ValueError):
        EngineConfig(wald_thresholds(0.1, 0.0), delay=-1)


def test_crossing_and_overshoot():
    cfg = EngineConfig(wald_thresholds(1e-6, 0.0))
    st_ = [UserState(cumulative_score=13.8)]
    assert engine_step(cfg, st_, [0.0], 2749) == []
    (ev,) = engine_step(cfg, st_, [0.1], 2750)
    assert ev.kind == ACCUSED and ev.segment == 2750
    assert ev.overshoot == pytest.approx(13.9 - 13.8155, abs=1e-4)


def test_exact_tie_does_not_cross():
    cfg = EngineConfig(Boundary(upper=Line(1.0)))
    st_ = [UserState()]
    assert engine_step(cfg, st_, [1.0], 1) == []
    assert engine_step(cfg, st_, [1e-12], 2)[0].kind == ACCUSED


def test_certain_innocent_event_is_final():
    cfg = EngineConfig(Boundary(upper=Line(0.5)))
    st_ = [UserState(), UserState()]
    events = engine_step(cfg, st_, [CERTAINLY_INNOCENT, 0.1], 1)
    assert [(e.user, e.kind) for e in events] == [(1, CERTAIN)]
    assert st_[0].status is Status.CERTAINLY_INNOCENT
    engine_step(cfg, st_, [100.0, 0.0], 2)
    assert st_[0].status is Status.CERTAINLY_INNOCENT and st_[0].cumulative_score == 0.0


def test_forced_decision_is_inclusive():
    cfg = EngineConfig(Boundary(truncation=Truncation(10, 0.0)), "non_adaptive")
    st_ = [UserState(), UserState()]
    for i in range(1, 10):
        assert engine_step(cfg, st_, [0.0, -0.1], i) == []
    events = engine_step(cfg, st_, [0.0, 0.0], 10)
    assert [(e.kind, e.accused) for e in events] == [(FORCED, True), (FORCED, False)]


def test_engine_lifecycle_errors():
    eng = AccusationEngine(EngineConfig(Boundary(upper=Line(0.5))), 1)
    eng.step(np.array([0.1]), None, 1)
    with pytest.raises(EngineError, match="out of order"):
        eng.step(np.array([0.1]), None, 1)
    eng.step(np.array([1.0]), None, 2)
    assert eng.finished
    with pytest.raises(EngineError, match="finished"):
        eng.step(np.array([0.1]), None, 3)
    with pytest.raises(EngineError):
        engine_step(EngineConfig(Boundary(upper=Line(0.5))), [UserState(status=Status.ACQUITTED)], [0.0], 1)


def test_tainting_freezes_scores_during_delay():
    cfg = EngineConfig(Boundary(upper=Line(1.0)), delay=2, tainting=True)
    eng = AccusationEngine(cfg, 2)
    eng.step(np.array([2.0, 0.5]), None, 1)
    eng.step(np.array([0.0, 0.4]), None, 2)
    eng.step(np.array([0.0, 0.4]), None, 3)
    assert eng.scores[1] == 0.5
    (ev,) = eng.step(np.array([0.0, 0.6]), None, 4)
    assert ev.user == 2


_CONFIGS = [
    EngineConfig(wald_thresholds(0.05, 0.05, "aggressive")),
    EngineConfig(wald_thresholds(0.05, 0.0)),
    EngineConfig(wald_thresholds(0.05, 0.05, "conservative").truncated(12, 0.3), "truncated_sprt"),
    EngineConfig(tardos_boundary(12, 0.5, -0.2), "sequential_tardos", delay=2, tainting=True),
    EngineConfig(Boundary(truncation=Truncation(12, 0.0)), "non_adaptive"),
    EngineConfig(Boundary(upper=Line(1.5)), delay=1, tainting=True),
]


@given(st.sampled_from(range(len(_CONFIGS))),
       st.lists(st.lists(st.one_of(st.floats(-1.5, 1.5), st.just(None)), min_size=4, max_size=4),
                min_size=1, max_size=12))
def test_vectorised_engine_matches_reference(k, rows):
    cfg = _CONFIGS[k]
    eng = AccusationEngine(cfg, 4)
    ref = [UserState() for _ in range(4)]
    for i, row in enumerate(rows, start=1):
        if eng.finished:
            break
        vals = np.array([0.0 if v is None else v for v in row])
        cert = np.array([v is None for v in row])
        expected = engine_step(cfg, ref, [CERTAINLY_INNOCENT if v is None else v for v in row], i)
        got = eng.step(vals, cert, i)
        assert [(e.user, e.kind, e.accused) for e in got] == [(e.user, e.kind, e.accused) for e in expected]
        for a, b in zip(got, expected):
            if b.overshoot is None:
                assert a.overshoot is None
            else:
                assert a.overshoot == pytest.approx(b.overshoot, abs=1e-12)
    snap = eng.states()
    for a, b in zip(snap, ref):
        assert a.status is b.status and a.decided_at == b.decided_at
        assert a.cumulative_score == pytest.approx(b.cumulative_score, abs=1e-12)


def test_events_csv():
    buf = io.StringIO()
    write_events_csv(buf, [(0, DecisionEvent(3, 7, ACCUSED, True, 0.1)),
                           (1, DecisionEvent(1, 10, FORCED, False))])
    assert buf.getvalue().splitlines() == [
        "trial,user,segment,kind,overshoot",
        "0,3,7,accused,0.10000000000000001",
        "1,1,10,forced_acquitted,",
    ]
