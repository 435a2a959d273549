import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tracelab.channel import ATTACKS, CollusionChannel, make_attack, marginal_output_prob, pirate_output

# oracle: 1 - (1 - ln2/10)^10 at 30 digits (tests/oracles/generate.py)
ALL_ONE_MARGINAL = 0.51243956099951819


def test_attack_fixtures():
    assert make_attack("interleaving", 10).theta[7] == pytest.approx(0.7)
    assert make_attack("all_one", 10).theta == (0.0,) + (1.0,) * 10
    assert make_attack("majority", 4).theta == (0.0, 0.0, 0.5, 1.0, 1.0)
    assert make_attack("minority", 3).theta == (0.0, 1.0, 0.0, 1.0)
    assert make_attack("coin", 3).theta == (0.0, 0.5, 0.5, 1.0)


@given(st.sampled_from(ATTACKS), st.integers(1, 40))
def test_marking_assumption(kind, c):
    ch = make_attack(kind, c)
    assert ch.theta[0] == 0.0 and ch.theta[c] == 1.0 and ch.c == c


def test_bad_channels():
    with pytest.raises(ValueError):
        make_attack("interleaving", 0)
    with pytest.raises(ValueError):
        make_attack("random", 3)
    with pytest.raises(ValueError, match="marking"):
        CollusionChannel((0.1, 1.0))
    with pytest.raises(ValueError):
        CollusionChannel((0.0, 1.5, 1.0))


def test_resized():
    assert make_attack("majority", 5).resized(3) == make_attack("majority", 3)
    with pytest.raises(ValueError):
        CollusionChannel((0.0, 1.0)).resized(2)


@given(st.integers(1, 30), st.floats(0.01, 0.99))
def test_interleaving_marginal_is_p(c, p):
    assert marginal_output_prob(make_attack("interleaving", c), p) == pytest.approx(p, abs=1e-12)


def test_marginal_fixtures():
    assert marginal_output_prob(make_attack("all_one", 10), math.log(2) / 10) == pytest.approx(
        ALL_ONE_MARGINAL, abs=1e-12)
    assert marginal_output_prob(make_attack("coin", 3), 0.5) == pytest.approx(0.5, abs=1e-15)


def test_pirate_output_deterministic_cases():
    rng = np.random.default_rng(0)
    assert all(pirate_output(make_attack("all_one", 3), [0, 0, 1], rng) == 1 for _ in range(200))
    assert all(pirate_output(make_attack("interleaving", 4), [0] * 4, rng) == 0 for _ in range(200))


def test_pirate_output_frequency():
    rng = np.random.default_rng(1)
    ch = make_attack("interleaving", 10)
    bits = [1] * 7 + [0] * 3
    freq = np.mean([pirate_output(ch, bits, rng) for _ in range(100_000)])
    assert abs(freq - 0.7) < 0.005


def test_pirate_output_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError, match="empty coalition"):
        pirate_output(make_attack("interleaving", 2), [], rng)
    with pytest.raises(ValueError):
        pirate_output(make_attack("interleaving", 2), [0, 1, 1], rng)


def test_pirate_output_consumes_one_draw():
    a, b = np.random.default_rng(9), np.random.default_rng(9)
    pirate_output(make_attack("all_one", 2), [1, 1], a)
    b.random()
    assert a.random() == b.random()
