import math
from dataclasses import replace

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmmddpm.errors import BadConstants, StepOutOfRange, TooFewSteps
from gmmddpm.schedule import build_schedule, schedule_csv, validate_schedule


def test_terminal_alpha_bar():
    assert build_schedule(100).ab(100) == pytest.approx(1e-4, rel=1e-14)


def test_two_step_hand_values():
    s = build_schedule(2, 2, 10)
    # recursion by hand: 0.25 + 10 (ln 2 / 2) 0.25 * 0.75
    ab1 = 0.25 + 10 * (math.log(2) / 2) * 0.25 * 0.75
    assert s.ab(2) == 0.25
    assert s.ab(1) == pytest.approx(ab1, rel=1e-14)
    assert ab1 == pytest.approx(0.8999, abs=1e-4)
    assert s.a(2) == pytest.approx(0.25 / ab1, rel=1e-14)
    assert s.a(2) == pytest.approx(0.2778, abs=1e-4)
    rep = validate_schedule(s)
    assert rep.passed
    assert s.oma(1) == pytest.approx(1 - ab1, rel=1e-12)
    assert s.oma(1) <= 2 ** -2.5


def _mp_schedule(T, c0, c1):
    """Independent high-precision run of the additive recursion with the logistic guard."""
    mpmath.mp.dps = 50
    c = mpmath.mpf(c1) * mpmath.log(T) / T
    ab = {T: mpmath.mpf(T) ** (-c0)}
    for t in range(T, 1, -1):
        if c * ab[t] < 1:
            ab[t - 1] = ab[t] + c * ab[t] * (1 - ab[t])
        else:
            lg = mpmath.log(ab[t] / (1 - ab[t])) + c
            ab[t - 1] = 1 / (1 + mpmath.exp(-lg))
    return ab


@pytest.mark.parametrize("T", [2, 8, 16, 64, 300])
def test_matches_high_precision_recursion(T):
    s = build_schedule(T)
    ref = _mp_schedule(T, 2, 10)
    for t in range(1, T + 1):
        assert s.omab(t) == pytest.approx(float(1 - ref[t]), rel=1e-10)
    for t in range(2, T + 1):
        assert s.oma(t) == pytest.approx(float(1 - ref[t] / ref[t - 1]), rel=1e-9)


@pytest.mark.parametrize("T", [16, 64, 128, 256, 1024])
def test_certified(T):
    rep = validate_schedule(build_schedule(T))
    assert rep.passed, rep.violations


def test_guard_counts():
    assert build_schedule(8).guarded_steps > 0
    assert build_schedule(64).guarded_steps == 0


def test_tampered_schedule_flagged():
    s = build_schedule(128)
    oma = np.array(s.one_minus_alpha)
    oma[1] = 0.5
    bad = replace(s, one_minus_alpha=oma)
    rep = validate_schedule(bad)
    assert not rep.passed and 2 in rep.violating_steps


def test_bad_inputs():
    with pytest.raises(TooFewSteps):
        build_schedule(1)
    with pytest.raises(BadConstants):
        build_schedule(10, 2, 6)
    with pytest.raises(StepOutOfRange):
        build_schedule(10).check_step(11)


def test_schedule_csv_rows():
    text = schedule_csv(build_schedule(5))
    assert text.splitlines()[0] == "t,alpha,alpha_bar,one_minus_alpha"
    assert len(text.splitlines()) == 6


@settings(max_examples=60, deadline=None)
@given(T=st.integers(2, 3000), c0=st.floats(0.5, 3.0), ratio=st.floats(4.01, 8.0))
def test_monotone_and_in_range(T, c0, ratio):
    s = build_schedule(T, c0, c0 * ratio)
    oma = np.asarray(s.one_minus_alpha)
    omab = np.asarray(s.one_minus_alpha_bar)
    assert np.all((oma > 0) & (oma < 1))
    assert np.all(np.diff(omab) > 0)
    assert np.all(oma[1:] <= s.c1 * math.log(T) / T)
