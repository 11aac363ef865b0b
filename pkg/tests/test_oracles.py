import math

import numpy as np
import pytest

from conftest import random_gmm
from gmmddpm.errors import NegativeAmplitude, TooFewSamples
from gmmddpm.gmm import diffused_marginal, new_gmm, score
from gmmddpm.oracles import (
    ScoreOracle,
    clip_oracle,
    clip_threshold,
    exact_oracle,
    measure_score_error,
    perturb_oracle,
)
from gmmddpm.schedule import build_schedule


class Const(ScoreOracle):
    def __init__(self, v):
        self.v = np.asarray(v, dtype=float)
        self.d = self.v.size
        self.descriptor = "const"

    def __call__(self, t, x):
        x = np.asarray(x)
        return np.broadcast_to(self.v, x.shape).copy()


def test_exact_standard_normal():
    s = build_schedule(16)
    o = exact_oracle(new_gmm([1.0], [[0.0, 0.0]]), s)
    x = np.array([[0.3, -1.2], [2.0, 0.5]])
    for t in (1, 8, 16):
        assert np.allclose(o(t, x), -x, atol=1e-15)


def test_exact_matches_core_score(gen):
    g = random_gmm(gen, K=4, d=3)
    s = build_schedule(64)
    o = exact_oracle(g, s)
    for _ in range(50):
        t = int(gen.integers(1, 65))
        x = gen.normal(0, 3, (20, 3))
        assert np.array_equal(o(t, x), score(diffused_marginal(g, s.ab(t)), x))


def test_exact_symmetric_origin(sym1d):
    s = build_schedule(16)
    o = exact_oracle(sym1d, s)
    assert all(abs(o(t, [0.0])[0]) < 1e-15 for t in range(1, 17))


def test_clip_threshold_hand_value():
    s = build_schedule(100)
    t = int(np.argmin(np.abs(np.asarray(s.one_minus_alpha_bar) - 0.5))) + 1
    d = 2
    expect = 4 * math.sqrt(d * math.log(200) / s.omab(t))
    assert clip_threshold(s, d, t, 4.0) == pytest.approx(expect, rel=1e-14)
    # value when 1 - alpha_bar is exactly one half: 18.4145, quoted as 18.42
    half = 4 * math.sqrt(2 * math.log(200) / 0.5)
    assert half == pytest.approx(18.41445930401092, rel=1e-14)
    assert half == pytest.approx(18.42, abs=0.01)


def test_clip_passes_small_and_zeroes_large():
    s = build_schedule(100)
    thr = clip_threshold(s, 2, 50, 4.0)
    small = clip_oracle(Const([1e-3, 0.0]), s, 2)
    assert np.array_equal(small(50, np.zeros(2)), [1e-3, 0.0])
    big = clip_oracle(Const([10 * thr, 0.0]), s, 2)
    assert np.array_equal(big(50, np.zeros((3, 2))), np.zeros((3, 2)))


def test_zero_amplitude_is_identity(gen):
    g = random_gmm(gen, K=3, d=2)
    s = build_schedule(32)
    inner = exact_oracle(g, s)
    o = perturb_oracle(inner, "gaussian-field", 0.0, 1)
    x = gen.normal(0, 2, (30, 2))
    assert np.array_equal(o(5, x), inner(5, x))


def test_mean_jitter_single_component():
    g = new_gmm([1.0], [[1.0, -1.0]])
    s = build_schedule(32)
    inner = exact_oracle(g, s)
    o = perturb_oracle(inner, "mean-jitter", 0.3, 4)
    x = np.array([[0.2, 0.4], [-1.0, 3.0]])
    for t in (1, 10, 32):
        assert np.allclose(o(t, x) - inner(t, x), math.sqrt(s.ab(t)) * o.offsets[0], atol=1e-13)
    with pytest.raises(NegativeAmplitude):
        perturb_oracle(inner, "mean-jitter", -1.0, 0)


def test_exact_error_is_zero(gen):
    g = random_gmm(gen, K=3, d=2)
    s = build_schedule(16)
    rep = measure_score_error(exact_oracle(g, s), g, s, 500, 3)
    assert rep.epsilon_score == 0.0 and np.all(rep.per_t == 0)
    with pytest.raises(TooFewSamples):
        measure_score_error(exact_oracle(g, s), g, s, 10, 3)


def test_clip_rarely_triggers():
    g = new_gmm([0.25] * 4, [[3, 0, 0, 0], [0, 3, 0, 0], [-3, 0, 1, 0], [0, -3, 0, 1]])
    s = build_schedule(64)
    rep = measure_score_error(clip_oracle(exact_oracle(g, s), s, 4), g, s, 2000, 5)
    assert rep.epsilon_score < 1e-3


@pytest.mark.parametrize("a", [0.2, 0.5])
def test_field_amplitude_calibrated(a):
    g = new_gmm([0.5, 0.5], [[2.0, 0.0], [-2.0, 0.0]])
    s = build_schedule(32)
    o = perturb_oracle(exact_oracle(g, s), "gaussian-field", a, 7)
    rep = measure_score_error(o, g, s, 20_000, 8)
    assert 0.8 * a <= rep.epsilon_score <= 1.2 * a
    if a == 0.5:
        assert 0.4 <= rep.epsilon_score <= 0.6


def test_weighted_error_variant(gen):
    g = random_gmm(gen, K=2, d=2)
    s = build_schedule(16)
    rep = measure_score_error(perturb_oracle(exact_oracle(g, s), "gaussian-field", 0.3, 1),
                              g, s, 400, 2)
    expect = math.sqrt(np.sum(np.asarray(s.one_minus_alpha_bar[1:]) * rep.per_t_gmm[1:]) / 16)
    assert rep.epsilon_score_gmm == pytest.approx(expect, rel=1e-12)
    assert rep.to_dict()["n"] == 400
