import math

import mpmath
import numpy as np
import pytest

from conftest import random_gmm
from gmmddpm.config import _random_ball
from gmmddpm.errors import TooFewSamples
from gmmddpm.gmm import diffused_marginal, new_gmm, posterior_weights
from gmmddpm.probes import (
    event_membership,
    probe_steps,
    trace_quantiles,
    tweedie_bound_check,
    typical_set_probability,
    zeta,
)
from gmmddpm.schedule import build_schedule


def test_zeta_single_component_zero():
    g = new_gmm([1.0], [[1.0, 2.0]])
    s = build_schedule(32)
    assert np.all(zeta(g, s, 10, np.random.default_rng(0).normal(size=(5, 2))) == 0)


def test_zeta_weighted_sum_zero(gen):
    s = build_schedule(64)
    for _ in range(20):
        g = random_gmm(gen)
        t = int(gen.integers(1, 65))
        x = gen.normal(0, 3, (50, g.d))
        p = posterior_weights(diffused_marginal(g, s.ab(t)), x)
        assert np.abs((p * zeta(g, s, t, x)).sum(1)).max() < 1e-9


def _mp_zeta(g, s, t, x):
    """Direct transcription in extended precision."""
    mpmath.mp.dps = 40
    a = mpmath.mpf(s.a(t))
    oma = mpmath.mpf(s.oma(t))
    sab = mpmath.sqrt(mpmath.mpf(s.ab(t)))
    m = [[sab * mpmath.mpf(v) for v in mu] for mu in g.means]
    xs = [mpmath.mpf(v) for v in x]
    logt = [mpmath.log(mpmath.mpf(w)) - sum((xi - mi) ** 2 for xi, mi in zip(xs, mk)) / 2
            for w, mk in zip(g.weights, m)]
    top = max(logt)
    e = [mpmath.exp(v - top) for v in logt]
    p = [v / sum(e) for v in e]
    mbar = [sum(p[k] * m[k][j] for k in range(g.K)) for j in range(g.d)]
    sc = [mbar[j] - xs[j] for j in range(g.d)]
    out = []
    for k in range(g.K):
        quad = sum(p[i] * (sum((xs[j] - m[k][j]) ** 2 for j in range(g.d))
                           - sum((xs[j] - m[i][j]) ** 2 for j in range(g.d))) for i in range(g.K))
        sdot = sum(sc[j] * sum(p[i] * (m[i][j] - m[k][j]) for i in range(g.K)) for j in range(g.d))
        out.append(oma * (1 + a) / (2 * a * a) * quad + oma / (a * a) * sdot)
    return out


def test_zeta_vs_extended_precision(gen):
    g = random_gmm(gen, K=3, d=2, spread=1.5)
    s = build_schedule(64)
    for t in (2, 20, 64):
        for x in gen.normal(0, 2, (4, 2)):
            ref = [float(v) for v in _mp_zeta(g, s, t, x)]
            got = zeta(g, s, t, x)
            assert np.allclose(got, ref, rtol=1e-10, atol=1e-10 * np.abs(ref).max())


def test_event_single_component_always_in():
    g = new_gmm([1.0], [[0.0, 0.0]])
    s = build_schedule(32)
    ev = event_membership(g, s, 5, np.random.default_rng(1).normal(0, 10, (100, 2)))
    assert ev.in_event.all() and np.allclose(ev.jensen_sum, 1.0) and np.all(ev.trace_value == 0)


def test_jensen_sum_at_least_one(gen):
    s = build_schedule(64)
    g = random_gmm(gen, K=5, d=3)
    ev = event_membership(g, s, 30, gen.normal(0, 4, (10_000, 3)))
    assert ev.jensen_sum.min() >= 1 - 1e-12


def test_event_trace_condition_fails_with_tiny_constant():
    g = new_gmm([0.5, 0.5], [[-3.0], [3.0]])
    s = build_schedule(64)
    t = 2
    # the midpoint splits posterior mass evenly: posterior variance = 9 ab_t
    ev = event_membership(g, s, t, [0.0], C1=0.01)
    assert ev.trace_value == pytest.approx(9 * s.ab(t), rel=1e-12)
    assert ev.trace_value > 0.01 * math.log(2 * 64)
    assert not ev.in_event


def test_typical_set_probability_cases():
    s = build_schedule(32)
    one = typical_set_probability(new_gmm([1.0], [[0.0]]), s, 10, 2000, rng=1)
    assert one.estimate == 0.0 and one.ci_low == 0.0
    g = new_gmm([0.5, 0.5], [[-2.0, 0.0], [2.0, 0.0]])
    est = [typical_set_probability(g, s, 20, 5000, C1=c, rng=3).estimate for c in (0.1, 1, 8)]
    assert est[0] >= est[1] >= est[2]
    with pytest.raises(TooFewSamples):
        typical_set_probability(g, s, 20, 10)


@pytest.mark.slow
def test_typical_set_separated_mixture():
    means = 6.0 * np.eye(8)[:4]
    g = new_gmm([0.25] * 4, means)
    s = build_schedule(128)
    for t in probe_steps(128):
        assert typical_set_probability(g, s, t, 100_000, 8, 8, rng=t).estimate < 1e-3


def test_trace_quantile_properties():
    s = build_schedule(64)
    zero = trace_quantiles(new_gmm([1.0], [[1.0]]), s, 10, 2000, rng=0)
    assert np.all(zero.values == 0)
    g = new_gmm([0.5, 0.5], [[-2.0], [2.0]])
    q = trace_quantiles(g, s, 20, 5000, rng=0)
    assert np.all(np.diff(q.values) >= 0)


@pytest.mark.slow
def test_trace_ratio_dimension_free():
    base = _random_ball(8, 2, 4.0, 0)
    s = build_schedule(64)
    for d in (2, 16, 128):
        means = np.zeros((8, d))
        means[:, :2] = base
        tq = trace_quantiles(new_gmm([1 / 8] * 8, means), s, 16, 20_000, rng=4)
        assert tq.ratio <= 10


def test_tweedie_cases():
    s = build_schedule(64)
    zero = tweedie_bound_check(new_gmm([1.0], [[0.0, 0.0]]), s, 30, 2000, C_clip=50, rng=1)
    assert zero.estimate == 0.0
    g = new_gmm([0.25] * 4, _random_ball(4, 4, 4.0, 1))
    fr = [tweedie_bound_check(g, s, 40, 5000, C_clip=c, rng=2).estimate for c in (0.2, 0.5, 4)]
    assert fr[0] >= fr[1] >= fr[2]
    assert tweedie_bound_check(g, s, 40, 100_000, C_clip=4, rng=3).estimate < 1e-3


def test_log_jensen_accurate_at_tiny_steps():
    g = new_gmm([0.5, 0.3, 0.2], [[2.0, 0.0], [-2.0, 0.0], [0.0, 3.0]])
    s = build_schedule(128)
    x = np.array([[0.1, 0.4], [1.0, 1.0], [-0.5, 2.0]])
    for t in (1, 32, 100):
        ev = event_membership(g, s, t, x)
        z = zeta(g, s, t, x)
        p = posterior_weights(diffused_marginal(g, s.ab(t)), x)
        mpmath.mp.dps = 60
        for i in range(3):
            # the zeta values are exact inputs here; only the reduction is checked
            ref = mpmath.log(sum(mpmath.mpf(p[i, k]) * mpmath.exp(-mpmath.mpf(z[i, k])) for k in range(3))
                             - sum(mpmath.mpf(p[i, k]) * (1 - mpmath.mpf(z[i, k])) for k in range(3)) + 1)
            assert ev.log_jensen[i] == pytest.approx(float(ref), rel=1e-6, abs=1e-300)
        assert ev.in_event.all()


def test_exp_excess_series_and_direct():
    from gmmddpm.probes import _exp_excess

    z = np.array([1e-12, -3e-4, 5e-4, 0.2, -4.0])
    ref = [float(mpmath.exp(-mpmath.mpf(v)) - 1 + mpmath.mpf(v)) for v in z]
    assert np.allclose(_exp_excess(z), ref, rtol=1e-12, atol=0)
