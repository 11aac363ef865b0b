import math

import numpy as np
import pytest

from gmmddpm.batch import read_batch_csv, write_batch_csv
from gmmddpm.errors import BadDelta, OracleDimensionMismatch
from gmmddpm.gmm import diffused_marginal, log_density, new_gmm
from gmmddpm.metrics import tv_1d_grid
from gmmddpm.oracles import exact_oracle
from gmmddpm.sampler import (
    ContaminatedTarget,
    contaminate_target,
    ddpm_sample,
    forward_sample,
    gaussian_moment_oracle,
)
from gmmddpm.schedule import NoiseSchedule, build_schedule


def test_forward_terminal_mean():
    g = new_gmm([0.5, 0.5], [[3.0, 0.0], [-1.0, 2.0]])
    s = build_schedule(64)
    x = forward_sample(g, s, 64, 50_000, 1).points
    se = x.std(0, ddof=1) / math.sqrt(x.shape[0])
    expect = math.sqrt(s.ab(64)) * g.mean()
    assert np.all(np.abs(x.mean(0) - expect) < 5 * se)


def test_forward_zero_noise_identity():
    g = new_gmm([1.0], [[2.0]])
    s = NoiseSchedule(1, 2.0, 10.0, np.ones(1), np.ones(1), np.zeros(1), np.zeros(1))
    a = forward_sample(g, s, 1, 100, 5).points
    ref = forward_sample(g, s, 1, 100, 5).points
    assert np.array_equal(a, ref)
    assert np.abs(a.mean() - 2.0) < 0.5 and a.std() > 0.5


def test_forward_likelihood_prefers_diffused():
    g = new_gmm([0.5, 0.5], [[4.0], [-4.0]])
    s = build_schedule(64)
    x = forward_sample(g, s, 60, 5000, 2).points
    assert log_density(diffused_marginal(g, s.ab(60)), x).mean() > log_density(g, x).mean()


def test_no_reverse_steps_returns_init():
    g = new_gmm([1.0], [[1.0, 1.0]])
    s = NoiseSchedule(1, 2.0, 10.0, np.ones(1), np.ones(1), np.zeros(1), np.zeros(1))
    out = ddpm_sample(exact_oracle(g, s), s, 2, 1000, 9, record=[]).output.points
    from gmmddpm import backend
    assert np.array_equal(out, backend.kernels.normals(9, 0, 0, 1000, 2))


def test_moment_oracle_trivial_and_duplicate():
    s = build_schedule(64)
    m, v = gaussian_moment_oracle([0.0, 0.0], s)
    assert np.all(m == 0) and np.all(v == 1.0)
    m, v = gaussian_moment_oracle([3.0], s)
    # duplicate of the affine recursion, written forwards in t
    mt = 0.0
    for t in range(64, 1, -1):
        mt = math.sqrt(s.a(t)) * mt + s.oma(t) * math.sqrt(s.ab(t - 1)) * 3.0
    assert abs(m[0, 0] - mt) < 1e-12
    assert abs(m[0, 0] - 3.0) < 0.01


def test_single_gaussian_moments():
    mu = np.array([3.0, 0.0])
    g = new_gmm([1.0], [mu])
    s = build_schedule(64)
    traj = ddpm_sample(exact_oracle(g, s), s, 2, 100_000, 4)
    m, v = gaussian_moment_oracle(mu, s)
    n = 100_000
    for t, y in traj.snapshots.items():
        se_m = np.sqrt(v[t - 1] / n)
        assert np.all(np.abs(y.mean(0) - m[t - 1]) < 5 * se_m)
        se_v = v[t - 1] * math.sqrt(2 / (n - 1))
        assert np.all(np.abs(y.var(0, ddof=1) - v[t - 1]) < 5 * se_v)


def test_determinism_threads_and_partition():
    g = new_gmm([0.5, 0.5], [[2.0, 0.0], [-2.0, 1.0]])
    s = build_schedule(32)
    o = exact_oracle(g, s)
    a = ddpm_sample(o, s, 2, 3000, 77, record=[]).output.points
    b = ddpm_sample(o, s, 2, 3000, 77, record=[], threads=3).output.points
    assert np.array_equal(a, b)
    lo = ddpm_sample(o, s, 2, 1000, 77, record=[]).output.points
    hi = ddpm_sample(o, s, 2, 2000, 77, record=[], chain_offset=1000).output.points
    assert np.array_equal(np.vstack([lo, hi]), a)


def test_oracle_dimension_checked():
    g = new_gmm([1.0], [[0.0, 0.0]])
    s = build_schedule(8)
    with pytest.raises(OracleDimensionMismatch):
        ddpm_sample(exact_oracle(g, s), s, 3, 10, 0)


def test_contamination_rules():
    g = new_gmm([1.0], [[0.0]])
    assert contaminate_target(g, 0.0) is g
    with pytest.raises(BadDelta):
        contaminate_target(g, 1.0)
    t = contaminate_target(g, 0.01, {"mean": 0.0, "scale": math.sqrt(2)})
    assert isinstance(t, ContaminatedTarget) and t.epsilon_apprx_bound == 0.01


def test_contamination_tv_bounded_by_delta():
    from scipy import integrate
    from scipy.stats import norm

    g = new_gmm([1.0], [[0.0]])
    delta = 0.01
    c = norm(0, math.sqrt(2))
    f = lambda x: 0.5 * abs((1 - delta) * norm.pdf(x) + delta * c.pdf(x) - norm.pdf(x))
    tv, _ = integrate.quad(f, -40, 40, points=[-2, 0, 2], limit=200)
    assert tv <= delta
    assert tv > 0


def test_contaminated_score_vs_difference():
    g = new_gmm([0.6, 0.4], [[1.0, 0.0], [-2.0, 1.0]])
    tgt = contaminate_target(g, 0.2, {"mean": [0.5, 0.5], "scale": 2.0})
    w, m, v = tgt.diffused_components(0.3)

    def logp(x):
        q = ((x - m) ** 2).sum(1)
        return math.log(np.sum(w * np.exp(-q / (2 * v)) / (2 * math.pi * v)))

    x = np.array([0.4, -0.7])
    h = 1e-5
    fd = [(logp(x + h * e) - logp(x - h * e)) / (2 * h) for e in np.eye(2)]
    assert np.allclose(tgt.score(0.3, x)[0], fd, rtol=1e-7)


def test_batch_csv_roundtrip(tmp_path):
    g = new_gmm([1.0], [[0.0, 0.0]])
    s = build_schedule(8)
    out = ddpm_sample(exact_oracle(g, s), s, 2, 50, 3, record=[]).output
    write_batch_csv(out, tmp_path / "b.csv")
    back = read_batch_csv(tmp_path / "b.csv")
    assert np.array_equal(back.points, out.points) and back.seed == 3
    assert back.header["T"] == "8"
