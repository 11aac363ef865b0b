"""The compiled kernels and the numpy fallback must agree."""

import numpy as np
import pytest

from gmmddpm import _pykernels, backend
from gmmddpm.gmm import new_gmm
from gmmddpm.oracles import clip_oracle, exact_oracle, perturb_oracle
from gmmddpm.sampler import ddpm_sample
from gmmddpm.schedule import build_schedule

compiled = pytest.mark.skipif(not backend.compiled, reason="extension not built")


def test_backend_selection():
    assert backend.get("python") is _pykernels
    assert backend.kernels.NAME in ("cython", "python")


@compiled
def test_normals_same_stream():
    # integer hashing is exact; numpy's vectorised log/cos may differ from libm by an ulp
    a = backend.get("cython").normals(123, 7, 50, 1000, 3)
    b = _pykernels.normals(123, 7, 50, 1000, 3)
    assert np.allclose(a, b, rtol=1e-14, atol=1e-15)


def test_normals_look_standard():
    z = _pykernels.normals(1, 1, 0, 200_000, 1)[:, 0]
    assert abs(z.mean()) < 0.01 and abs(z.var() - 1) < 0.01


@compiled
@pytest.mark.parametrize("kind", ["exact", "field", "clip"])
def test_sampler_backends_agree(kind):
    g = new_gmm([0.3, 0.7], [[2.0, 0.0, 1.0], [-1.0, 1.0, 0.0]])
    s = build_schedule(32)
    o = exact_oracle(g, s)
    if kind == "field":
        o = perturb_oracle(o, "gaussian-field", 0.3, 2)
    elif kind == "clip":
        o = clip_oracle(o, s, 3, 0.5)
    a = ddpm_sample(o, s, 3, 2000, 5, record=[], kernels="cython").output.points
    b = ddpm_sample(o, s, 3, 2000, 5, record=[], kernels="python").output.points
    assert np.abs(a - b).max() < 1e-10


def test_plan_matches_oracle_call():
    g = new_gmm([0.5, 0.5], [[1.0, 0.0], [-1.0, 2.0]])
    s = build_schedule(16)
    o = perturb_oracle(exact_oracle(g, s), "gaussian-field", 0.4, 3)
    x = np.random.default_rng(0).normal(0, 2, (100, 2))
    p = o.plan(7)
    for k in (backend.get("python"), backend.kernels):
        got = k.score_batch(x, p.means, p.logw, p.omega, p.phase, p.coef, p.field_scale,
                            p.clip_thresh)
        assert np.allclose(got, o(7, x), atol=1e-12)
