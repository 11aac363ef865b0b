"""Score oracles (exact, clipped, perturbed) and score-error measurement.

An oracle is a pure callable ``oracle(t, x)`` on points of shape ``(n, d)`` or
``(d,)``.  Oracles built here also expose ``plan(t)``: the parameters of the
fused compiled step (mixture means, optional Fourier field, optional clip).
``plan`` returns ``None`` when a composition cannot be expressed that way, and
the sampler then falls back to calling the oracle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import backend
from .errors import NegativeAmplitude, TooFewSamples, ValidationError
from .gmm import GaussianMixture, diffused_marginal, new_gmm, score
from .sampler import ContaminatedTarget, forward_sample
from .schedule import NoiseSchedule

DEFAULT_C_CLIP = 4.0
FIELD_FEATURES = 64
FIELD_CALIBRATION_N = 8192


@dataclass(frozen=True, eq=False)
class StepPlan:
    means: np.ndarray
    logw: np.ndarray
    omega: np.ndarray
    phase: np.ndarray
    coef: np.ndarray
    field_scale: float = 0.0
    clip_thresh: float = math.inf


class ScoreOracle:
    descriptor: str = "oracle"
    d: int

    def __call__(self, t: int, x):
        raise NotImplementedError

    def plan(self, t: int):
        return None

    def __repr__(self):
        return f"<{type(self).__name__} {self.descriptor}>"


def _eval_plan(plan: StepPlan, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = np.ascontiguousarray(x[None, :] if single else x)
    s = backend.kernels.score_batch(xb, plan.means, plan.logw, plan.omega, plan.phase,
                                    plan.coef, plan.field_scale, plan.clip_thresh)
    return s[0] if single else s


class ExactOracle(ScoreOracle):
    """Closed-form score of the diffused mixture at every step."""

    def __init__(self, gmm: GaussianMixture, sched: NoiseSchedule, descriptor: str | None = None):
        self.gmm = gmm
        self.sched = sched
        self.d = gmm.d
        self.descriptor = descriptor or f"exact(K={gmm.K},d={gmm.d})"
        self._logw = np.ascontiguousarray(gmm.log_weights)
        z = np.zeros((0, self.d))
        self._no_field = (z, np.zeros(0), z)

    def marginal(self, t: int) -> GaussianMixture:
        self.sched.check_step(t)
        return diffused_marginal(self.gmm, self.sched.ab(t))

    def __call__(self, t, x):
        return score(self.marginal(t), x)

    def plan(self, t):
        m = np.ascontiguousarray(self.marginal(t).means)
        return StepPlan(m, self._logw, *self._no_field)


def exact_oracle(gmm: GaussianMixture, sched: NoiseSchedule) -> ExactOracle:
    return ExactOracle(gmm, sched)


def clip_threshold(sched: NoiseSchedule, d: int, t: int, c_clip: float) -> float:
    """``C_clip * sqrt(d log(d T) / (1 - alpha_bar_t))``."""
    return c_clip * math.sqrt(d * math.log(d * sched.T) / sched.omab(t))


class ClipOracle(ScoreOracle):
    """Zero the inner estimate wherever its norm exceeds the step's threshold."""

    def __init__(self, inner: ScoreOracle, sched: NoiseSchedule, d: int, c_clip: float):
        if c_clip <= 0:
            raise ValidationError("C_clip must be positive")
        self.inner = inner
        self.sched = sched
        self.d = d
        self.c_clip = float(c_clip)
        self.descriptor = f"clip({inner.descriptor},C={c_clip:g})"

    def threshold(self, t):
        return clip_threshold(self.sched, self.d, t, self.c_clip)

    def __call__(self, t, x):
        s = np.array(self.inner(t, x), dtype=float)
        thr = self.threshold(t)
        if s.ndim == 1:
            return s if s @ s <= thr * thr else np.zeros_like(s)
        s[np.einsum("nd,nd->n", s, s) > thr * thr] = 0.0
        return s

    def plan(self, t):
        p = self.inner.plan(t)
        if p is None:
            return None
        return replace(p, clip_thresh=min(p.clip_thresh, self.threshold(t)))


def clip_oracle(inner, sched, d, c_clip=DEFAULT_C_CLIP) -> ClipOracle:
    return ClipOracle(inner, sched, d, c_clip)


def _reference(oracle):
    """Find the mixture and schedule an oracle chain is built on."""
    o = oracle
    while o is not None:
        if isinstance(o, ExactOracle):
            return o.gmm, o.sched
        o = getattr(o, "inner", None)
    return None, None


class FourierField:
    """Fixed smooth random field ``f(x) = sum_j c_j cos(w_j . x + b_j)``."""

    def __init__(self, d: int, seed: int, features: int = FIELD_FEATURES):
        gen = np.random.default_rng([int(seed), 0x5F1E1D])
        self.omega = np.ascontiguousarray(gen.standard_normal((features, d)))
        self.phase = np.ascontiguousarray(gen.uniform(0.0, 2 * math.pi, features))
        self.coef = np.ascontiguousarray(gen.standard_normal((features, d)) * math.sqrt(2.0 / (features * d)))

    def __call__(self, x):
        x = np.atleast_2d(x)
        return np.cos(x @ self.omega.T + self.phase) @ self.coef


class FieldOracle(ScoreOracle):
    """Inner oracle plus ``amplitude`` times a per-step RMS-normalised random field.

    The normaliser for step ``t`` is the field's root-mean-square under the
    diffused reference mixture, estimated once from a fixed calibration sample.
    """

    def __init__(self, inner, amplitude, seed, gmm=None, sched=None,
                 features=FIELD_FEATURES, calibration_n=FIELD_CALIBRATION_N):
        ref_gmm, ref_sched = _reference(inner)
        gmm = gmm if gmm is not None else ref_gmm
        sched = sched if sched is not None else ref_sched
        if gmm is None or sched is None:
            raise ValidationError("gaussian-field perturbation needs a reference mixture and schedule")
        self.inner = inner
        self.amplitude = float(amplitude)
        self.d = gmm.d
        self.sched = sched
        self.field = FourierField(gmm.d, seed, features)
        self.descriptor = f"field({inner.descriptor},a={amplitude:g},seed={seed})"
        self.rms = np.empty(sched.T)
        gen = np.random.default_rng([int(seed), 0xCA11B])
        for t in range(1, sched.T + 1):
            x = forward_sample(gmm, sched, t, calibration_n, gen).points
            f = self.field(x)
            self.rms[t - 1] = math.sqrt(np.mean(np.einsum("nd,nd->n", f, f)))

    def scale(self, t):
        return self.amplitude / self.rms[t - 1]

    def __call__(self, t, x):
        s = np.asarray(self.inner(t, x), dtype=float)
        if self.amplitude == 0.0:
            return s
        pert = self.scale(t) * self.field(x)
        return s + (pert[0] if s.ndim == 1 else pert)

    def plan(self, t):
        p = self.inner.plan(t)
        if p is None or math.isfinite(p.clip_thresh) or p.field_scale != 0.0:
            return None
        if self.amplitude == 0.0:
            return p
        return replace(p, omega=self.field.omega, phase=self.field.phase, coef=self.field.coef,
                       field_scale=self.scale(t))


def perturb_oracle(inner, model: str, amplitude: float, seed: int, **kwargs) -> ScoreOracle:
    """Deterministically corrupt ``inner``.

    ``gaussian-field`` adds a smooth random field with unit RMS (per step)
    under the reference marginal, times ``amplitude``.  ``mean-jitter``
    replaces the exact oracle by the exact score of a mixture whose means are
    shifted by i.i.d. ``N(0, amplitude^2 I)`` offsets.
    """
    if amplitude < 0:
        raise NegativeAmplitude(f"amplitude must be >= 0, got {amplitude}")
    if model == "gaussian-field":
        return FieldOracle(inner, amplitude, seed, **kwargs)
    if model == "mean-jitter":
        if not isinstance(inner, ExactOracle):
            raise ValidationError("mean-jitter perturbs an exact oracle only")
        gen = np.random.default_rng([int(seed), 0x71773])
        offsets = amplitude * gen.standard_normal(inner.gmm.means.shape)
        jittered = new_gmm(inner.gmm.weights, inner.gmm.means + offsets)
        o = ExactOracle(jittered, inner.sched,
                        descriptor=f"jitter({inner.descriptor},a={amplitude:g},seed={seed})")
        o.offsets = offsets
        return o
    raise ValidationError(f"unknown perturbation model {model!r}")


@dataclass
class ScoreErrorReport:
    """Per-step mean squared score errors and their aggregates.

    ``per_t[t-1]`` is measured under the target's own forward marginal;
    ``per_t_gmm`` under the reference mixture's marginal (the same array for
    an uncontaminated target).
    """

    per_t: np.ndarray
    per_t_se: np.ndarray
    per_t_gmm: np.ndarray
    per_t_gmm_se: np.ndarray
    epsilon_score: float
    epsilon_score_gmm: float
    n: int
    seed: int | None
    oracle: str
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "per_t": [float(v) for v in self.per_t],
            "per_t_se": [float(v) for v in self.per_t_se],
            "per_t_gmm": [float(v) for v in self.per_t_gmm],
            "epsilon_score": self.epsilon_score,
            "epsilon_score_gmm": self.epsilon_score_gmm,
            "n": self.n,
            "seed": self.seed,
            "oracle": self.oracle,
            **self.extra,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _sq_err_stats(candidate, truth_fn, t, x):
    diff = np.asarray(candidate(t, x), dtype=float) - truth_fn(x)
    e = np.einsum("nd,nd->n", diff, diff)
    return float(e.mean()), float(e.std(ddof=1) / math.sqrt(e.size))


def measure_score_error(candidate, gmm: GaussianMixture, sched: NoiseSchedule, n: int, seed: int,
                        target=None) -> ScoreErrorReport:
    """Monte Carlo estimate of ``E ||candidate(t, X_t) - s*_t(X_t)||^2`` for every step.

    Step ``t`` uses its own generator derived from ``(seed, t)``.  When
    ``target`` is a contaminated mixture the primary errors are measured under
    its marginal against its own score; the mixture-referenced errors are
    always reported separately.
    """
    if n < 100:
        raise TooFewSamples(f"need n >= 100, got {n}")
    T = sched.T
    per_gmm = np.empty(T)
    per_gmm_se = np.empty(T)
    contaminated = isinstance(target, ContaminatedTarget)
    per = np.empty(T) if contaminated else per_gmm
    per_se = np.empty(T) if contaminated else per_gmm_se
    for t in range(1, T + 1):
        marg = diffused_marginal(gmm, sched.ab(t))
        x = forward_sample(gmm, sched, t, n, np.random.default_rng([int(seed), t, 0])).points
        per_gmm[t - 1], per_gmm_se[t - 1] = _sq_err_stats(candidate, lambda z: score(marg, z), t, x)
        if contaminated:
            xc = forward_sample(target, sched, t, n, np.random.default_rng([int(seed), t, 1])).points
            per[t - 1], per_se[t - 1] = _sq_err_stats(
                candidate, lambda z: target.score(sched.ab(t), z, sched.omab(t)), t, xc)
    eps = math.sqrt(float(np.mean(per)))
    weights = np.asarray(sched.one_minus_alpha_bar[1:])
    eps_gmm = math.sqrt(float(np.sum(weights * per_gmm[1:])) / T)
    return ScoreErrorReport(per, per_se, per_gmm, per_gmm_se, eps, eps_gmm, n,
                            int(seed), getattr(candidate, "descriptor", repr(candidate)))
