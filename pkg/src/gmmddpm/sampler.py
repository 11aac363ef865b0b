"""Forward noising, the DDPM reverse sampler and sampling targets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .batch import SampleBatch
from .errors import (
    BadDelta,
    DimensionMismatch,
    OracleDimensionMismatch,
    ValidationError,
    ZeroCount,
)
from .gmm import GaussianMixture, _resolve_rng, sample_gmm
from .schedule import NoiseSchedule

INIT_TAG = 0


@dataclass(frozen=True, eq=False)
class GaussianContaminant:
    """``N(mean, scale^2 I_d)`` used as the polluting part of a target."""

    mean: np.ndarray
    scale: float

    def sample(self, n, gen):
        return self.mean + self.scale * gen.standard_normal((n, self.mean.size))


def make_contaminant(spec, d: int) -> GaussianContaminant:
    """Build a contaminant from ``{"kind": "gaussian", "mean": ..., "scale": ...}``.

    ``mean`` may be a scalar (broadcast to all coordinates) or a length-``d`` list.
    """
    if isinstance(spec, GaussianContaminant):
        c = spec
    else:
        spec = dict(spec or {})
        kind = spec.get("kind", "gaussian")
        if kind != "gaussian":
            raise ValidationError(f"unsupported contaminant kind {kind!r}")
        mean = np.broadcast_to(np.asarray(spec.get("mean", 0.0), dtype=float), (d,)).copy()
        scale = float(spec.get("scale", 1.0))
        if scale <= 0:
            raise ValidationError("contaminant scale must be positive")
        c = GaussianContaminant(mean, scale)
    if c.mean.size != d:
        raise DimensionMismatch(f"contaminant has dimension {c.mean.size}, expected {d}")
    return c


@dataclass(frozen=True, eq=False)
class ContaminatedTarget:
    """The mixture ``(1 - delta) gmm + delta contaminant``; TV to ``gmm`` is at most delta."""

    gmm: GaussianMixture
    delta: float
    contaminant: GaussianContaminant

    @property
    def d(self) -> int:
        return self.gmm.d

    @property
    def epsilon_apprx_bound(self) -> float:
        return self.delta

    def sample(self, n, gen):
        polluted = gen.random(n) < self.delta
        pts = sample_gmm(self.gmm, n, gen).points
        k = int(polluted.sum())
        if k:
            pts[polluted] = self.contaminant.sample(k, gen)
        return pts

    def components(self):
        """Isotropic components as ``(weights, means, variances)``."""
        w = np.append((1 - self.delta) * self.gmm.weights, self.delta)
        m = np.vstack([self.gmm.means, self.contaminant.mean])
        v = np.append(np.ones(self.gmm.K), self.contaminant.scale ** 2)
        return w, m, v

    def diffused_components(self, alpha_bar: float, one_minus_alpha_bar: float | None = None):
        if one_minus_alpha_bar is None:
            one_minus_alpha_bar = 1.0 - alpha_bar
        w, m, v = self.components()
        return w, math.sqrt(alpha_bar) * m, alpha_bar * v + one_minus_alpha_bar

    def score(self, alpha_bar: float, x, one_minus_alpha_bar: float | None = None):
        """Score of the diffused target (all components isotropic)."""
        w, m, v = self.diffused_components(alpha_bar, one_minus_alpha_bar)
        return isotropic_mixture_score(w, m, v, x)

    def describe(self) -> dict:
        return {"delta": self.delta, "contaminant_mean": self.contaminant.mean.tolist(),
                "contaminant_scale": self.contaminant.scale}


def isotropic_mixture_score(weights, means, variances, x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = x.shape[1]
    diff = x[:, None, :] - means[None, :, :]
    sq = np.einsum("nkd,nkd->nk", diff, diff)
    logp = np.log(weights)[None, :] - 0.5 * sq / variances[None, :] - 0.5 * d * np.log(variances)[None, :]
    p = np.exp(logp - logp.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    return -np.einsum("nk,nkd->nd", p / variances[None, :], diff)


def contaminate_target(gmm: GaussianMixture, delta: float, contaminant=None):
    """Pollute ``gmm`` with mass ``delta`` from ``contaminant``; ``delta = 0`` returns ``gmm``."""
    if not (0.0 <= delta < 1.0):
        raise BadDelta(f"delta must lie in [0, 1), got {delta}")
    if delta == 0.0:
        return gmm
    c = make_contaminant(contaminant if contaminant is not None else {}, gmm.d)
    return ContaminatedTarget(gmm, float(delta), c)


def target_gmm(target) -> GaussianMixture:
    return target if isinstance(target, GaussianMixture) else target.gmm


def draw_target(target, n: int, gen) -> np.ndarray:
    if isinstance(target, GaussianMixture):
        return sample_gmm(target, n, gen).points
    return target.sample(n, gen)


def sample_target(target, n: int, rng) -> SampleBatch:
    if n < 1:
        raise ZeroCount("n must be >= 1")
    gen, seed = _resolve_rng(rng)
    return SampleBatch(draw_target(target, n, gen), seed=seed, meta="target")


def forward_sample(target, sched: NoiseSchedule, t: int, n: int, rng) -> SampleBatch:
    """Draw ``X_t = sqrt(alpha_bar_t) X_0 + sqrt(1 - alpha_bar_t) W``."""
    sched.check_step(t)
    if n < 1:
        raise ZeroCount("n must be >= 1")
    gen, seed = _resolve_rng(rng)
    x0 = draw_target(target, n, gen)
    pts = math.sqrt(sched.ab(t)) * x0 + math.sqrt(sched.omab(t)) * gen.standard_normal(x0.shape)
    return SampleBatch(pts, seed=seed, meta=f"forward-{t}")


def default_record_steps(T: int) -> list[int]:
    steps = {T, 1}
    t = T
    while t > 1:
        t //= 2
        steps.add(max(t, 1))
    return sorted(steps, reverse=True)


@dataclass
class ReverseTrajectory:
    output: SampleBatch
    snapshots: dict = field(default_factory=dict)
    backend: str = ""

    @property
    def steps(self) -> list[int]:
        return sorted(self.snapshots, reverse=True)


def ddpm_sample(oracle, sched: NoiseSchedule, d: int, n: int, seed: int, record=None,
                threads: int = 1, kernels=None, chain_offset: int = 0) -> ReverseTrajectory:
    """Run ``n`` independent reverse chains from ``Y_T ~ N(0, I_d)`` down to ``Y_1``.

    Chain ``i`` draws all its noise from a stream keyed on ``(seed, chain_offset + i)``
    so results do not depend on ``threads`` or on how chains are partitioned.
    ``record`` lists the ``t`` values whose full batch is kept (``None``: a
    halving ladder ``T, T/2, ..., 1``; empty: nothing).
    """
    if n < 1:
        raise ZeroCount("n must be >= 1")
    if getattr(oracle, "d", d) != d:
        raise OracleDimensionMismatch(f"oracle dimension {oracle.d} != {d}")
    kern = backend.get(kernels) if isinstance(kernels, (str, type(None))) else kernels
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    T = sched.T
    record = set(default_record_steps(T) if record is None else record)
    y = kern.normals(seed, INIT_TAG, chain_offset, n, d)
    snaps = {}
    if T in record:
        snaps[T] = y.copy()
    for t in range(T, 1, -1):
        oma = sched.oma(t)
        inv_sqrt_a = 1.0 / math.sqrt(sched.a(t))
        plan = oracle.plan(t) if hasattr(oracle, "plan") else None
        if plan is not None:
            if plan.means.shape[1] != d:
                raise OracleDimensionMismatch(f"oracle means have dimension {plan.means.shape[1]}")
            kern.reverse_step(y, chain_offset, seed, t, inv_sqrt_a, oma, plan.means, plan.logw,
                              plan.omega, plan.phase, plan.coef, plan.field_scale,
                              plan.clip_thresh, threads)
        else:
            s = np.asarray(oracle(t, y), dtype=float)
            if s.shape != y.shape:
                raise OracleDimensionMismatch(f"oracle returned shape {s.shape}, expected {y.shape}")
            z = kern.normals(seed, t, chain_offset, n, d)
            y = (y + oma * s) * inv_sqrt_a + math.sqrt(oma) * z
        if t - 1 in record:
            snaps[t - 1] = y.copy()
    out = SampleBatch(y, seed=seed, meta="reverse-output",
                      header={"T": T, "c0": sched.c0, "c1": sched.c1,
                              "oracle": getattr(oracle, "descriptor", repr(oracle))})
    return ReverseTrajectory(out, snaps, kern.NAME)


def gaussian_moment_oracle(mu, sched: NoiseSchedule):
    """Exact per-step mean and isotropic variance of ``Y_t`` for a one-component target.

    Returns ``(means, variances)`` of shapes ``(T, d)`` and ``(T,)``, indexed by ``t - 1``.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    T = sched.T
    m = np.zeros((T, mu.size))
    # 1 - v_{t-1} = alpha_t (1 - v_t); carried on the deficit so v_T = 1 stays exact
    deficit = np.zeros(T)
    for t in range(T, 1, -1):
        a = sched.a(t)
        oma = sched.oma(t)
        m[t - 2] = math.sqrt(a) * m[t - 1] + oma * math.sqrt(sched.ab(t - 1)) * mu
        deficit[t - 2] = a * deficit[t - 1]
    return m, 1.0 - deficit
