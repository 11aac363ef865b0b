"""Numerical probes of the quantities the dimension-free analysis rests on.

All probes use the exact mixture score, never an estimator: the typical set is
a property of the diffused mixture alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binomtest

from .errors import TooFewSamples, ValidationError
from .gmm import GaussianMixture, _as_batch, _sq_dists, diffused_marginal, posterior_weights
from .oracles import clip_threshold
from .sampler import forward_sample
from .schedule import NoiseSchedule

DEFAULT_C1 = 8.0
DEFAULT_C2 = 8.0
QUANTILE_LEVELS = (0.5, 0.9, 0.99, 0.999)
MIN_PROBE_N = 1000


def _marginal(gmm, sched, t):
    sched.check_step(t)
    return diffused_marginal(gmm, sched.ab(t))


def _zeta_parts(gmm_t: GaussianMixture, a: float, oma: float, xb):
    q = _sq_dists(xb, gmm_t.means)
    p = posterior_weights(gmm_t, xb)
    mbar = p @ gmm_t.means
    s = mbar - xb
    centred_q = q - (p * q).sum(1, keepdims=True)
    # s . sum_i pi_i (m_i - m_k) = s . mbar - s . m_k
    s_dot = (s * mbar).sum(1, keepdims=True) - s @ gmm_t.means.T
    quad_coef = oma * (1.0 + a) / (2.0 * a * a)
    score_coef = oma / (a * a)
    zeta = quad_coef * centred_q + score_coef * s_dot
    trace = (p * _sq_dists(mbar, gmm_t.means)).sum(1)
    return zeta, p, trace


def zeta(gmm: GaussianMixture, sched: NoiseSchedule, t: int, x) -> np.ndarray:
    """Per-component zeta values at step ``t``; shape ``(K,)`` or ``(n, K)``."""
    gmm_t = _marginal(gmm, sched, t)
    xb, single = _as_batch(gmm_t, x)
    z, _, _ = _zeta_parts(gmm_t, sched.a(t), sched.oma(t), xb)
    return z[0] if single else z


def log_KT(K: int, T: int) -> float:
    return math.log(K * T)


def _exp_excess(z):
    """``exp(-z) - 1 + z`` without cancellation for small ``|z|``."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-3
    zs = np.where(small, z, 0.0)
    series = zs * zs * (0.5 + zs * (-1 / 6 + zs * (1 / 24 + zs * (-1 / 120 + zs / 720))))
    with np.errstate(over="ignore"):
        direct = np.expm1(-np.where(small, 0.0, z)) + np.where(small, 0.0, z)
    return np.where(small, series, direct)


@dataclass
class EventDiagnostics:
    """``jensen_sum`` is the plain weighted sum; ``log_jensen`` is its logarithm
    evaluated through the weighted-zero identity, which stays accurate when the
    step is so small that the sum rounds to 1.  Membership uses ``log_jensen``.
    """

    trace_value: np.ndarray
    zeta_values: np.ndarray
    jensen_sum: np.ndarray
    log_jensen: np.ndarray
    in_event: np.ndarray
    posterior: np.ndarray
    C1: float
    C2: float
    trace_limit: float
    jensen_limit: float


def event_membership(gmm: GaussianMixture, sched: NoiseSchedule, t: int, x,
                     C1: float = DEFAULT_C1, C2: float = DEFAULT_C2) -> EventDiagnostics:
    """Evaluate both defining conditions of the typical set at ``x``.

    ``x`` may be one point or a batch; fields are scalars/vectors or arrays
    accordingly.
    """
    if C1 <= 0 or C2 <= 0:
        raise ValidationError("C1 and C2 must be positive")
    gmm_t = _marginal(gmm, sched, t)
    xb, single = _as_batch(gmm_t, x)
    z, p, trace = _zeta_parts(gmm_t, sched.a(t), sched.oma(t), xb)
    with np.errstate(over="ignore"):
        jensen = (p * np.exp(-z)).sum(1)
    # sum_k pi_k zeta_k = 0, so log sum_k pi_k e^{-zeta_k} = log1p(sum_k pi_k (e^{-zeta_k} - 1 + zeta_k))
    log_jensen = np.log1p((p * _exp_excess(z)).sum(1))
    lkt = log_KT(gmm.K, sched.T)
    trace_limit = C1 * lkt
    log_limit = C2 * sched.oma(t) ** 2 * lkt ** 2
    inside = (trace <= trace_limit) & (log_jensen <= log_limit)
    jensen_limit = math.exp(log_limit) if log_limit < 700 else math.inf
    if single:
        return EventDiagnostics(float(trace[0]), z[0], float(jensen[0]), float(log_jensen[0]),
                                bool(inside[0]), p[0], C1, C2, trace_limit, jensen_limit)
    return EventDiagnostics(trace, z, jensen, log_jensen, inside, p, C1, C2, trace_limit,
                            jensen_limit)


@dataclass
class ProbeEstimate:
    probe: str
    t: int
    K: int
    d: int
    T: int
    estimate: float
    ci_low: float
    ci_high: float
    thresholds: dict = field(default_factory=dict)
    count: int = 0
    n: int = 0

    def row(self) -> dict:
        return {"probe": self.probe, "t": self.t, "K": self.K, "d": self.d, "T": self.T,
                "estimate": self.estimate, "ci_low": self.ci_low, "ci_high": self.ci_high,
                "thresholds": self.thresholds}


def _wilson(k: int, n: int):
    ci = binomtest(k, n).proportion_ci(confidence_level=0.95, method="wilson")
    return float(ci.low), float(ci.high)


def _forward_points(gmm, sched, t, n, rng):
    if n < MIN_PROBE_N:
        raise TooFewSamples(f"need n >= {MIN_PROBE_N}, got {n}")
    return forward_sample(gmm, sched, t, n, rng).points


def typical_set_probability(gmm, sched, t, n, C1=DEFAULT_C1, C2=DEFAULT_C2, rng=0) -> ProbeEstimate:
    """Monte Carlo estimate of ``P(X_t not in E_t)`` with a Wilson 95% interval."""
    x = _forward_points(gmm, sched, t, n, rng)
    ev = event_membership(gmm, sched, t, x, C1, C2)
    k = int(np.count_nonzero(~ev.in_event))
    lo, hi = _wilson(k, n)
    return ProbeEstimate("typical_set", t, gmm.K, gmm.d, sched.T, k / n, lo, hi,
                         {"C1": C1, "C2": C2}, k, n)


@dataclass
class TraceQuantiles:
    levels: tuple
    values: np.ndarray
    log_KT: float

    @property
    def ratio(self) -> float:
        """Top quantile divided by ``log(KT)``."""
        return float(self.values[-1] / self.log_KT)

    def as_dict(self) -> dict:
        return {f"q{lvl:g}": float(v) for lvl, v in zip(self.levels, self.values)}


def trace_quantiles(gmm, sched, t, n, rng=0, levels=QUANTILE_LEVELS) -> TraceQuantiles:
    x = _forward_points(gmm, sched, t, n, rng)
    tr = np.maximum(_zeta_parts(_marginal(gmm, sched, t), sched.a(t), sched.oma(t), x)[2], 0.0)
    vals = np.quantile(tr, levels)
    # order statistics are monotone; guard interpolation round-off
    vals = np.maximum.accumulate(vals)
    return TraceQuantiles(tuple(levels), vals, log_KT(gmm.K, sched.T))


def tweedie_bound_check(gmm, sched, t, n, C_clip=4.0, rng=0) -> ProbeEstimate:
    """Fraction of forward draws whose exact score norm exceeds the clip threshold."""
    x = _forward_points(gmm, sched, t, n, rng)
    gmm_t = _marginal(gmm, sched, t)
    s = posterior_weights(gmm_t, x) @ gmm_t.means - x
    thr = clip_threshold(sched, gmm.d, t, C_clip)
    k = int(np.count_nonzero(np.einsum("nd,nd->n", s, s) > thr * thr))
    lo, hi = _wilson(k, n)
    return ProbeEstimate("tweedie_bound", t, gmm.K, gmm.d, sched.T, k / n, lo, hi,
                         {"C_clip": C_clip, "threshold": thr}, k, n)


def probe_steps(T: int) -> list[int]:
    """Representative steps spread over the trajectory."""
    return sorted({T, max(2, (3 * T) // 4), max(2, T // 2), max(2, T // 4), max(2, T // 16), 2, 1})
