"""Isotropic unit-covariance Gaussian mixtures and their diffused marginals.

A :class:`GaussianMixture` stores the *current* component means.  For the
diffused marginal at noise level ``alpha_bar`` these are ``sqrt(alpha_bar) * mu``
and every evaluation routine below uses them as-is, so the scaling lives in
exactly one place.

All evaluation functions accept a single point of shape ``(d,)`` or a batch of
shape ``(n, d)`` and return a correspondingly shaped result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .batch import SampleBatch
from .errors import (
    DimensionMismatch,
    Empty,
    NonPositiveWeight,
    OutOfRangeAlphaBar,
    ParseError,
    ValidationError,
    WeightsNotNormalized,
    ZeroCount,
)

LOG_2PI = math.log(2.0 * math.pi)
WEIGHT_SUM_TOL = 1e-9
POSTERIOR_FLUSH = 1e-300

# upper bound on n * K * d floats materialised per chunk
_CHUNK_ELEMS = 1 << 21


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    weights: np.ndarray
    means: np.ndarray
    alpha_bar: float = 1.0
    max_mean_norm: float = field(init=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        m = np.array(self.means, dtype=float)
        w.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "max_mean_norm", float(np.max(np.linalg.norm(m, axis=1))))

    @property
    def K(self) -> int:
        return self.means.shape[0]

    @property
    def d(self) -> int:
        return self.means.shape[1]

    @property
    def log_weights(self) -> np.ndarray:
        return np.log(self.weights)

    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    def covariance(self) -> np.ndarray:
        centred = self.means - self.mean()
        return np.eye(self.d) + (centred * self.weights[:, None]).T @ centred

    def __repr__(self):
        return f"GaussianMixture(K={self.K}, d={self.d}, alpha_bar={self.alpha_bar:g})"


def new_gmm(weights, means) -> GaussianMixture:
    """Validate and build a mixture with identity component covariances."""
    w = np.asarray(weights, dtype=float).ravel()
    if w.size == 0:
        raise Empty("mixture needs at least one component")
    try:
        m = np.array([np.asarray(mu, dtype=float).ravel() for mu in means], dtype=float)
    except ValueError as exc:
        raise DimensionMismatch("all means must have the same dimension") from exc
    if m.ndim != 2 or m.shape[0] == 0:
        raise Empty("mixture needs at least one mean")
    if m.shape[1] == 0:
        raise Empty("means must have dimension >= 1")
    if m.shape[0] != w.size:
        raise DimensionMismatch(f"{w.size} weights but {m.shape[0]} means")
    if not np.all(np.isfinite(w)) or not np.all(np.isfinite(m)):
        raise ValidationError("weights and means must be finite")
    if np.any(w <= 0):
        raise NonPositiveWeight(f"weights must be strictly positive, got {w.tolist()}")
    if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
        raise WeightsNotNormalized(f"weights sum to {w.sum():.12g}, not 1")
    return GaussianMixture(w / w.sum(), m)


def diffused_marginal(gmm: GaussianMixture, alpha_bar: float) -> GaussianMixture:
    """Law of ``sqrt(alpha_bar) X0 + sqrt(1 - alpha_bar) W`` for ``X0 ~ gmm``.

    ``gmm`` must be undiffused (``gmm.alpha_bar == 1``).
    """
    if not (0.0 < alpha_bar <= 1.0):
        raise OutOfRangeAlphaBar(f"alpha_bar must lie in (0, 1], got {alpha_bar}")
    if gmm.alpha_bar != 1.0:
        raise ValidationError("diffused_marginal expects the undiffused mixture")
    return GaussianMixture(gmm.weights, math.sqrt(alpha_bar) * gmm.means, float(alpha_bar))


def _as_batch(gmm, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != gmm.d:
        raise DimensionMismatch(f"expected points of dimension {gmm.d}, got shape {x.shape}")
    return xb, single


def _sq_dists(xb, means):
    """Squared distances ``||x_i - m_k||^2``, shape ``(n, K)``."""
    n = xb.shape[0]
    K, d = means.shape
    out = np.empty((n, K))
    step = max(1, _CHUNK_ELEMS // max(1, K * d))
    for lo in range(0, n, step):
        diff = xb[lo:lo + step, None, :] - means[None, :, :]
        out[lo:lo + step] = np.einsum("nkd,nkd->nk", diff, diff)
    return out


def component_log_terms(gmm: GaussianMixture, x) -> np.ndarray:
    """``log pi_k - ||x - m_k||^2 / 2`` for each point and component."""
    xb, _ = _as_batch(gmm, x)
    return gmm.log_weights[None, :] - 0.5 * _sq_dists(xb, gmm.means)


def _logsumexp_rows(a):
    amax = a.max(axis=1, keepdims=True)
    return (amax + np.log(np.exp(a - amax).sum(axis=1, keepdims=True)))[:, 0]


def log_density(gmm_t: GaussianMixture, x):
    xb, single = _as_batch(gmm_t, x)
    terms = component_log_terms(gmm_t, xb)
    out = _logsumexp_rows(terms) - 0.5 * gmm_t.d * LOG_2PI
    return float(out[0]) if single else out


def _softmax_rows(a):
    p = np.exp(a - a.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    p[p < POSTERIOR_FLUSH] = 0.0
    return p


def posterior_weights(gmm_t: GaussianMixture, x) -> np.ndarray:
    """Probability that ``x`` was drawn from each component of ``gmm_t``."""
    xb, single = _as_batch(gmm_t, x)
    p = _softmax_rows(component_log_terms(gmm_t, xb))
    return p[0] if single else p


def score(gmm_t: GaussianMixture, x) -> np.ndarray:
    """Gradient of the log-density: ``-x + sum_k pi_k(x) m_k``."""
    xb, single = _as_batch(gmm_t, x)
    p = posterior_weights(gmm_t, xb)
    s = p @ gmm_t.means - xb
    return s[0] if single else s


def jacobian_trace(gmm_t: GaussianMixture, x):
    """Trace of ``I + d score / dx``: the posterior variance of the means."""
    xb, single = _as_batch(gmm_t, x)
    p = posterior_weights(gmm_t, xb)
    pm = p @ gmm_t.means
    # sum_k p_k ||m_k - pm||^2, nonnegative term by term
    tr = (p * _sq_dists(pm, gmm_t.means)).sum(axis=1)
    return float(tr[0]) if single else tr


def _resolve_rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng, None
    seed = int(rng)
    return np.random.default_rng(seed), seed


def sample_gmm(gmm: GaussianMixture, n: int, rng, label: str = "target") -> SampleBatch:
    """Draw ``n`` i.i.d. points; ``rng`` is a seed or a numpy Generator."""
    if n < 1:
        raise ZeroCount("n must be >= 1")
    gen, seed = _resolve_rng(rng)
    comp = gen.choice(gmm.K, size=n, p=gmm.weights)
    pts = gmm.means[comp] + gen.standard_normal((n, gmm.d))
    return SampleBatch(pts, seed=seed, meta=label)


def project(gmm: GaussianMixture, direction) -> GaussianMixture:
    """One-dimensional marginal along a unit vector."""
    u = np.asarray(direction, dtype=float)
    return GaussianMixture(gmm.weights, (gmm.means @ u)[:, None], gmm.alpha_bar)


def load_gmm(path) -> GaussianMixture:
    """Read a mixture from a TOML document with ``weights`` and ``means``."""
    text = Path(path).read_text()
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ParseError(str(exc), line=getattr(exc, "lineno", None)) from exc
    for key in ("weights", "means"):
        if key not in doc:
            raise ParseError("missing required field", field=key)
    return new_gmm(doc["weights"], doc["means"])


def dump_gmm(gmm: GaussianMixture, path) -> None:
    doc = {"weights": gmm.weights.tolist(), "means": gmm.means.tolist()}
    Path(path).write_text(tomli_w.dumps(doc))
