"""Distances between sampler output and target, and power-law rate fits.

High-dimensional TV is estimated through one-dimensional projections: the
maximum over directions of the projected histogram TV.  By data processing it
is a lower bound on the joint TV, which is what ``method="sliced"`` reports.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import ndtr

from .batch import as_points
from .errors import (
    DegenerateRange,
    DimensionMismatch,
    NonPositiveEstimate,
    TooFewPoints,
    WrongDimension,
)
from .gmm import GaussianMixture, posterior_weights

DEFAULT_BINS = 200
DEFAULT_PROJECTIONS = 32
MAX_PAIR_DIRECTIONS = 32
RANGE_SDS = 6.0
MIN_BINS = 50
MIN_COVERAGE = 0.999

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


@dataclass(frozen=True)
class Mixture1D:
    """Scalar mixture of normals; ``sds`` may differ per component."""

    weights: np.ndarray
    means: np.ndarray
    sds: np.ndarray

    def pdf(self, x):
        x = np.asarray(x, dtype=float)[..., None]
        z = (x - self.means) / self.sds
        return (self.weights * np.exp(-0.5 * z * z) / (self.sds * math.sqrt(2 * math.pi))).sum(-1)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)[..., None]
        return (self.weights * ndtr((x - self.means) / self.sds)).sum(-1)

    @property
    def mean(self) -> float:
        return float(self.weights @ self.means)

    @property
    def sd(self) -> float:
        second = self.weights @ (self.sds ** 2 + self.means ** 2)
        return math.sqrt(max(float(second) - self.mean ** 2, 0.0))


def normal_1d(mean=0.0, sd=1.0) -> Mixture1D:
    return Mixture1D(np.array([1.0]), np.array([float(mean)]), np.array([float(sd)]))


def projected_target(target, direction) -> Mixture1D:
    """Exact law of ``u . X`` for a mixture or contaminated-mixture target."""
    u = np.asarray(direction, dtype=float)
    if isinstance(target, GaussianMixture):
        return Mixture1D(target.weights, target.means @ u, np.ones(target.K))
    w, m, v = target.components()
    return Mixture1D(w, m @ u, np.sqrt(v) * float(np.linalg.norm(u)))


@dataclass
class TvEstimate:
    value: float
    method: str
    resolution: int
    mc_error: float
    mean: float | None = None
    per_direction: np.ndarray | None = None
    directions: np.ndarray | None = None

    def __float__(self):
        return self.value


def _bin_masses(density, edges):
    if hasattr(density, "cdf"):
        c = density.cdf(edges)
        return np.diff(c), float(c[0]), float(1.0 - c[-1])
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    x = (lo + hi)[:, None] * 0.5 + half[:, None] * _GL_NODES[None, :]
    masses = (np.asarray(density(x.ravel())).reshape(x.shape) * _GL_WEIGHTS).sum(1) * half
    return masses, None, None


def tv_1d_grid(density, samples, bins: int = DEFAULT_BINS, range=None) -> TvEstimate:
    """Histogram TV between 1-D samples and a density.

    ``density`` is a callable pdf or an object with ``pdf``/``cdf`` (e.g.
    :class:`Mixture1D`); with a ``cdf`` the bin and tail masses are exact,
    otherwise bins are integrated by Gauss-Legendre and the two tails lumped.
    ``range`` defaults to mean +/- 6 sd when the density exposes them.
    """
    x = as_points(samples)
    if x.shape[1] != 1:
        raise WrongDimension(f"tv_1d_grid needs d=1 samples, got d={x.shape[1]}")
    x = x[:, 0]
    if bins < MIN_BINS:
        raise DegenerateRange(f"need at least {MIN_BINS} bins, got {bins}")
    if range is None:
        if not hasattr(density, "mean"):
            raise DegenerateRange("range is required for a bare density callable")
        range = (density.mean - RANGE_SDS * density.sd, density.mean + RANGE_SDS * density.sd)
    lo, hi = float(range[0]), float(range[1])
    if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
        raise DegenerateRange(f"invalid range ({lo}, {hi})")
    edges = np.linspace(lo, hi, bins + 1)
    if not hasattr(density, "cdf") and hasattr(density, "pdf"):
        density = density.pdf
    target, t_left, t_right = _bin_masses(density, edges)
    covered = float(target.sum())
    if covered < MIN_COVERAGE:
        raise DegenerateRange(f"range covers only {covered:.5f} of the target mass")
    n = x.size
    counts, _ = np.histogram(x, bins=edges)
    emp = counts / n
    e_left = np.count_nonzero(x < lo) / n
    e_right = np.count_nonzero(x > hi) / n
    if t_left is None:
        t_tail = np.array([max(1.0 - covered, 0.0)])
        e_tail = np.array([e_left + e_right])
    else:
        t_tail = np.array([t_left, t_right])
        e_tail = np.array([e_left, e_right])
    p = np.concatenate([target, t_tail])
    q = np.concatenate([emp, e_tail])
    value = 0.5 * float(np.abs(q - p).sum())
    sgn = np.sign(q - p)
    var = (float(np.abs(sgn) @ q) - float(sgn @ q) ** 2) / n
    return TvEstimate(min(max(value, 0.0), 1.0), "grid-1d", bins, 0.5 * math.sqrt(max(var, 0.0)))


def projection_directions(target, projections: int, rng, pair_directions: bool = True,
                          max_pairs: int = MAX_PAIR_DIRECTIONS) -> np.ndarray:
    """Uniform random unit vectors, then the unit directions between mean pairs."""
    gmm = target if isinstance(target, GaussianMixture) else target.gmm
    d = gmm.d
    if d == 1:
        return np.ones((1, 1))
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    g = gen.standard_normal((projections, d))
    dirs = [g / np.linalg.norm(g, axis=1, keepdims=True)]
    if pair_directions and gmm.K > 1:
        pairs = []
        for i, j in itertools.combinations(range(gmm.K), 2):
            v = gmm.means[j] - gmm.means[i]
            nv = np.linalg.norm(v)
            if nv > 0:
                pairs.append(v / nv)
            if len(pairs) >= max_pairs:
                break
        if pairs:
            dirs.append(np.array(pairs))
    return np.vstack(dirs)


def sliced_tv(target, samples, projections: int = DEFAULT_PROJECTIONS, bins: int = DEFAULT_BINS,
              rng=0, directions=None, pair_directions: bool = True) -> TvEstimate:
    """Max over 1-D projections of the projected histogram TV (a lower bound on TV)."""
    x = as_points(samples)
    gmm = target if isinstance(target, GaussianMixture) else target.gmm
    if x.shape[1] != gmm.d:
        raise DimensionMismatch(f"samples have d={x.shape[1]}, target d={gmm.d}")
    if directions is None:
        if projections < 1:
            raise TooFewPoints("need at least one projection")
        directions = projection_directions(target, projections, rng, pair_directions)
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    ests = [tv_1d_grid(projected_target(target, u), x @ u, bins) for u in directions]
    vals = np.array([e.value for e in ests])
    best = int(np.argmax(vals))
    return TvEstimate(float(vals[best]), "sliced", bins, ests[best].mc_error,
                      mean=float(vals.mean()), per_direction=vals, directions=directions)


def null_floor(target, n: int, directions, bins: int = DEFAULT_BINS, seed: int = 0) -> TvEstimate:
    """Sliced TV of ``n`` exact target draws: the estimator's noise floor."""
    from .sampler import sample_target

    pts = sample_target(target, n, np.random.default_rng([int(seed), 0xF100])).points
    return sliced_tv(target, pts, bins=bins, directions=directions)


@dataclass
class MmdEstimate:
    value: float
    stderr: float
    bandwidth: float

    def __float__(self):
        return self.value


def median_bandwidth(x, y, max_points: int = 1000, seed: int = 0) -> float:
    z = np.vstack([x, y])
    if z.shape[0] > max_points:
        idx = np.random.default_rng(seed).choice(z.shape[0], max_points, replace=False)
        z = z[np.sort(idx)]
    sq = np.sum(z * z, 1)
    d2 = sq[:, None] + sq[None, :] - 2 * z @ z.T
    iu = np.triu_indices(z.shape[0], 1)
    return math.sqrt(max(float(np.median(d2[iu])), 1e-12) / 2.0)


def _kernel_block(a, b, h):
    d2 = np.sum(a * a, 1)[:, None] + np.sum(b * b, 1)[None, :] - 2 * a @ b.T
    return np.exp(-np.maximum(d2, 0.0) / (2 * h * h))


def mmd(samples_a, samples_b, bandwidth: float | None = None, block: int = 2048) -> MmdEstimate:
    """Unbiased Gaussian-kernel MMD^2 between two equal-size samples.

    ``stderr`` combines the non-degenerate and degenerate U-statistic variance
    terms, so it stays meaningful when both samples share a law.
    """
    x = as_points(samples_a)
    y = as_points(samples_b)
    if x.shape[1] != y.shape[1]:
        raise DimensionMismatch(f"dimensions differ: {x.shape[1]} vs {y.shape[1]}")
    n = min(x.shape[0], y.shape[0])
    x, y = x[:n], y[:n]
    if n < 2:
        raise TooFewPoints("need at least two points per sample")
    h = median_bandwidth(x, y) if bandwidth is None else float(bandwidth)
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    row = np.zeros(n)
    sq_sum = 0.0
    for lo in range(0, n, block):
        sl = slice(lo, min(lo + block, n))
        # h(i, j) = k(x_i, x_j) + k(y_i, y_j) - k(x_i, y_j) - k(y_i, x_j)
        hxy = (_kernel_block(x[sl], x, h) + _kernel_block(y[sl], y, h)
               - _kernel_block(x[sl], y, h) - _kernel_block(y[sl], x, h))
        idx = np.arange(sl.start, sl.stop)
        hxy[idx - lo, idx] = 0.0
        row[sl] = hxy.sum(1)
        sq_sum += float(np.sum(hxy * hxy))
    value = float(row.sum()) / (n * (n - 1))
    row_mean = row / (n - 1)
    var = 4.0 * float(np.var(row_mean, ddof=1)) / n + 2.0 * sq_sum / (n * (n - 1)) ** 2
    return MmdEstimate(value, math.sqrt(var), h)


@dataclass
class MomentReport:
    mean_gap: float
    mean_gap_z: np.ndarray
    cov_gap: float
    cov_gap_scale: float
    occupancy: np.ndarray
    occupancy_se: np.ndarray
    weights: np.ndarray = field(repr=False, default=None)


def moment_diagnostics(samples, target: GaussianMixture) -> MomentReport:
    """Mean and covariance gaps to the mixture, plus posterior occupancy per component.

    ``mean_gap_z`` holds per-coordinate z-scores; ``cov_gap_scale`` is the
    root of the summed sampling variances of the covariance entries, the
    typical size of ``cov_gap`` when the samples come from the target.
    """
    x = as_points(samples)
    if x.shape[1] != target.d:
        raise DimensionMismatch(f"samples have d={x.shape[1]}, target d={target.d}")
    n = x.shape[0]
    mu = target.mean()
    m = x.mean(0)
    se = x.std(0, ddof=1) / math.sqrt(n)
    c = x - m
    cov = c.T @ c / (n - 1)
    cov_gap = float(np.linalg.norm(cov - target.covariance()))
    d = x.shape[1]
    if d <= 64:
        prod = c[:, :, None] * c[:, None, :]
        v = prod.var(0) / n
    else:
        v = np.outer(c.var(0), c.var(0)) / n
    post = posterior_weights(target, x)
    occ = post.mean(0)
    occ_se = post.std(0, ddof=1) / math.sqrt(n)
    return MomentReport(float(np.linalg.norm(m - mu)), (m - mu) / se, cov_gap,
                        math.sqrt(float(v.sum())), occ, occ_se, target.weights.copy())


@dataclass
class RateFit:
    a: float
    b: float
    r2: float
    T: list = field(default_factory=list)
    tv: list = field(default_factory=list)

    def predict(self, T):
        return self.a * np.asarray(T, dtype=float) ** (-self.b)


def fit_rate(points) -> RateFit:
    """Least squares on ``(log T, log TV)`` for ``TV ~ a T^-b``."""
    pts = sorted((float(T), float(v)) for T, v in points)
    if len({T for T, _ in pts}) < 4:
        raise TooFewPoints("need at least 4 distinct T values")
    if any(v <= 0 for _, v in pts):
        raise NonPositiveEstimate("TV estimates must be positive for a log-log fit")
    Ts = np.array([p[0] for p in pts])
    vs = np.array([p[1] for p in pts])
    res = stats.linregress(np.log(Ts), np.log(vs))
    return RateFit(math.exp(res.intercept), -res.slope, res.rvalue ** 2, Ts.tolist(), vs.tolist())


@dataclass
class LinearFit:
    slope: float
    intercept: float
    r2: float


def linear_fit(x, y) -> LinearFit:
    res = stats.linregress(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return LinearFit(res.slope, res.intercept, res.rvalue ** 2)
