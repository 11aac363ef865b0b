"""Pure-numpy implementations of the sampler's inner loops.

These mirror ``_kernels.pyx`` operation for operation.  Integer hashing is
bit-identical between the two; floating results agree to rounding of the
platform's ``log``/``cos``.
"""

from __future__ import annotations

import math

import numpy as np

NAME = "python"

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO_PI = 2.0 * math.pi
_INV_2_53 = 1.0 / 9007199254740992.0

BLOCK = 4096


def _mix(z):
    # splitmix64 finaliser, wrapping uint64 arithmetic
    z = z + _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def chain_keys(seed: int, tag: int, chain0: int, n: int) -> np.ndarray:
    with np.errstate(over="ignore"):
        base = _mix(np.array([seed], dtype=np.uint64))
        chains = np.arange(chain0, chain0 + n, dtype=np.uint64)
        h = _mix(base ^ chains)
        return _mix(h ^ np.uint64(tag))


def normals(seed: int, tag: int, chain0: int, n: int, d: int) -> np.ndarray:
    """Standard normals indexed by (seed, tag, chain, coordinate)."""
    h = chain_keys(seed, tag, chain0, n)[:, None]
    j2 = 2 * np.arange(d, dtype=np.uint64)[None, :]
    with np.errstate(over="ignore"):
        a = _mix(h ^ j2)
        b = _mix(h ^ (j2 + np.uint64(1)))
    u1 = ((a >> _S11) + np.uint64(1)).astype(np.float64) * _INV_2_53
    u2 = (b >> _S11).astype(np.float64) * _INV_2_53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)


def _score_block(y, means, logw, omega, phase, coef, field_scale, clip_thresh):
    diff = y[:, None, :] - means[None, :, :]
    q = logw[None, :] - 0.5 * np.einsum("nkd,nkd->nk", diff, diff)
    p = np.exp(q - q.max(axis=1, keepdims=True))
    s = (p @ means) / p.sum(axis=1, keepdims=True) - y
    if field_scale != 0.0:
        s += field_scale * (np.cos(y @ omega.T + phase[None, :]) @ coef)
    if math.isfinite(clip_thresh):
        over = np.einsum("nd,nd->n", s, s) > clip_thresh * clip_thresh
        s[over] = 0.0
    return s


def score_batch(y, means, logw, omega, phase, coef, field_scale, clip_thresh):
    out = np.empty_like(y)
    for lo in range(0, y.shape[0], BLOCK):
        out[lo:lo + BLOCK] = _score_block(y[lo:lo + BLOCK], means, logw, omega, phase,
                                          coef, field_scale, clip_thresh)
    return out


def reverse_step(y, chain0, seed, tag, inv_sqrt_alpha, one_minus_alpha, means, logw,
                 omega, phase, coef, field_scale, clip_thresh, threads=1):
    """In-place ``y <- (y + (1-a) s(y)) / sqrt(a) + sqrt(1-a) z``."""
    n, d = y.shape
    noise_sd = math.sqrt(one_minus_alpha)
    for lo in range(0, n, BLOCK):
        yb = y[lo:lo + BLOCK]
        s = _score_block(yb, means, logw, omega, phase, coef, field_scale, clip_thresh)
        z = normals(seed, tag, chain0 + lo, yb.shape[0], d)
        yb[...] = (yb + one_minus_alpha * s) * inv_sqrt_alpha + noise_sd * z
