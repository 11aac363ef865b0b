"""Iterative learning-rate schedule and its certification.

The cumulative products are anchored at ``alpha_bar_T = T**-c0`` and grown
backwards by ``alpha_bar_{t-1} = alpha_bar_t + c * alpha_bar_t (1 - alpha_bar_t)``
with ``c = c1 log T / T``.  The recursion is carried on the complement
``b_t = 1 - alpha_bar_t``, for which it reads ``b_{t-1} = b_t (1 - c alpha_bar_t)``;
this keeps full relative precision once ``alpha_bar`` is within rounding of 1.

When ``c * alpha_bar_t >= 1`` the additive step would leave ``(0, 1)`` (this
happens for small ``T``, e.g. ``T <= 32`` at the default constants).  Those
steps use the exact logistic-flow update ``logit(alpha_bar_{t-1}) =
logit(alpha_bar_t) + c`` instead, which stays in range and still satisfies
``1 - alpha_t <= 1 - exp(-c) <= c``.  The number of such steps is recorded.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadConstants, StepOutOfRange, TooFewSteps

DEFAULT_C0 = 2.0
DEFAULT_C1 = 10.0


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Arrays are indexed by ``t - 1`` for ``t = 1..T``.

    ``one_minus_alpha`` and ``one_minus_alpha_bar`` are authoritative; the
    ``alpha``/``alpha_bar`` arrays may round to exactly 1.0 near ``t = 1``.
    """

    T: int
    c0: float
    c1: float
    alpha: np.ndarray
    alpha_bar: np.ndarray
    one_minus_alpha: np.ndarray
    one_minus_alpha_bar: np.ndarray
    guarded_steps: int = 0
    rule: str = field(default="complement-recursion")

    def check_step(self, t: int) -> None:
        if not (1 <= t <= self.T):
            raise StepOutOfRange(f"t={t} outside 1..{self.T}")

    def a(self, t: int) -> float:
        return float(self.alpha[t - 1])

    def ab(self, t: int) -> float:
        return float(self.alpha_bar[t - 1])

    def oma(self, t: int) -> float:
        return float(self.one_minus_alpha[t - 1])

    def omab(self, t: int) -> float:
        return float(self.one_minus_alpha_bar[t - 1])

    @property
    def log_T(self) -> float:
        return math.log(self.T)

    def describe(self) -> dict:
        return {"T": self.T, "c0": self.c0, "c1": self.c1,
                "guarded_steps": self.guarded_steps}


def build_schedule(T: int, c0: float = DEFAULT_C0, c1: float = DEFAULT_C1) -> NoiseSchedule:
    if int(T) != T or T < 2:
        raise TooFewSteps(f"T must be an integer >= 2, got {T}")
    T = int(T)
    if not (c0 > 0 and c1 > 0):
        raise BadConstants(f"c0 and c1 must be positive, got c0={c0}, c1={c1}")
    if not c1 / c0 > 4:
        raise BadConstants(f"c1/c0 must exceed 4, got c1/c0={c1 / c0:g}")
    c = c1 * math.log(T) / T
    ab = np.empty(T + 1)
    b = np.empty(T + 1)
    oma = np.empty(T + 1)
    ab[T] = float(T) ** (-c0)
    b[T] = -math.expm1(-c0 * math.log(T))
    guarded = 0
    for t in range(T, 1, -1):
        if c * ab[t] < 1.0:
            b[t - 1] = b[t] * (1.0 - c * ab[t])
            ab[t - 1] = ab[t] + c * ab[t] * b[t]
            # alpha_bar_{t-1} - alpha_bar_t = c alpha_bar_t b_t
            oma[t] = c * ab[t] * b[t] / ab[t - 1]
        else:
            guarded += 1
            e = math.exp(c)
            denom = b[t] + ab[t] * e
            b[t - 1] = b[t] / denom
            ab[t - 1] = ab[t] * e / denom
            oma[t] = -b[t] * math.expm1(-c)
    oma[1] = b[1]
    alpha = ab[1:].copy()
    alpha[1:] = ab[2:] / ab[1:-1]
    alpha[0] = ab[1]
    arrays = [alpha, ab[1:].copy(), oma[1:].copy(), b[1:].copy()]
    for arr in arrays:
        arr.setflags(write=False)
    return NoiseSchedule(T, float(c0), float(c1), *arrays, guarded_steps=guarded)


@dataclass
class ValidationReport:
    passed: bool
    violations: list = field(default_factory=list)
    max_step_ratio: float = 0.0
    max_step_ratio_scaled: float = 0.0
    checks: dict = field(default_factory=dict)

    @property
    def violating_steps(self) -> list[int]:
        return sorted({v["t"] for v in self.violations})


def validate_schedule(sched: NoiseSchedule, product_rtol: float = 1e-10) -> ValidationReport:
    """Check the step-size bounds every built schedule must satisfy.

    * ``1 - alpha_t <= c1 log T / T`` for ``t >= 2``
    * ``1 - alpha_1 <= T**(-c1/4)``
    * ``alpha_t`` in (0, 1) and ``alpha_bar`` strictly decreasing
    * ``alpha_bar_t`` equals the running product of ``alpha`` (relative tol)

    ``max_step_ratio`` is ``max_t (1 - alpha_t) / (1 - alpha_bar_t)`` over
    ``t >= 2``; the scaled variant divides it by ``log T / T``.
    """
    T = sched.T
    logT = math.log(T)
    step_cap = sched.c1 * logT / T
    first_cap = float(T) ** (-sched.c1 / 4)
    viol = []
    oma = np.asarray(sched.one_minus_alpha)
    omab = np.asarray(sched.one_minus_alpha_bar)
    for t in range(2, T + 1):
        if not oma[t - 1] <= step_cap:
            viol.append({"check": "step_bound", "t": t, "lhs": float(oma[t - 1]), "rhs": step_cap})
    if not oma[0] <= first_cap:
        viol.append({"check": "first_step_bound", "t": 1, "lhs": float(oma[0]), "rhs": first_cap})
    for t in range(1, T + 1):
        if not (0.0 < oma[t - 1] < 1.0):
            viol.append({"check": "alpha_in_unit_interval", "t": t,
                         "lhs": float(1.0 - oma[t - 1]), "rhs": None})
    for t in range(2, T + 1):
        if not omab[t - 1] > omab[t - 2]:
            viol.append({"check": "alpha_bar_decreasing", "t": t,
                         "lhs": float(omab[t - 1]), "rhs": float(omab[t - 2])})
    prod = np.cumprod(np.asarray(sched.alpha, dtype=float))
    rel = np.abs(prod - sched.alpha_bar) / np.asarray(sched.alpha_bar)
    for t in np.nonzero(rel > product_rtol)[0] + 1:
        viol.append({"check": "cumulative_product", "t": int(t), "lhs": float(prod[t - 1]),
                     "rhs": float(sched.alpha_bar[t - 1])})
    ratios = oma[1:] / omab[1:]
    max_ratio = float(ratios.max())
    return ValidationReport(
        passed=not viol,
        violations=viol,
        max_step_ratio=max_ratio,
        max_step_ratio_scaled=max_ratio / (logT / T),
        checks={"step_cap": step_cap, "first_step_cap": first_cap,
                "max_one_minus_alpha": float(oma[1:].max()),
                "one_minus_alpha_1": float(oma[0])},
    )


def schedule_csv(sched: NoiseSchedule, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "alpha", "alpha_bar", "one_minus_alpha"])
    for t in range(1, sched.T + 1):
        w.writerow([t, repr(sched.a(t)), repr(sched.ab(t)), repr(sched.oma(t))])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
