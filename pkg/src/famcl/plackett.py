"""Plackett odds-ratio parameterisation of a pair of binary variables."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .model import InvalidArgumentError

#: |psi - 1| below this uses the independence branch (closed form is 0/0 there).
PSI_ONE_TOL = 1e-9
#: Slack allowed when the closed-form root touches a Frechet bound.
CLAMP_SLACK = 1e-12
COMPAT_TOL = 1e-10


class InternalConsistencyError(ArithmeticError):
    """The closed-form root left the feasible region by more than rounding."""


@dataclass(frozen=True)
class PairMargins:
    p_i: float
    p_j: float
    psi: float

    def __post_init__(self):
        if not (0.0 < self.p_i < 1.0 and 0.0 < self.p_j < 1.0):
            raise InvalidArgumentError(f"margins must lie in (0, 1), got {self.p_i}, {self.p_j}")
        if not math.isfinite(self.psi) or self.psi < 0:
            raise InvalidArgumentError(f"psi must be finite and >= 0, got {self.psi}")


@dataclass(frozen=True)
class PairJoint:
    p11: float
    p10: float
    p01: float
    p00: float

    @property
    def cells(self) -> tuple:
        return (self.p11, self.p10, self.p01, self.p00)

    def odds_ratio(self) -> float:
        return self.p11 * self.p00 / (self.p10 * self.p01)


def frechet_bounds(p_i: float, p_j: float) -> tuple:
    return max(0.0, p_i + p_j - 1.0), min(p_i, p_j)


def joint_prob(m: PairMargins) -> float:
    """P(Y_i = 1, Y_j = 1) for the Plackett distribution with odds ratio ``psi``."""
    p_i, p_j, psi = m.p_i, m.p_j, m.psi
    if abs(psi - 1.0) < PSI_ONE_TOL:
        return p_i * p_j
    t = 1.0 + (p_i + p_j) * (psi - 1.0)
    rad = t * t + 4.0 * psi * (1.0 - psi) * p_i * p_j
    if rad < 0.0:
        if rad < -1e-12:
            raise InternalConsistencyError(f"negative radicand {rad} for {m}")
        rad = 0.0
    s = math.sqrt(rad)
    if t > 0:
        p11 = 2.0 * psi * p_i * p_j / (t + s)
    else:
        p11 = (t - s) / (2.0 * (psi - 1.0))
    lo, hi = frechet_bounds(p_i, p_j)
    if p11 < lo:
        if p11 < lo - CLAMP_SLACK:
            raise InternalConsistencyError(f"p11={p11} below Frechet bound {lo} for {m}")
        p11 = lo
    elif p11 > hi:
        if p11 > hi + CLAMP_SLACK:
            raise InternalConsistencyError(f"p11={p11} above Frechet bound {hi} for {m}")
        p11 = hi
    return p11


def joint_prob_array(p_i, p_j, psi):
    """Vectorised :func:`joint_prob` without validation; used in likelihood loops."""
    p_i, p_j, psi = np.broadcast_arrays(np.asarray(p_i, float), np.asarray(p_j, float),
                                        np.asarray(psi, float))
    indep = np.abs(psi - 1.0) < PSI_ONE_TOL
    d = np.where(indep, 1.0, psi - 1.0)
    t = 1.0 + (p_i + p_j) * d
    rad = np.maximum(t * t + 4.0 * psi * (1.0 - psi) * p_i * p_j, 0.0)
    s = np.sqrt(rad)
    # Rationalised root (2 a c / (t + s) form) avoids cancellation when t ~ s.
    with np.errstate(invalid="ignore", divide="ignore"):
        root = np.where(t > 0, 2.0 * psi * p_i * p_j / (t + s), (t - s) / (2.0 * d))
    p11 = np.where(indep, p_i * p_j, root)
    lo = np.maximum(0.0, p_i + p_j - 1.0)
    hi = np.minimum(p_i, p_j)
    return np.clip(p11, lo, hi)


def pair_joint(m: PairMargins) -> PairJoint:
    p11 = joint_prob(m)
    return PairJoint(p11, m.p_i - p11, m.p_j - p11, 1.0 - m.p_i - m.p_j + p11)


def pair_correlation(m: PairMargins) -> float:
    """Pearson correlation of the binary pair implied by :func:`joint_prob`."""
    p11 = joint_prob(m)
    return (p11 - m.p_i * m.p_j) / math.sqrt(m.p_i * (1 - m.p_i) * m.p_j * (1 - m.p_j))


def correlation_bounds(p_i: float, p_j: float) -> tuple:
    """Attainable correlation range of a binary pair with the given margins."""
    lo, hi = frechet_bounds(p_i, p_j)
    scale = math.sqrt(p_i * (1 - p_i) * p_j * (1 - p_j))
    return (lo - p_i * p_j) / scale, (hi - p_i * p_j) / scale


@dataclass(frozen=True)
class CompatibilityReport:
    violations: tuple = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def check_compatibility(margins: Sequence[float], joints: Mapping[tuple, float],
                        tol: float = COMPAT_TOL) -> CompatibilityReport:
    """Check the necessary conditions for a multivariate binary law.

    1. each margin lies in [0, 1];
    2. each pairwise p11 lies within its Frechet bounds;
    3. ``p_i + p_j + p_l - p_ij - p_il - p_jl <= 1`` for every triple.

    Violations are returned as ``(condition, indices, value)`` tuples.
    """
    p = [float(v) for v in margins]
    n = len(p)
    pij = {}
    for j, k in combinations(range(n), 2):
        if (j, k) in joints:
            pij[(j, k)] = float(joints[(j, k)])
        elif (k, j) in joints:
            pij[(j, k)] = float(joints[(k, j)])
        else:
            raise InvalidArgumentError(f"missing joint probability for pair {(j, k)}")
    violations = []
    for i, v in enumerate(p):
        if v < -tol or v > 1 + tol:
            violations.append((1, (i,), v))
    for (j, k), v in pij.items():
        lo, hi = max(0.0, p[j] + p[k] - 1.0), min(p[j], p[k])
        if v < lo - tol or v > hi + tol:
            violations.append((2, (j, k), v))
    for i, j, k in combinations(range(n), 3):
        v = p[i] + p[j] + p[k] - pij[(i, j)] - pij[(i, k)] - pij[(j, k)]
        if v > 1 + tol:
            violations.append((3, (i, j, k), v))
    return CompatibilityReport(tuple(violations))
