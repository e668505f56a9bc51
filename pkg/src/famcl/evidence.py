"""Robust adjustment of composite likelihood ratios and 1/k support intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import PchipInterpolator

from .model import InvalidArgumentError

#: Condition number above which the variability matrix is treated as singular.
SINGULAR_CONDITION = 1e14
ENDPOINT_TOL = 1e-9


class SingularVariabilityError(np.linalg.LinAlgError):
    pass


class InvalidInformationError(ArithmeticError):
    pass


class OutOfRangeError(InvalidArgumentError):
    pass


@dataclass(frozen=True)
class InformationEstimates:
    """Empirical sensitivity ``H_hat``, variability ``J_hat`` and Godambe ``G_hat``."""

    H_hat: np.ndarray
    J_hat: np.ndarray
    G_hat: np.ndarray
    n_families: int


def estimate_information(per_family_scores, hessian, n: Optional[int] = None
                         ) -> InformationEstimates:
    """Sandwich pieces from per-family scores and the total Hessian at the MCLE.

    ``H_hat = -hessian / n`` and ``J_hat = sum(u u^T) / n``.
    """
    U = np.atleast_2d(np.asarray(per_family_scores, float))
    hessian = np.atleast_2d(np.asarray(hessian, float))
    n = U.shape[0] if n is None else int(n)
    if n < 1:
        raise InvalidArgumentError("need at least one family")
    H = -hessian / n
    H = 0.5 * (H + H.T)
    J = U.T @ U / n
    cond = np.linalg.cond(J) if J.size else np.inf
    if not np.isfinite(cond) or cond > SINGULAR_CONDITION:
        raise SingularVariabilityError(f"variability matrix is singular (condition {cond:.3g})")
    G = H @ np.linalg.solve(J, H)
    G = 0.5 * (G + G.T)
    return InformationEstimates(H, J, G, n)


def adjustment_factor(info: InformationEstimates, interest_index: int) -> float:
    """Exponent ``a/b``: the interest entry of ``H^-1`` over that of ``G^-1``."""
    try:
        h = np.linalg.inv(info.H_hat)[interest_index, interest_index]
        g = np.linalg.inv(info.G_hat)[interest_index, interest_index]
    except np.linalg.LinAlgError as err:
        raise InvalidInformationError(f"singular information matrix: {err}") from None
    ab = h / g
    if not np.isfinite(ab) or ab <= 0:
        raise InvalidInformationError(f"adjustment factor {ab} is not positive")
    return float(ab)


# ---------------------------------------------------------------------------
# Curves


def _knots(curve):
    """Sorted (interest, loglik) knots: successful grid points plus the MCLE."""
    x = np.asarray(curve.grid, float)
    y = np.asarray(curve.loglik_p, float)
    ok = np.isfinite(y)
    x, y = x[ok], y[ok]
    m, lm = curve.mcle
    if np.isfinite(m) and np.isfinite(lm) and not np.any(np.abs(x - m) < 1e-12):
        pos = np.searchsorted(x, m)
        x = np.insert(x, pos, m)
        y = np.insert(y, pos, lm)
    return x, y


def _interpolant(curve):
    x, y = _knots(curve)
    if len(x) < 2:
        raise InvalidArgumentError("curve needs at least two usable points")
    return x, y, PchipInterpolator(x, y, extrapolate=False)


def _factor(curve) -> float:
    ab = 1.0 if curve.adjustment is None else float(curve.adjustment)
    if not (ab > 0 and math.isfinite(ab)):
        raise InvalidInformationError(f"adjustment factor {ab} is not positive")
    return ab


def profile_loglik(curve, value: float) -> float:
    """Interpolated profile log-likelihood at an interest value."""
    x, _, f = _interpolant(curve)
    if not (x[0] - 1e-12 <= value <= x[-1] + 1e-12):
        raise OutOfRangeError(f"{value} outside the profiled range [{x[0]}, {x[-1]}]")
    return float(f(min(max(value, x[0]), x[-1])))


def adjusted_lr(curve, or_1: float, or_2: float) -> float:
    """``exp{(a/b) (l_p(log or_1) - l_p(log or_2))}`` using the monotone cubic."""
    if or_1 <= 0 or or_2 <= 0:
        raise OutOfRangeError("odds ratios must be positive")
    ab = _factor(curve)
    l1 = profile_loglik(curve, math.log(or_1))
    l2 = profile_loglik(curve, math.log(or_2))
    return math.exp(ab * (l1 - l2))


def standardized_curve(curve, adjusted: bool = True) -> np.ndarray:
    """Profile likelihood divided by its maximum, raised to ``a/b`` if ``adjusted``."""
    ab = _factor(curve) if adjusted else 1.0
    return np.exp(ab * (np.asarray(curve.loglik_p, float) - curve.mcle[1]))


@dataclass(frozen=True)
class SupportInterval:
    """A 1/k interval on the odds-ratio scale.

    An open side (the curve never drops below 1/k on that side of the grid)
    is reported as ``0`` or ``inf`` with the matching ``*_open`` flag.
    """

    k: float
    lower_or: float
    upper_or: float
    contains_null: bool
    lower_open: bool = False
    upper_open: bool = False

    @property
    def lower(self) -> float:
        return math.log(self.lower_or) if self.lower_or > 0 else -math.inf

    @property
    def upper(self) -> float:
        return math.log(self.upper_or)

    def contains(self, odds_ratio: float) -> bool:
        return self.lower_or <= odds_ratio <= self.upper_or


def _bisect(f, a, b, fa, tol):
    """Root of ``f`` in ``[a, b]`` given ``f(a) < 0 <= f(b)`` or the reverse."""
    for _ in range(200):
        if abs(b - a) <= tol:
            break
        mid = 0.5 * (a + b)
        fm = f(mid)
        if (fm < 0) == (fa < 0):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)


def support_interval(curve, k: float) -> SupportInterval:
    """Outermost crossings of the standardized adjusted curve with ``1/k``.

    Crossings are bracketed by neighbouring grid points and refined by
    bisection, on the exact profiler when the curve carries one and on the
    monotone cubic otherwise.
    """
    if not (k > 1 and math.isfinite(k)):
        raise InvalidArgumentError(f"k must be a finite number > 1, got {k}")
    ab = _factor(curve)
    x, y, interp = _interpolant(curve)
    lmax = curve.mcle[1]
    logk = math.log(k)
    profiler = getattr(curve, "profiler", None)
    source = profiler if profiler is not None else (lambda v: float(interp(v)))

    def f(v):
        return ab * (source(v) - lmax) + logk

    fk = ab * (y - lmax) + logk
    inside = np.nonzero(fk >= 0)[0]
    if len(inside) == 0:
        raise InvalidArgumentError("curve has no usable maximum")
    lo_i, hi_i = inside[0], inside[-1]
    if lo_i == 0:
        lower, lower_open = 0.0, True
    else:
        lower = math.exp(_bisect(f, x[lo_i - 1], x[lo_i], fk[lo_i - 1], ENDPOINT_TOL))
        lower_open = False
    if hi_i == len(x) - 1:
        upper, upper_open = math.inf, True
    else:
        upper = math.exp(_bisect(f, x[hi_i + 1], x[hi_i], fk[hi_i + 1], ENDPOINT_TOL))
        upper_open = False
    return SupportInterval(float(k), lower, upper, bool(lower <= 1.0 <= upper),
                           lower_open, upper_open)
