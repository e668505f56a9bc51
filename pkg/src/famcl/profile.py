"""Profile composite likelihood over a grid of one interest parameter."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .evidence import (
    InformationEstimates,
    InvalidInformationError,
    SingularVariabilityError,
    adjustment_factor,
    estimate_information,
)
from .likelihood import (
    CLKind,
    MCLEResult,
    NonConvergenceError,
    DegenerateCellError,
    ParamLayout,
    as_packed,
    default_layout,
    maximize_cl,
)
from .model import InvalidArgumentError, ModelParams

DEFAULT_OR_RANGE = (1.0 / 20.0, 20.0)
DEFAULT_POINTS = 401
MCLE_TOL = 1e-7


def default_grid(lo: float = DEFAULT_OR_RANGE[0], hi: float = DEFAULT_OR_RANGE[1],
                 points: int = DEFAULT_POINTS) -> np.ndarray:
    """Log odds-ratio grid, log-spaced on the OR scale."""
    if not (0 < lo < hi) or points < 2:
        raise InvalidArgumentError("grid needs 0 < lo < hi and at least two points")
    return np.linspace(math.log(lo), math.log(hi), points)


@dataclass(frozen=True)
class ProfileCurve:
    """Profiled composite log-likelihood of one interest parameter.

    ``grid`` holds interest values (log odds ratios).  ``loglik_p`` is NaN
    where the nuisance maximisation failed; ``failed`` marks those points.
    ``nuisance_hat`` has one row per grid point with the remaining parameters
    in ``nuisance_names`` order.  ``profiler``, when present, evaluates the
    profile exactly at any interest value.
    """

    grid: np.ndarray
    loglik_p: np.ndarray
    nuisance_hat: np.ndarray
    mcle: tuple
    adjustment: Optional[float] = None
    interest: str = "beta1"
    nuisance_names: tuple = ("beta0",)
    failed: np.ndarray = None
    profiler: Optional[Callable[[float], float]] = field(default=None, compare=False, repr=False)
    information: Optional[InformationEstimates] = field(default=None, compare=False, repr=False)
    separation: bool = False

    def __post_init__(self):
        grid = np.asarray(self.grid, float)
        ll = np.asarray(self.loglik_p, float)
        if grid.ndim != 1 or len(grid) == 0 or ll.shape != grid.shape:
            raise InvalidArgumentError("grid and loglik_p must be equal-length vectors")
        if np.any(np.diff(grid) <= 0):
            raise InvalidArgumentError("grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "loglik_p", ll)
        failed = ~np.isfinite(ll) if self.failed is None else np.asarray(self.failed, bool)
        object.__setattr__(self, "failed", failed)
        nh = np.asarray(self.nuisance_hat, float)
        if nh.ndim == 1:
            nh = nh[:, None]
        object.__setattr__(self, "nuisance_hat", nh)

    @property
    def or_grid(self) -> np.ndarray:
        return np.exp(self.grid)

    @property
    def mcle_or(self) -> float:
        return math.exp(self.mcle[0])

    def with_adjustment(self, ab: float) -> "ProfileCurve":
        return replace(self, adjustment=float(ab))

    def shifted(self, constant: float) -> "ProfileCurve":
        """Same curve with every log-likelihood moved by ``constant``."""
        prof = self.profiler
        return replace(
            self,
            loglik_p=self.loglik_p + constant,
            mcle=(self.mcle[0], self.mcle[1] + constant),
            profiler=None if prof is None else (lambda v: prof(v) + constant),
        )

    @classmethod
    def from_function(cls, loglik: Callable[[float], float], grid: Sequence[float],
                      adjustment: Optional[float] = None, interest: str = "beta1"
                      ) -> "ProfileCurve":
        """Curve of an explicit profile function, with the maximum located numerically."""
        grid = np.asarray(grid, float)
        vals = np.array([loglik(v) for v in grid])
        m, lm = _refine_max(loglik, grid, vals)
        return cls(grid, vals, np.zeros((len(grid), 0)), (m, lm), adjustment, interest, (),
                   profiler=loglik)


def _refine_max(fun, grid, vals):
    """Maximise ``fun`` around the best grid point (bounded golden/Brent search)."""
    ok = np.isfinite(vals)
    if not np.any(ok):
        raise InvalidArgumentError("no finite profile values")
    idx = np.flatnonzero(ok)
    best = idx[np.argmax(vals[ok])]
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, len(grid) - 1)]
    if hi <= lo:
        return float(grid[best]), float(vals[best])
    res = minimize_scalar(lambda v: -fun(v), bounds=(lo, hi), method="bounded",
                          options={"xatol": MCLE_TOL})
    if np.isfinite(res.fun) and -res.fun >= vals[best]:
        return float(res.x), float(-res.fun)
    return float(grid[best]), float(vals[best])


def profile_cl(data, kind: CLKind, interest: str = "beta1",
               grid: Optional[Sequence[float]] = None, layout: Optional[ParamLayout] = None,
               fixed_params: Optional[ModelParams] = None,
               adjust: bool = True) -> ProfileCurve:
    """Profile the composite likelihood of ``kind`` over ``interest``.

    ``interest`` is ``"beta1"`` or, for pairwise kinds, a dependence
    parameter name such as ``"delta_sibling"`` (``"delta"`` selects the
    single dependent class when only one is present).  The default grid is
    :func:`default_grid`.  Grid points whose nuisance maximisation fails are
    kept with NaN log-likelihood and flagged.  The adjustment factor is
    estimated at the global MCLE unless ``adjust`` is false.
    """
    pk = as_packed(data)
    layout = layout or default_layout(pk, kind)
    if interest == "delta" and "delta" not in layout.names:
        deltas = [n for n in layout.names if n.startswith("delta_")]
        if len(deltas) != 1:
            raise InvalidArgumentError(f"'delta' is ambiguous for parameters {layout.names}")
        interest = deltas[0]
    if interest not in layout.names:
        raise InvalidArgumentError(f"unknown interest parameter {interest!r}; have {layout.names}")
    j = layout.index(interest)
    grid = default_grid() if grid is None else np.asarray(grid, float)
    if grid.ndim != 1 or len(grid) == 0 or np.any(np.diff(grid) <= 0):
        raise InvalidArgumentError("grid must be a nonempty, strictly increasing vector")
    nuis = [i for i in range(layout.dim) if i != j]

    glob: Optional[MCLEResult] = None
    try:
        glob = maximize_cl(pk, kind, layout=layout, fixed_params=fixed_params)
    except (NonConvergenceError, DegenerateCellError, np.linalg.LinAlgError):
        glob = None

    def fit_at(v, init_theta):
        init = layout.to_params(init_theta) if init_theta is not None else None
        return maximize_cl(pk, kind, fixed={interest: float(v)}, init=init, layout=layout,
                           fixed_params=fixed_params)

    g = len(grid)
    ll = np.full(g, np.nan)
    nh = np.full((g, len(nuis)), np.nan)
    thetas = [None] * g
    if glob is not None and not glob.separation:
        start = int(np.argmin(np.abs(grid - glob.theta[j])))
        seed = glob.theta
    else:
        start = g // 2
        seed = None

    def run(order, seed_theta):
        warm = seed_theta
        for i in order:
            try:
                res = fit_at(grid[i], warm)
            except (NonConvergenceError, DegenerateCellError, np.linalg.LinAlgError,
                    FloatingPointError):
                try:
                    res = fit_at(grid[i], None)
                except (NonConvergenceError, DegenerateCellError, np.linalg.LinAlgError,
                        FloatingPointError):
                    continue
            if res.separation:
                continue
            ll[i] = res.loglik
            nh[i] = res.theta[nuis]
            thetas[i] = res.theta
            warm = res.theta

    run(range(start, g), seed)
    run(range(start - 1, -1, -1), thetas[start] if thetas[start] is not None else seed)

    def profiler(v):
        near = int(np.argmin(np.abs(grid - v)))
        order = sorted(range(g), key=lambda i: abs(i - near))
        warm = next((thetas[i] for i in order if thetas[i] is not None), None)
        return fit_at(v, warm).loglik

    failed = ~np.isfinite(ll)
    if np.all(failed):
        raise NonConvergenceError("profile maximisation failed at every grid point")
    m, lm = _refine_max(profiler, grid, ll)
    if (glob is not None and not glob.separation and glob.converged
            and grid[0] <= glob.theta[j] <= grid[-1] and glob.loglik >= lm - 1e-9):
        m, lm = float(glob.theta[j]), float(glob.loglik)
    best = np.nanargmax(ll)
    separation = bool(glob is None or glob.separation or best in (0, g - 1))

    ab = info = None
    if adjust and glob is not None and not glob.separation:
        try:
            ev = glob.evaluation
            info = estimate_information(ev.per_family_scores, ev.hessian, pk.n_families)
            ab = adjustment_factor(info, j)
        except (SingularVariabilityError, InvalidInformationError):
            ab = None
    return ProfileCurve(grid, ll, nh, (m, lm), ab, interest,
                        tuple(layout.names[i] for i in nuis), failed, profiler, info, separation)
