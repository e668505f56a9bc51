"""Independence and pairwise composite log-likelihoods for family data.

Parameters are ``(beta0, beta1)`` for the independence likelihood and
``(beta0, beta1, delta_c...)`` for the pairwise ones, where
``delta_c = log psi_c`` is the log odds ratio of relationship class ``c``.
Scores and Hessians are analytic; the pairwise cell probability derivatives
come from implicit differentiation of the Plackett cross-product identity.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .model import (
    DEPENDENT_CLASSES,
    FamilyData,
    InvalidArgumentError,
    ModelParams,
    RelationshipClass,
    expit,
)
from .plackett import joint_prob_array

SEPARATION_LIMIT = 15.0
MAX_ITER = 50
SCORE_TOL = 1e-8
ILL_CONDITIONED = 1e12
DEGENERATE_CELL = 1e-300


class CLKind(enum.Enum):
    INDEPENDENCE = "independence"
    PAIRWISE_WEIGHTED = "pairwise"
    PAIRWISE_UNWEIGHTED_PSI = "pairwise-psi"

    @property
    def pairwise(self) -> bool:
        return self is not CLKind.INDEPENDENCE


class DegenerateCellError(ArithmeticError):
    pass


class NonConvergenceError(RuntimeError):
    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


# ---------------------------------------------------------------------------
# Packed data


@dataclass
class PackedData:
    """Array view of a list of families restricted to complete members.

    Member arrays (``y``, ``x``, ``member_family``) cover every used member;
    pair arrays cover every pair of used members within families of two or
    more.  ``solo`` marks members that are the only used member of their
    family.
    """

    y: np.ndarray
    x: np.ndarray
    member_family: np.ndarray
    family_size: np.ndarray
    pair_i: np.ndarray
    pair_j: np.ndarray
    pair_class: np.ndarray  # index into DEPENDENT_CLASSES, -1 for unrelated
    pair_family: np.ndarray
    family_ids: list = field(default_factory=list)
    pair_labels: list = field(default_factory=list)

    @property
    def n_families(self) -> int:
        return len(self.family_size)

    @property
    def solo(self) -> np.ndarray:
        return self.family_size[self.member_family] == 1

    def classes_present(self) -> list[RelationshipClass]:
        codes = sorted(set(int(c) for c in np.unique(self.pair_class) if c >= 0))
        return [DEPENDENT_CLASSES[c] for c in codes]


_CLASS_INDEX = {c: i for i, c in enumerate(DEPENDENT_CLASSES)}


def pack(families: Sequence[FamilyData]) -> PackedData:
    """Drop incomplete members and flatten families into arrays."""
    ys, xs, mf, sizes, pi, pj, pc, pf, ids, labels = [], [], [], [], [], [], [], [], [], []
    offset = 0
    fam_index = 0
    for fam in families:
        used = fam.complete_members()
        if not used:
            continue
        pos = {j: offset + t for t, j in enumerate(used)}
        for j in used:
            ys.append(fam.phenotypes[j])
            xs.append(fam.genotypes[j])
            mf.append(fam_index)
        for a in range(len(used)):
            for b in range(a + 1, len(used)):
                j, k = used[a], used[b]
                cls = fam.pair_classes[(j, k)]
                pi.append(pos[j])
                pj.append(pos[k])
                pc.append(_CLASS_INDEX.get(cls, -1))
                pf.append(fam_index)
                labels.append((fam.family_id, j, k))
        sizes.append(len(used))
        ids.append(fam.family_id)
        offset += len(used)
        fam_index += 1
    as_int = lambda v: np.asarray(v, dtype=np.int64)
    return PackedData(
        np.asarray(ys, float), np.asarray(xs, float), as_int(mf), as_int(sizes),
        as_int(pi), as_int(pj), as_int(pc), as_int(pf), ids, labels,
    )


def pack_arrays(phenotypes: np.ndarray, genotypes: np.ndarray, pair_classes: Mapping) -> PackedData:
    """Fast path for complete families sharing one structure, arrays ``(F, m)``."""
    y = np.asarray(phenotypes, float)
    g = np.asarray(genotypes, float)
    F, m = y.shape
    member_family = np.repeat(np.arange(F), m)
    keys = sorted(pair_classes)
    base_i = np.array([j for j, _ in keys], dtype=np.int64)
    base_j = np.array([k for _, k in keys], dtype=np.int64)
    codes = np.array([_CLASS_INDEX.get(RelationshipClass(pair_classes[k]), -1) for k in keys],
                     dtype=np.int64)
    offs = (np.arange(F) * m)[:, None]
    return PackedData(
        y.ravel(), g.ravel(), member_family, np.full(F, m, dtype=np.int64),
        (offs + base_i).ravel(), (offs + base_j).ravel(), np.tile(codes, F),
        np.repeat(np.arange(F), len(keys)),
        [str(i + 1) for i in range(F)], [],
    )


def as_packed(data) -> PackedData:
    if isinstance(data, PackedData):
        return data
    return pack(list(data))


# ---------------------------------------------------------------------------
# Parameter layout


@dataclass(frozen=True)
class ParamLayout:
    """Names and order of the free parameters of a composite likelihood.

    ``delta_classes`` lists the relationship classes with their own log odds
    ratio.  With ``shared_delta`` a single ``delta`` is used for every
    dependent class.
    """

    kind: CLKind
    delta_classes: tuple = ()
    shared_delta: bool = False

    @property
    def names(self) -> list[str]:
        if not self.kind.pairwise:
            return ["beta0", "beta1"]
        if self.shared_delta:
            return ["beta0", "beta1", "delta"]
        return ["beta0", "beta1"] + [f"delta_{c.value}" for c in self.delta_classes]

    @property
    def dim(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def class_param_index(self) -> np.ndarray:
        """Map DEPENDENT_CLASSES index -> parameter index (or -1)."""
        out = np.full(len(DEPENDENT_CLASSES), -1, dtype=np.int64)
        if not self.kind.pairwise:
            return out
        for c in self.delta_classes:
            out[_CLASS_INDEX[c]] = 2 if self.shared_delta else 2 + self.delta_classes.index(c)
        return out

    def to_params(self, theta: Sequence[float]) -> ModelParams:
        psi = {}
        if self.kind.pairwise:
            for c in self.delta_classes:
                d = theta[2] if self.shared_delta else theta[2 + self.delta_classes.index(c)]
                psi[c] = math.exp(d)
        return ModelParams(float(theta[0]), float(theta[1]), psi)

    def from_params(self, params: ModelParams) -> np.ndarray:
        theta = [params.beta0, params.beta1]
        if self.kind.pairwise:
            if self.shared_delta:
                vals = [params.psi_for(c) for c in self.delta_classes] or [1.0]
                theta.append(math.log(vals[0]))
            else:
                theta += [math.log(params.psi_for(c)) for c in self.delta_classes]
        return np.asarray(theta, float)


def default_layout(data, kind: CLKind, shared_delta: bool = False) -> ParamLayout:
    if not kind.pairwise:
        return ParamLayout(kind)
    return ParamLayout(kind, tuple(as_packed(data).classes_present()), shared_delta)


# ---------------------------------------------------------------------------
# Evaluation


@dataclass
class CLEvaluation:
    loglik: float
    score: np.ndarray
    hessian: np.ndarray
    per_family_scores: np.ndarray  # (n_families, dim)
    names: list


def _bernoulli_terms(y, x, eta, w):
    p = expit(eta)
    ll = np.sum(w * np.where(y > 0, np.log(p), np.log1p(-p)))
    r = w * (y - p)
    v = w * p * (1.0 - p)
    g = np.stack([r, r * x], axis=1)
    H = -np.array([[v.sum(), (v * x).sum()], [(v * x).sum(), (v * x * x).sum()]])
    return ll, g, H


def _pair_terms(pk: PackedData, theta, layout: ParamLayout, delta_fixed: np.ndarray,
                weights: np.ndarray, want_hessian: bool):
    """Pairwise log-likelihood, per-pair gradients and total Hessian."""
    b0, b1 = theta[0], theta[1]
    xi, xj = pk.x[pk.pair_i], pk.x[pk.pair_j]
    yi, yj = pk.y[pk.pair_i], pk.y[pk.pair_j]
    a = expit(b0 + b1 * xi)
    b = expit(b0 + b1 * xj)
    pidx = layout.class_param_index()
    cls = pk.pair_class
    free_idx = np.where(cls >= 0, pidx[np.maximum(cls, 0)], -1)
    delta = np.where(free_idx >= 0, theta[np.maximum(free_idx, 0)] if layout.dim > 2 else 0.0,
                     delta_fixed[np.maximum(cls, 0)] * (cls >= 0))
    psi = np.exp(delta)
    q = joint_prob_array(a, b, psi)
    p10, p01 = a - q, b - q
    p00 = 1.0 - a - b + q
    # observed cell and its linear dependence on (a, b) at fixed q
    s_a = np.where(yi > 0, np.where(yj > 0, 0.0, 1.0), np.where(yj > 0, 0.0, -1.0))
    s_b = np.where(yi > 0, np.where(yj > 0, 0.0, 0.0), np.where(yj > 0, 1.0, -1.0))
    s_q = np.where(yi == yj, 1.0, -1.0)
    c = np.where(yi > 0, np.where(yj > 0, q, p10), np.where(yj > 0, p01, p00))
    bad = ~(c > DEGENERATE_CELL)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        where = pk.pair_labels[k] if pk.pair_labels else (int(pk.pair_family[k]),)
        raise DegenerateCellError(f"pairwise cell probability {c[k]:.3g} <= 1e-300 at {where}")
    ll = np.sum(weights * np.log(c))

    # implicit derivatives of q wrt v = (a, b, delta)
    Fq = p00 + q + psi * (p10 + p01)
    Fv = np.stack([-q - psi * p01, -q - psi * p10, -psi * p10 * p01], axis=1)
    qv = -Fv / Fq[:, None]
    cv = s_q[:, None] * qv + np.stack([s_a, s_b, np.zeros_like(s_a)], axis=1)

    da, db = a * (1 - a), b * (1 - b)
    P = len(a)
    A = np.zeros((P, 3, 3))
    A[:, 0, 0], A[:, 0, 1] = da, da * xi
    A[:, 1, 0], A[:, 1, 1] = db, db * xj
    A[:, 2, 2] = 1.0
    c_loc = np.einsum("pvl,pv->pl", A, cv)
    g_loc = c_loc / c[:, None]

    H_loc = None
    if want_hessian:
        Fqq = 2.0 - 2.0 * psi
        Fqv = np.stack([psi - 1.0, psi - 1.0, psi * (p10 + p01)], axis=1)
        Fvv = np.zeros((P, 3, 3))
        Fvv[:, 0, 1] = Fvv[:, 1, 0] = -psi
        Fvv[:, 0, 2] = Fvv[:, 2, 0] = -psi * p01
        Fvv[:, 1, 2] = Fvv[:, 2, 1] = -psi * p10
        Fvv[:, 2, 2] = -psi * p10 * p01
        G = (Fvv + Fqv[:, :, None] * qv[:, None, :] + qv[:, :, None] * Fqv[:, None, :]
             + Fqq[:, None, None] * qv[:, :, None] * qv[:, None, :])
        qvv = -G / Fq[:, None, None]
        c_ll = np.einsum("pvl,pvw,pwm->plm", A, s_q[:, None, None] * qvv, A)
        ua = np.stack([np.ones_like(xi), xi], axis=1)
        ub = np.stack([np.ones_like(xj), xj], axis=1)
        d2a = (da * (1 - 2 * a) * cv[:, 0])[:, None, None] * ua[:, :, None] * ua[:, None, :]
        d2b = (db * (1 - 2 * b) * cv[:, 1])[:, None, None] * ub[:, :, None] * ub[:, None, :]
        c_ll[:, :2, :2] += d2a + d2b
        H_loc = c_ll / c[:, None, None] - g_loc[:, :, None] * g_loc[:, None, :]

    # embed local (beta0, beta1, delta) into the full parameter vector
    d = layout.dim
    T = np.zeros((P, 3, d))
    T[:, 0, 0] = 1.0
    T[:, 1, 1] = 1.0
    rows = np.flatnonzero(free_idx >= 0)
    T[rows, 2, free_idx[rows]] = 1.0
    grad = np.einsum("pl,pld->pd", g_loc * weights[:, None], T)
    H = None
    if want_hessian:
        H = np.einsum("pld,plm,pme->de", T, H_loc * weights[:, None, None], T)
    return ll, grad, H


def _fixed_delta_vector(params: Optional[ModelParams]) -> np.ndarray:
    if params is None:
        return np.zeros(len(DEPENDENT_CLASSES))
    return np.array([math.log(params.psi_for(c)) if params.psi_for(c) > 0 else -np.inf
                     for c in DEPENDENT_CLASSES])


def evaluate_theta(pk: PackedData, theta: np.ndarray, layout: ParamLayout,
                   want_hessian: bool = True, fixed_params: Optional[ModelParams] = None
                   ) -> CLEvaluation:
    """Composite log-likelihood, score and Hessian at parameter vector ``theta``.

    Classes without a free parameter in ``layout`` take their odds ratio from
    ``fixed_params`` (default independence).
    """
    theta = np.asarray(theta, float)
    d = layout.dim
    F = pk.n_families
    fam_scores = np.zeros((F, d))
    H = np.zeros((d, d))
    ll = 0.0
    kind = layout.kind
    if kind is CLKind.INDEPENDENCE:
        member_w = np.ones_like(pk.y)
    else:
        member_w = pk.solo.astype(float)
    mask = member_w > 0
    if np.any(mask):
        y, x = pk.y[mask], pk.x[mask]
        l1, g1, H1 = _bernoulli_terms(y, x, theta[0] + theta[1] * x, 1.0)
        ll += l1
        H[:2, :2] += H1
        for col in range(2):
            fam_scores[:, col] += np.bincount(pk.member_family[mask], g1[:, col], minlength=F)
    if kind.pairwise and len(pk.pair_i):
        if kind is CLKind.PAIRWISE_WEIGHTED:
            w = 1.0 / (pk.family_size[pk.pair_family] - 1.0)
        else:
            w = np.ones(len(pk.pair_i))
        l2, g2, H2 = _pair_terms(pk, theta, layout, _fixed_delta_vector(fixed_params), w,
                                 want_hessian)
        ll += l2
        if want_hessian:
            H += H2
        for col in range(d):
            fam_scores[:, col] += np.bincount(pk.pair_family, g2[:, col], minlength=F)
    return CLEvaluation(float(ll), fam_scores.sum(axis=0), H, fam_scores, layout.names)


def cl_eval(data, params: ModelParams, kind: CLKind, layout: Optional[ParamLayout] = None
            ) -> CLEvaluation:
    """Evaluate the composite likelihood of ``kind`` at ``params``.

    For pairwise kinds the free parameters are ``(beta0, beta1)`` plus one log
    odds ratio per dependent class present in the data.
    """
    pk = as_packed(data)
    layout = layout or default_layout(pk, kind)
    theta = layout.from_params(params)
    return evaluate_theta(pk, theta, layout, fixed_params=params)


def check_gradient(data, params: ModelParams, kind: CLKind,
                   layout: Optional[ParamLayout] = None, step: float = 1e-5) -> float:
    """Largest relative gap between analytic and central-difference derivatives.

    The gap for the score is scaled by ``max(1, max|fd score|)`` and the gap
    for the Hessian by ``max(1, max|fd hessian|)``.
    """
    pk = as_packed(data)
    layout = layout or default_layout(pk, kind)
    theta = layout.from_params(params)
    ev = evaluate_theta(pk, theta, layout, fixed_params=params)
    d = layout.dim
    fd_g = np.zeros(d)
    fd_H = np.zeros((d, d))
    for r in range(d):
        h = step * max(1.0, abs(theta[r]))
        tp, tm = theta.copy(), theta.copy()
        tp[r] += h
        tm[r] -= h
        ep = evaluate_theta(pk, tp, layout, want_hessian=False, fixed_params=params)
        em = evaluate_theta(pk, tm, layout, want_hessian=False, fixed_params=params)
        fd_g[r] = (ep.loglik - em.loglik) / (2 * h)
        fd_H[r] = (ep.score - em.score) / (2 * h)
    fd_H = 0.5 * (fd_H + fd_H.T)
    gap_g = np.max(np.abs(ev.score - fd_g)) / max(1.0, np.max(np.abs(fd_g))) if d else 0.0
    gap_H = np.max(np.abs(ev.hessian - fd_H)) / max(1.0, np.max(np.abs(fd_H))) if d else 0.0
    return float(max(gap_g, gap_H))


# ---------------------------------------------------------------------------
# Maximisation


@dataclass
class MCLEResult:
    theta: np.ndarray
    layout: ParamLayout
    loglik: float
    converged: bool
    iterations: int
    separation: bool
    evaluation: CLEvaluation
    fixed: dict = field(default_factory=dict)

    @property
    def names(self) -> list:
        return self.layout.names

    @property
    def params(self) -> ModelParams:
        return self.layout.to_params(self.theta)

    def __getitem__(self, name: str) -> float:
        return float(self.theta[self.layout.index(name)])


def initial_theta(pk: PackedData, layout: ParamLayout) -> np.ndarray:
    """beta0 at the logit of the case fraction, everything else 0."""
    frac = float(np.clip(pk.y.mean(), 1e-3, 1 - 1e-3)) if len(pk.y) else 0.5
    theta = np.zeros(layout.dim)
    theta[0] = math.log(frac / (1 - frac))
    return theta


def _beta0_bisection(pk, theta, layout, fixed_params):
    """Root of the beta0 score with the other parameters held (safeguard step)."""
    def s0(b):
        t = theta.copy()
        t[0] = b
        return evaluate_theta(pk, t, layout, want_hessian=False, fixed_params=fixed_params).score[0]

    lo, hi = theta[0] - 1.0, theta[0] + 1.0
    while s0(lo) < 0 and lo > -60:
        lo -= 2 * (hi - lo)
    while s0(hi) > 0 and hi < 60:
        hi += 2 * (hi - lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if s0(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    out = theta.copy()
    out[0] = 0.5 * (lo + hi)
    return out


def newton_maximize(pk: PackedData, layout: ParamLayout, theta0: np.ndarray,
                    free: np.ndarray, fixed_params: Optional[ModelParams] = None,
                    tol: float = SCORE_TOL, max_iter: int = MAX_ITER):
    """Damped Newton ascent over the ``free`` coordinates of ``theta``.

    Returns ``(theta, evaluation, converged, iterations)``.
    """
    theta = np.asarray(theta0, float).copy()
    ev = evaluate_theta(pk, theta, layout, fixed_params=fixed_params)
    if not np.any(free):
        return theta, ev, True, 0
    for it in range(1, max_iter + 1):
        g = ev.score[free]
        if np.max(np.abs(g)) <= tol:
            return theta, ev, True, it - 1
        negH = -ev.hessian[np.ix_(free, free)]
        try:
            cond = np.linalg.cond(negH)
        except np.linalg.LinAlgError:
            cond = np.inf
        if (not np.isfinite(cond) or cond > ILL_CONDITIONED) and free[0]:
            theta = _beta0_bisection(pk, theta, layout, fixed_params)
            ev = evaluate_theta(pk, theta, layout, fixed_params=fixed_params)
            negH = -ev.hessian[np.ix_(free, free)]
            g = ev.score[free]
        lam = 0.0
        scale = max(1e-12, float(np.max(np.abs(np.diag(negH)))))
        while True:
            try:
                L = np.linalg.cholesky(negH + lam * scale * np.eye(len(g)))
                break
            except np.linalg.LinAlgError:
                lam = 1e-6 if lam == 0.0 else lam * 10
                if lam > 1e8:
                    raise NonConvergenceError("Hessian repair failed", last=theta)
        step = np.linalg.solve(L.T, np.linalg.solve(L, g))
        t = 1.0
        improved = False
        for _ in range(40):
            cand = theta.copy()
            cand[free] += t * step
            try:
                ev_c = evaluate_theta(pk, cand, layout, fixed_params=fixed_params)
            except (DegenerateCellError, FloatingPointError):
                t *= 0.5
                continue
            if np.isfinite(ev_c.loglik) and ev_c.loglik >= ev.loglik - 1e-10 * max(1.0, abs(ev.loglik)):
                improved = True
                break
            t *= 0.5
        if not improved:
            if np.max(np.abs(g)) <= 1e3 * tol:
                return theta, ev, True, it
            raise NonConvergenceError("line search failed", last=theta)
        theta, ev = cand, ev_c
    converged = bool(np.max(np.abs(ev.score[free])) <= tol)
    return theta, ev, converged, max_iter


def _fixed_mask(layout: ParamLayout, fixed: Optional[Mapping[str, float]], theta: np.ndarray):
    free = np.ones(layout.dim, dtype=bool)
    for name, val in (fixed or {}).items():
        i = layout.index(name)
        free[i] = False
        theta[i] = val
    return free


def maximize_cl(data, kind: CLKind, fixed: Optional[Mapping[str, float]] = None,
                init: Optional[ModelParams] = None, layout: Optional[ParamLayout] = None,
                fixed_params: Optional[ModelParams] = None, tol: float = SCORE_TOL,
                max_iter: int = MAX_ITER) -> MCLEResult:
    """Maximum composite likelihood estimate.

    ``fixed`` pins named parameters (e.g. ``{"beta1": 0.0}`` or
    ``{"delta_sibling": 0.0}``).  Raises :class:`NonConvergenceError` when
    the iteration cap is hit, unless the iterate shows separation
    (``|beta1| > 15``), in which case the flagged result is returned.
    """
    pk = as_packed(data)
    if len(pk.y) == 0:
        raise InvalidArgumentError("no complete observations")
    if pk.y.min() == pk.y.max():
        raise InvalidArgumentError("need at least one case and one control")
    layout = layout or default_layout(pk, kind)
    theta = layout.from_params(init) if init is not None else initial_theta(pk, layout)
    free = _fixed_mask(layout, fixed, theta)
    try:
        theta, ev, conv, it = newton_maximize(pk, layout, theta, free, fixed_params, tol, max_iter)
    except NonConvergenceError as err:
        last = err.last if err.last is not None else theta
        if abs(last[1]) > SEPARATION_LIMIT:
            ev = evaluate_theta(pk, last, layout, fixed_params=fixed_params)
            return MCLEResult(last, layout, ev.loglik, False, max_iter, True, ev, dict(fixed or {}))
        raise
    sep = abs(theta[1]) > SEPARATION_LIMIT
    if not conv and not sep:
        raise NonConvergenceError(f"no convergence after {max_iter} iterations", last=theta)
    return MCLEResult(theta, layout, ev.loglik, conv, it, sep, ev, dict(fixed or {}))
