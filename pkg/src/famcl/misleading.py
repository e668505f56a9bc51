"""Probability of misleading evidence and the family-wise error bound."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from .evidence import (
    InvalidInformationError,
    SingularVariabilityError,
    adjustment_factor,
    estimate_information,
)
from .likelihood import (
    CLKind,
    DegenerateCellError,
    NonConvergenceError,
    default_layout,
    maximize_cl,
    pack_arrays,
)
from .model import InvalidArgumentError, ModelParams
from .simulate import SimConfig, simulate_dataset

#: Fraction of failed replicates above which an estimate is flagged unreliable.
FAILURE_WARNING = 0.01


def _check_k(k: float) -> None:
    if not (k > 1 and math.isfinite(k)):
        raise InvalidArgumentError(f"k must be a finite number > 1, got {k}")


def bump(c: float, k: float) -> float:
    """``Phi(-c/2 - log(k)/c)``; zero for ``c <= 0``."""
    _check_k(k)
    if c <= 0:
        return 0.0
    return float(norm.cdf(-c / 2.0 - math.log(k) / c))


def bump_max(k: float) -> float:
    """Largest value of :func:`bump` over ``c``, reached at ``c = sqrt(2 log k)``."""
    _check_k(k)
    return float(norm.cdf(-math.sqrt(2.0 * math.log(k))))


def bump_argmax(k: float) -> float:
    _check_k(k)
    return math.sqrt(2.0 * math.log(k))


@dataclass(frozen=True)
class BumpCurve:
    c_values: np.ndarray
    prob: np.ndarray
    k: float


def bump_curve(c_values: Sequence[float], k: float) -> BumpCurve:
    _check_k(k)
    c = np.asarray(c_values, float)
    with np.errstate(divide="ignore"):
        p = np.where(c > 0, norm.cdf(-c / 2.0 - math.log(k) / np.where(c > 0, c, 1.0)), 0.0)
    return BumpCurve(c, p, float(k))


@dataclass(frozen=True)
class MisleadingEstimate:
    """Monte Carlo frequency of LR(alternative : truth) >= k.

    ``replicates`` counts the replicates that were fitted successfully and is
    the denominator of both proportions; ``failures`` counts the rest.
    """

    alt_values: np.ndarray
    proportion_raw: np.ndarray
    proportion_adjusted: np.ndarray
    replicates: int
    k: float
    true_value: float
    failures: int = 0
    warning: Optional[str] = None

    @property
    def mc_se(self) -> np.ndarray:
        p = self.proportion_adjusted
        return np.sqrt(p * (1 - p) / max(self.replicates, 1))

    @property
    def mc_se_raw(self) -> np.ndarray:
        p = self.proportion_raw
        return np.sqrt(p * (1 - p) / max(self.replicates, 1))

    @property
    def alt_or(self) -> np.ndarray:
        return np.exp(self.alt_values)


@dataclass
class _ReplicateOutcome:
    log_lr: Optional[np.ndarray] = None
    ab: Optional[float] = None
    error: Optional[str] = None


_FIT_ERRORS = (NonConvergenceError, DegenerateCellError, np.linalg.LinAlgError,
               SingularVariabilityError, InvalidInformationError, InvalidArgumentError,
               FloatingPointError)


def replicate_log_lr(pk, kind: CLKind, true_value: float, alt_values: np.ndarray):
    """Profile log LRs of each alternative against the truth, and ``a/b``."""
    layout = default_layout(pk, kind)
    glob = maximize_cl(pk, kind, layout=layout)
    if glob.separation:
        raise NonConvergenceError("separation in global fit")
    ev = glob.evaluation
    info = estimate_information(ev.per_family_scores, ev.hessian, pk.n_families)
    ab = adjustment_factor(info, layout.index("beta1"))
    init = glob.params
    l_true = maximize_cl(pk, kind, fixed={"beta1": true_value}, init=init, layout=layout).loglik
    out = np.empty(len(alt_values))
    for i, a in enumerate(alt_values):
        out[i] = maximize_cl(pk, kind, fixed={"beta1": float(a)}, init=init, layout=layout).loglik
    return out - l_true, ab


def estimate_misleading(config: SimConfig, true_params: ModelParams, alt_grid: Sequence[float],
                        k: float, kind: CLKind = CLKind.INDEPENDENCE, replicates: int = 1000,
                        workers: int = 1, min_replicates: int = 100) -> MisleadingEstimate:
    """Estimate the misleading-evidence probability at each alternative ``beta1``.

    Datasets follow ``config``'s design with ``true_params``.  The robust
    factor ``a/b`` is re-estimated in every replicate at its own MCLE.
    Replicate ``r`` uses random substream ``r`` of ``config.seed``, so the
    result does not depend on ``workers``.
    """
    _check_k(k)
    if replicates < min_replicates:
        raise InvalidArgumentError(f"need at least {min_replicates} replicates")
    alts = np.asarray(alt_grid, float)
    truth = float(true_params.beta1)
    if np.any(np.abs(alts - truth) < 1e-12):
        raise InvalidArgumentError("alternative grid must exclude the true value")
    cfg = replace(config, params=true_params)
    logk = math.log(k)

    def one(r: int) -> _ReplicateOutcome:
        batch = simulate_dataset(cfg, r)
        pk = pack_arrays(batch.phenotypes, batch.genotypes, batch.pair_classes)
        try:
            llr, ab = replicate_log_lr(pk, kind, truth, alts)
        except _FIT_ERRORS as err:
            return _ReplicateOutcome(error=f"{type(err).__name__}: {err}")
        return _ReplicateOutcome(llr, ab)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, range(replicates)))
    else:
        outcomes = [one(r) for r in range(replicates)]

    raw = np.zeros(len(alts), dtype=np.int64)
    adj = np.zeros(len(alts), dtype=np.int64)
    used = 0
    for o in outcomes:
        if o.error is not None:
            continue
        used += 1
        raw += o.log_lr >= logk
        adj += o.ab * o.log_lr >= logk
    failures = replicates - used
    warning = None
    if failures > FAILURE_WARNING * replicates:
        warning = f"{failures} of {replicates} replicates failed to fit"
        warnings.warn(warning)
    denom = max(used, 1)
    return MisleadingEstimate(alts, raw / denom, adj / denom, used, float(k), truth,
                              failures, warning)


# ---------------------------------------------------------------------------
# Vectorised path for unrelated singletons


def _profile_beta0(n_g, s_g, b1, iters=60):
    """Row-wise maximiser of the logistic log-likelihood in beta0 at fixed ``b1``."""
    x = np.arange(3.0)
    tot = n_g.sum(axis=1)
    frac = np.clip(s_g.sum(axis=1) / tot, 1e-6, 1 - 1e-6)
    b0 = np.log(frac / (1 - frac)) - b1 * (n_g @ x) / tot
    for _ in range(iters):
        p = expit(b0[:, None] + b1[:, None] * x)
        g = (s_g - n_g * p).sum(axis=1)
        h = (n_g * p * (1 - p)).sum(axis=1)
        step = np.clip(g / np.maximum(h, 1e-12), -5, 5)
        b0 = np.clip(b0 + step, -40, 40)
        if np.max(np.abs(g)) < 1e-10:
            break
    return b0


def _loglik(n_g, s_g, b0, b1):
    eta = b0[:, None] + b1[:, None] * np.arange(3.0)
    return (s_g * eta - n_g * np.logaddexp(0.0, eta)).sum(axis=1)


def _global_fit(n_g, s_g, iters=80):
    x = np.arange(3.0)
    b1 = np.zeros(len(n_g))
    b0 = _profile_beta0(n_g, s_g, b1)
    for _ in range(iters):
        p = expit(b0[:, None] + x * b1[:, None])
        r = s_g - n_g * p
        w = n_g * p * (1 - p)
        g0, g1 = r.sum(1), (r * x).sum(1)
        h00, h01, h11 = w.sum(1), (w * x).sum(1), (w * x * x).sum(1)
        det = np.maximum(h00 * h11 - h01 ** 2, 1e-300)
        d0 = (h11 * g0 - h01 * g1) / det
        d1 = (h00 * g1 - h01 * g0) / det
        b0 = np.clip(b0 + np.clip(d0, -5, 5), -40, 40)
        b1 = np.clip(b1 + np.clip(d1, -5, 5), -40, 40)
        if max(np.max(np.abs(g0)), np.max(np.abs(g1))) < 1e-9:
            break
    return b0, b1


def _singleton_ab(n_g, s_g, b0, b1):
    """``a/b`` for beta1 from per-individual scores, using genotype-cell counts."""
    x = np.arange(3.0)
    p = expit(b0[:, None] + x * b1[:, None])
    w = n_g * p * (1 - p)
    v = s_g * (1 - p) ** 2 + (n_g - s_g) * p ** 2
    H = np.stack([np.stack([w.sum(1), (w * x).sum(1)], -1),
                  np.stack([(w * x).sum(1), (w * x * x).sum(1)], -1)], -2)
    J = np.stack([np.stack([v.sum(1), (v * x).sum(1)], -1),
                  np.stack([(v * x).sum(1), (v * x * x).sum(1)], -1)], -2)
    Hi = np.linalg.inv(H)
    Gi = Hi @ J @ Hi
    return Hi[:, 1, 1] / Gi[:, 1, 1]


def estimate_misleading_singletons(n: int, maf: float, beta0: float, beta1_true: float,
                                   alt_values: Sequence[float], k: float, replicates: int,
                                   seed: int = 0, batch: int = 200_000) -> MisleadingEstimate:
    """Fast :func:`estimate_misleading` for ``n`` unrelated individuals.

    Each dataset is drawn through its sufficient statistics (genotype counts
    and case counts per genotype), so millions of replicates are cheap.
    Proportions are exact frequencies over the drawn datasets.
    """
    _check_k(k)
    alts = np.asarray(alt_values, float)
    if np.any(np.abs(alts - beta1_true) < 1e-12):
        raise InvalidArgumentError("alternative grid must exclude the true value")
    if n < 2 or not 0 < maf < 1:
        raise InvalidArgumentError("need n >= 2 and 0 < maf < 1")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    hwe = np.array([(1 - maf) ** 2, 2 * maf * (1 - maf), maf ** 2])
    p_g = expit(beta0 + beta1_true * np.arange(3.0))
    logk = math.log(k)
    raw = np.zeros(len(alts), dtype=np.int64)
    adj = np.zeros(len(alts), dtype=np.int64)
    used = 0
    done = 0
    while done < replicates:
        b = min(batch, replicates - done)
        n_g = rng.multinomial(n, hwe, size=b).astype(float)
        s_g = rng.binomial(n_g.astype(np.int64), p_g).astype(float)
        done += b
        ok = (s_g.sum(1) > 0) & (s_g.sum(1) < n)
        n_g, s_g = n_g[ok], s_g[ok]
        used += int(ok.sum())
        g0, g1 = _global_fit(n_g, s_g)
        ab = _singleton_ab(n_g, s_g, g0, g1)
        t = np.full(len(n_g), beta1_true)
        l_true = _loglik(n_g, s_g, _profile_beta0(n_g, s_g, t), t)
        for i, a in enumerate(alts):
            av = np.full(len(n_g), a)
            llr = _loglik(n_g, s_g, _profile_beta0(n_g, s_g, av), av) - l_true
            raw[i] += int(np.sum(llr >= logk))
            adj[i] += int(np.sum(ab * llr >= logk))
    failures = replicates - used
    denom = max(used, 1)
    return MisleadingEstimate(alts, raw / denom, adj / denom, used, float(k),
                              float(beta1_true), failures)


def fwer_bound(n_eff: int, m0: float) -> float:
    """Conservative family-wise error bound ``min(1, n_eff * m0)``."""
    if isinstance(n_eff, bool) or int(n_eff) != n_eff or n_eff < 1:
        raise InvalidArgumentError(f"n_eff must be an integer >= 1, got {n_eff}")
    if not 0.0 <= m0 <= 1.0:
        raise InvalidArgumentError(f"m0 must lie in [0, 1], got {m0}")
    return min(1.0, int(n_eff) * float(m0))
