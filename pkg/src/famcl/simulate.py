"""Correlated binary family data by thresholding a latent multivariate normal.

Margins come from the logistic model given each member's genotype; pairwise
dependence is a Plackett odds ratio per relationship class, converted to a
binary correlation and then to the latent normal correlation that reproduces
the same joint probability.
"""

from __future__ import annotations

import math
import threading
import warnings
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np
from scipy import integrate
from scipy.special import ndtr, ndtri

from .model import (
    FamilyData,
    InvalidArgumentError,
    ModelParams,
    Pedigree,
    RelationshipClass,
    marginal_prob,
)
from .plackett import PairMargins, check_compatibility, joint_prob, pair_correlation

RHO_BRACKET = 1.0 - 1e-9
PSD_TOL = 1e-8


class IncompatibleCorrelationError(ValueError):
    """Target pairwise correlation cannot be produced by any latent correlation."""


class NonPSDLatentCorrelationError(ValueError):
    def __init__(self, min_eigenvalue: float, message: str = ""):
        self.min_eigenvalue = min_eigenvalue
        super().__init__(message or f"latent correlation matrix not PSD (min eigenvalue {min_eigenvalue:.3e})")


# ---------------------------------------------------------------------------
# Bivariate normal CDF


def bvn_cdf(h: float, k: float, rho: float) -> float:
    """P(Z1 <= h, Z2 <= k) for a standard bivariate normal with correlation ``rho``.

    Uses Phi2(h, k, rho) = Phi(h) Phi(k) + (1/2pi) int_0^{asin rho}
    exp(-(h^2 - 2 h k sin t + k^2) / (2 cos^2 t)) dt, whose integrand is smooth
    and bounded on the whole range, integrated adaptively.
    """
    if not abs(rho) <= 1.0:
        raise InvalidArgumentError(f"|rho| must be <= 1, got {rho}")
    h, k = float(h), float(k)
    if math.isinf(h) or math.isinf(k):
        if h == -math.inf or k == -math.inf:
            return 0.0
        return float(ndtr(min(h, k)))
    if rho == 1.0:
        return float(ndtr(min(h, k)))
    if rho == -1.0:
        return float(max(0.0, ndtr(h) + ndtr(k) - 1.0))
    base = float(ndtr(h) * ndtr(k))
    if rho == 0.0:
        return base
    hk, hh = h * k, 0.5 * (h * h + k * k)

    def integrand(t):
        s = math.sin(t)
        c2 = 1.0 - s * s
        return math.exp((hk * s - hh) / c2)

    val, _ = integrate.quad(integrand, 0.0, math.asin(rho), epsabs=1e-13, epsrel=1e-12, limit=200)
    return min(1.0, max(0.0, base + val / (2.0 * math.pi)))


# ---------------------------------------------------------------------------
# Latent correlation


def _target_p11(p_i: float, p_j: float, delta: float) -> float:
    return p_i * p_j + delta * math.sqrt(p_i * (1 - p_i) * p_j * (1 - p_j))


def attainable_delta(p_i: float, p_j: float) -> tuple:
    """Range of binary correlations reachable through the latent normal."""
    h, k = float(ndtri(p_i)), float(ndtri(p_j))
    scale = math.sqrt(p_i * (1 - p_i) * p_j * (1 - p_j))
    lo = (bvn_cdf(h, k, -RHO_BRACKET) - p_i * p_j) / scale
    hi = (bvn_cdf(h, k, RHO_BRACKET) - p_i * p_j) / scale
    return lo, hi


def solve_latent_rho(p_i: float, p_j: float, delta: float, pair=None,
                     xtol: float = 1e-11) -> float:
    """Latent correlation whose thresholded normal has binary correlation ``delta``.

    Bisection on ``rho`` in [-1 + 1e-9, 1 - 1e-9]; Phi2 is increasing in rho.
    """
    if not (0.0 < p_i < 1.0 and 0.0 < p_j < 1.0):
        raise InvalidArgumentError("margins must lie in (0, 1)")
    if delta == 0.0:
        return 0.0
    h, k = float(ndtri(p_i)), float(ndtri(p_j))
    target = _target_p11(p_i, p_j, delta)
    lo, hi = -RHO_BRACKET, RHO_BRACKET
    f_lo, f_hi = bvn_cdf(h, k, lo) - target, bvn_cdf(h, k, hi) - target
    if f_lo > 1e-12 or f_hi < -1e-12:
        where = f" for pair {pair}" if pair is not None else ""
        raise IncompatibleCorrelationError(
            f"correlation {delta:.6g}{where} not attainable with margins ({p_i:.6g}, {p_j:.6g})"
        )
    if f_lo >= 0:
        return lo
    if f_hi <= 0:
        return hi
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        f = bvn_cdf(h, k, mid) - target
        if f == 0.0:
            return mid
        if f < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class LatentGaussianSpec:
    thresholds: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, float)
        thr = np.asarray(self.thresholds, float)
        if rho.shape != (thr.size, thr.size):
            raise InvalidArgumentError("rho must be square with one row per threshold")
        if not np.allclose(rho, rho.T, atol=1e-12) or not np.allclose(np.diag(rho), 1.0):
            raise InvalidArgumentError("rho must be symmetric with unit diagonal")
        if np.any(np.abs(rho) > 1.0 + 1e-12):
            raise InvalidArgumentError("rho entries must lie in [-1, 1]")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "thresholds", thr)

    def factor(self) -> np.ndarray:
        """Matrix F with F F^T = rho, regularising numerically semi-definite input."""
        return psd_factor(self.rho)


def psd_factor(rho: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(rho)
    if w[0] < -PSD_TOL:
        raise NonPSDLatentCorrelationError(float(w[0]))
    if w[0] <= PSD_TOL:
        reg = rho + PSD_TOL * np.eye(len(rho))
        d = np.sqrt(np.diag(reg))
        rho = reg / np.outer(d, d)
        w, v = np.linalg.eigh(rho)
    try:
        return np.linalg.cholesky(rho)
    except np.linalg.LinAlgError:
        return v * np.sqrt(np.clip(w, 0.0, None))


def build_latent_spec(margins: Sequence[float], deltas: Mapping[tuple, float]) -> LatentGaussianSpec:
    """Thresholds and latent correlation matrix for the given margins and binary correlations.

    ``deltas`` maps unordered index pairs to binary correlations; missing
    pairs are independent.
    """
    p = np.asarray(margins, float)
    n = p.size
    joints = {}
    for j, k in combinations(range(n), 2):
        d = deltas.get((j, k), deltas.get((k, j), 0.0))
        joints[(j, k)] = _target_p11(p[j], p[k], d)
    report = check_compatibility(p, joints)
    if not report.ok:
        cond, idx, val = report.violations[0]
        raise IncompatibleCorrelationError(
            f"compatibility condition {cond} violated at {idx} (value {val:.6g})"
        )
    rho = np.eye(n)
    for j, k in combinations(range(n), 2):
        d = deltas.get((j, k), deltas.get((k, j), 0.0))
        rho[j, k] = rho[k, j] = solve_latent_rho(p[j], p[k], d, pair=(j, k))
    w = np.linalg.eigvalsh(rho)
    if w[0] < -PSD_TOL:
        raise NonPSDLatentCorrelationError(float(w[0]))
    return LatentGaussianSpec(ndtri(p), rho)


# ---------------------------------------------------------------------------
# Genotypes


def simulate_genotypes(template: Pedigree, maf: float, rng: np.random.Generator,
                       n_families: int | None = None) -> np.ndarray:
    """Genotypes for every pedigree member (observed or not).

    Founders are drawn under Hardy-Weinberg equilibrium; each non-founder
    receives one allele from each parent, each parental allele with
    probability 1/2.  Returns shape ``(n_members,)`` or
    ``(n_families, n_members)`` when ``n_families`` is given.
    """
    if not 0.0 <= maf <= 1.0:
        raise InvalidArgumentError(f"maf must lie in [0, 1], got {maf}")
    order = template.transmission_order()
    index = {m.id: i for i, m in enumerate(template.members)}
    size = 1 if n_families is None else int(n_families)
    m = len(template.members)
    alleles = np.zeros((size, m, 2), dtype=np.int8)
    for i in order:
        mem = template.members[i]
        if mem.father is None:
            alleles[:, i, :] = rng.random((size, 2)) < maf
        else:
            pick = rng.integers(0, 2, size=(size, 2))
            f, mo = index[mem.father], index[mem.mother]
            alleles[:, i, 0] = alleles[np.arange(size), f, pick[:, 0]]
            alleles[:, i, 1] = alleles[np.arange(size), mo, pick[:, 1]]
    g = alleles.sum(axis=2).astype(np.int64)
    return g[0] if n_families is None else g


# ---------------------------------------------------------------------------
# Phenotypes


def _class_deltas(genotypes, pair_classes, params: ModelParams):
    p = [marginal_prob(params.beta0, params.beta1, x) for x in genotypes]
    deltas = {}
    for (j, k), cls in pair_classes.items():
        psi = params.psi_for(cls)
        if psi != 1.0:
            deltas[(j, k)] = pair_correlation(PairMargins(p[j], p[k], psi))
    return p, deltas


def simulate_phenotypes(genotypes: Sequence[int], pair_classes: Mapping,
                        params: ModelParams, rng: np.random.Generator) -> np.ndarray:
    """One correlated binary phenotype vector for a single family."""
    g = [int(x) for x in genotypes]
    if len(g) == 1:
        return (rng.random(1) < marginal_prob(params.beta0, params.beta1, g[0])).astype(np.int64)
    p, deltas = _class_deltas(g, pair_classes, params)
    spec = build_latent_spec(p, deltas)
    z = spec.factor() @ rng.standard_normal(len(g))
    return (z <= spec.thresholds).astype(np.int64)


_CLASS_CODE = {c: i for i, c in enumerate(RelationshipClass)}
_SELF = len(_CLASS_CODE)


class LatentTable:
    """Latent correlations for every (class, genotype, genotype) combination.

    With genotype-only margins the latent correlation of a pair depends only
    on its class and the two genotypes, so one small table serves every
    family.  Entries are filled lazily and the table is shared read-mostly
    between threads.
    """

    def __init__(self, params: ModelParams):
        self.params = params
        p = np.array([marginal_prob(params.beta0, params.beta1, x) for x in (0, 1, 2)])
        self.margins = p
        self.thresholds = ndtri(p)
        self._table = np.full((_SELF + 1, 3, 3), np.nan)
        self._table[_SELF] = 1.0
        self._table[_CLASS_CODE[RelationshipClass.UNRELATED]] = 0.0
        self._lock = threading.Lock()

    def _fill(self, code: int):
        cls = list(RelationshipClass)[code]
        psi = self.params.psi_for(cls)
        vals = np.zeros((3, 3))
        for a in range(3):
            for b in range(a, 3):
                if psi != 1.0:
                    d = pair_correlation(PairMargins(self.margins[a], self.margins[b], psi))
                    vals[a, b] = vals[b, a] = solve_latent_rho(
                        self.margins[a], self.margins[b], d, pair=(cls.value, a, b))
        with self._lock:
            self._table[code] = vals

    def lookup(self, codes: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Latent correlation matrices, shape ``(n_families, m, m)``."""
        for code in np.unique(codes):
            if np.isnan(self._table[code, 0, 0]):
                self._fill(int(code))
        return self._table[codes[None, :, :], g[:, :, None], g[:, None, :]]


def class_code_matrix(pair_classes: Mapping, m: int) -> np.ndarray:
    codes = np.full((m, m), _SELF, dtype=np.int64)
    for (j, k), cls in pair_classes.items():
        codes[j, k] = codes[k, j] = _CLASS_CODE[RelationshipClass(cls)]
    return codes


def batch_factors(rho: np.ndarray) -> np.ndarray:
    """Cholesky-type factors for a stack of latent correlation matrices."""
    try:
        return np.linalg.cholesky(rho)
    except np.linalg.LinAlgError:
        return np.stack([psd_factor(r) for r in rho])


@dataclass
class SimulatedBatch:
    """Families sharing one pedigree template: arrays over (family, member)."""

    genotypes: np.ndarray
    phenotypes: np.ndarray
    pair_classes: dict

    @property
    def n_families(self) -> int:
        return self.genotypes.shape[0]

    def families(self, prefix: str = "F") -> list[FamilyData]:
        return [
            FamilyData(f"{prefix}{i + 1}", tuple(int(v) for v in y), tuple(int(v) for v in x),
                       self.pair_classes)
            for i, (y, x) in enumerate(zip(self.phenotypes, self.genotypes))
        ]


def simulate_families(template: Pedigree, n_families: int, maf: float, params: ModelParams,
                      rng: np.random.Generator, table: LatentTable | None = None) -> SimulatedBatch:
    """Genotypes and correlated phenotypes for ``n_families`` copies of ``template``."""
    if n_families < 1:
        raise InvalidArgumentError("n_families must be >= 1")
    obs = template.observed_indices()
    g = simulate_genotypes(template, maf, rng, n_families)[:, obs]
    pcs = template.pair_classes()
    m = len(obs)
    if table is None:
        table = LatentTable(params)
    codes = class_code_matrix(pcs, m)
    rho = table.lookup(codes, g)
    eps = rng.standard_normal((n_families, m))
    if m > 1:
        z = np.einsum("fij,fj->fi", batch_factors(rho), eps)
    else:
        z = eps
    y = (z <= table.thresholds[g]).astype(np.int64)
    return SimulatedBatch(g, y, pcs)


def check_template(template: Pedigree, params: ModelParams) -> float:
    """Minimum latent-correlation eigenvalue over every genotype configuration.

    Raises :class:`NonPSDLatentCorrelationError` if some configuration is not
    PSD within tolerance.
    """
    obs = template.observed_indices()
    m = len(obs)
    table = LatentTable(params)
    codes = class_code_matrix(template.pair_classes(), m)
    worst = math.inf
    grid = np.array(np.meshgrid(*[range(3)] * m, indexing="ij")).reshape(m, -1).T
    for chunk in np.array_split(grid, max(1, len(grid) // 20000)):
        w = np.linalg.eigvalsh(table.lookup(codes, chunk))[:, 0]
        worst = min(worst, float(w.min()))
    if worst < -PSD_TOL:
        raise NonPSDLatentCorrelationError(worst)
    return worst


@dataclass(frozen=True)
class SimConfig:
    n_families: int
    family_template: Pedigree
    maf: float
    params: ModelParams
    seed: int = 0

    def __post_init__(self):
        if self.n_families < 1:
            raise InvalidArgumentError("n_families must be >= 1")
        if not 0.0 < self.maf < 1.0:
            raise InvalidArgumentError("maf must lie in (0, 1)")
        if not 0.0 < self.maf < 0.5:
            warnings.warn(f"maf {self.maf} outside (0, 0.5); the 'minor' allele is the common one")


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Independent stream for one replicate, reproducible regardless of scheduling."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(replicate,))))


def simulate_dataset(config: SimConfig, replicate: int = 0) -> SimulatedBatch:
    rng = replicate_rng(config.seed, replicate)
    return simulate_families(config.family_template, config.n_families, config.maf,
                             config.params, rng)
