"""Simulation designs and a replicate harness for estimator studies."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .likelihood import (
    CLKind,
    DegenerateCellError,
    NonConvergenceError,
    default_layout,
    maximize_cl,
    pack_arrays,
)
from .model import (
    InvalidArgumentError,
    ModelParams,
    Pedigree,
    RelationshipClass,
    nuclear_pedigree,
    sibship_pedigree,
    singleton_pedigree,
    three_generation_pedigree,
)
from .profile import profile_cl
from .simulate import SimConfig, simulate_dataset

R = RelationshipClass

#: Dependence used with the twelve-member family.
TWELVE_MEMBER_PSI = {R.SIBLING: 3.0, R.PARENT_OFFSPRING: 2.5, R.AVUNCULAR: 2.0,
                     R.GRANDPARENTAL: 1.5, R.COUSIN: 1.2}


@dataclass(frozen=True)
class StudyDesign:
    name: str
    template: Pedigree
    maf: float
    params: ModelParams

    def config(self, n_families: int, seed: int = 0,
               params: Optional[ModelParams] = None) -> SimConfig:
        return SimConfig(n_families, self.template, self.maf, params or self.params, seed)


def twelve_member_design(beta0: float = -2.38, beta1: float = 1.76) -> StudyDesign:
    return StudyDesign("twelve", three_generation_pedigree(), 0.20,
                       ModelParams(beta0, beta1, TWELVE_MEMBER_PSI))


def sibling_design(k: int = 5, psi: float = 3.0, beta0: float = -1.0, beta1: float = 2.0,
                   maf: float = 0.20) -> StudyDesign:
    return StudyDesign(f"sibling{k}", sibship_pedigree(k), maf,
                       ModelParams(beta0, beta1, {R.SIBLING: psi}))


def family_design(psi: float = 3.0, n_offspring: int = 3, beta0: float = -1.0,
                  beta1: float = 2.0, maf: float = 0.20) -> StudyDesign:
    """Both parents and their children; sibling and parent-offspring pairs share ``psi``."""
    return StudyDesign("family", nuclear_pedigree(n_offspring), maf,
                       ModelParams(beta0, beta1, {R.SIBLING: psi, R.PARENT_OFFSPRING: psi}))


def singleton_design(beta0: float = -1.0, beta1: float = 0.0, maf: float = 0.30) -> StudyDesign:
    return StudyDesign("singleton", singleton_pedigree(), maf, ModelParams(beta0, beta1))


DESIGNS = {
    "twelve": twelve_member_design,
    "sibling": sibling_design,
    "family": family_design,
    "singleton": singleton_design,
}


def make_design(name: str, **overrides) -> StudyDesign:
    try:
        factory = DESIGNS[name]
    except KeyError:
        raise InvalidArgumentError(f"unknown design {name!r}; choose from {sorted(DESIGNS)}") from None
    return factory(**overrides)


@dataclass
class ReplicateStudy:
    """Per-replicate estimates of one parameter, NaN where a fit failed."""

    design: str
    n_families: int
    parameter: str
    true_value: float
    estimates: dict = field(default_factory=dict)  # kind value -> array

    def mean(self, kind: CLKind) -> float:
        return float(np.nanmean(self.estimates[kind.value]))

    def mc_se(self, kind: CLKind) -> float:
        v = self.estimates[kind.value]
        v = v[np.isfinite(v)]
        return float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else math.nan

    def failures(self, kind: CLKind) -> int:
        return int(np.sum(~np.isfinite(self.estimates[kind.value])))

    def summary(self) -> list[dict]:
        rows = []
        for key, v in self.estimates.items():
            kind = CLKind(key)
            rows.append({"design": self.design, "n_families": self.n_families, "kind": key,
                         "parameter": self.parameter, "true_value": self.true_value,
                         "mean": self.mean(kind), "mc_se": self.mc_se(kind),
                         "bias": self.mean(kind) - self.true_value,
                         "replicates": int(len(v)), "failures": self.failures(kind)})
        return rows


def _resolve(layout, parameter: str) -> str:
    if parameter in layout.names:
        return parameter
    if parameter == "delta":
        deltas = [n for n in layout.names if n.startswith("delta")]
        if len(deltas) == 1:
            return deltas[0]
    raise InvalidArgumentError(f"parameter {parameter!r} not in {layout.names}")


def estimate_once(pk, kind: CLKind, parameter: str = "beta1",
                  profile_grid: Optional[Sequence[float]] = None) -> float:
    """MCLE of ``parameter``; with ``profile_grid`` it is read off the profile curve."""
    name = _resolve(default_layout(pk, kind), parameter)
    if profile_grid is not None:
        return profile_cl(pk, kind, interest=name, grid=profile_grid, adjust=False).mcle[0]
    res = maximize_cl(pk, kind)
    if res.separation:
        raise NonConvergenceError("separation")
    return res[name]


def run_replicates(design: StudyDesign, n_families: int, replicates: int,
                   kinds: Sequence[CLKind] = (CLKind.INDEPENDENCE,), parameter: str = "beta1",
                   seed: int = 0, workers: int = 1,
                   profile_grid: Optional[Sequence[float]] = None) -> ReplicateStudy:
    """Simulate ``replicates`` datasets and estimate ``parameter`` with each kind.

    All kinds see the same datasets, so their estimates can be compared
    replicate by replicate.
    """
    if replicates < 1:
        raise InvalidArgumentError("replicates must be >= 1")
    cfg = design.config(n_families, seed)
    if parameter == "beta1":
        truth = design.params.beta1
    elif parameter.startswith("delta"):
        psis = {v for c, v in design.params.psi.items() if c is not R.UNRELATED}
        truth = math.log(psis.pop()) if len(psis) == 1 else math.nan
    else:
        truth = design.params.beta0 if parameter == "beta0" else math.nan

    def one(r):
        batch = simulate_dataset(cfg, r)
        pk = pack_arrays(batch.phenotypes, batch.genotypes, batch.pair_classes)
        out = []
        for kind in kinds:
            try:
                out.append(estimate_once(pk, kind, parameter, profile_grid))
            except (NonConvergenceError, DegenerateCellError, InvalidArgumentError,
                    np.linalg.LinAlgError, FloatingPointError):
                out.append(math.nan)
        return out

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, range(replicates)))
    else:
        rows = [one(r) for r in range(replicates)]
    arr = np.array(rows, float).reshape(replicates, len(kinds))
    return ReplicateStudy(design.name, n_families, parameter, truth,
                          {kind.value: arr[:, i] for i, kind in enumerate(kinds)})
