"""Shared domain types: families, pedigrees, relationship classes, and the
logistic marginal model."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Optional, Sequence

import numpy as np


class InvalidArgumentError(ValueError):
    """Raised when an argument violates an operation's precondition."""


class RelationshipClass(enum.Enum):
    SIBLING = "sibling"
    PARENT_OFFSPRING = "parent_offspring"
    AVUNCULAR = "avuncular"
    GRANDPARENTAL = "grandparental"
    COUSIN = "cousin"
    UNRELATED = "unrelated"


#: Classes carrying a free dependence parameter, in parameter-vector order.
DEPENDENT_CLASSES = (
    RelationshipClass.SIBLING,
    RelationshipClass.PARENT_OFFSPRING,
    RelationshipClass.AVUNCULAR,
    RelationshipClass.GRANDPARENTAL,
    RelationshipClass.COUSIN,
)

Genotype = Optional[int]  # minor-allele count 0/1/2, None when missing


def _check_genotype(g) -> Genotype:
    if g is None:
        return None
    if isinstance(g, float) and math.isnan(g):
        return None
    if isinstance(g, (bool, np.bool_)) or int(g) != g or int(g) not in (0, 1, 2):
        raise InvalidArgumentError(f"genotype must be 0, 1, 2 or None, got {g!r}")
    return int(g)


def _check_phenotype(y) -> Optional[int]:
    if y is None:
        return None
    if isinstance(y, float) and math.isnan(y):
        return None
    if int(y) != y or int(y) not in (0, 1):
        raise InvalidArgumentError(f"phenotype must be 0, 1 or None, got {y!r}")
    return int(y)


@dataclass(frozen=True)
class FamilyData:
    """One family's phenotypes, genotypes at a single SNP and pair classes.

    ``pair_classes`` maps each unordered index pair ``(j, k)`` with ``j < k``
    to its :class:`RelationshipClass`.  Missing values are ``None``.
    """

    family_id: str
    phenotypes: tuple
    genotypes: tuple
    pair_classes: Mapping[tuple, RelationshipClass] = field(default_factory=dict)

    def __post_init__(self):
        phen = tuple(_check_phenotype(y) for y in self.phenotypes)
        geno = tuple(_check_genotype(g) for g in self.genotypes)
        if len(phen) != len(geno) or len(phen) < 1:
            raise InvalidArgumentError(
                f"family {self.family_id}: phenotypes and genotypes must have equal length >= 1"
            )
        n = len(phen)
        classes = {}
        for key, cls in dict(self.pair_classes).items():
            j, k = sorted(key)
            classes[(j, k)] = RelationshipClass(cls)
        expected = set(combinations(range(n), 2))
        if set(classes) != expected:
            raise InvalidArgumentError(
                f"family {self.family_id}: pair_classes must cover exactly the {len(expected)} member pairs"
            )
        object.__setattr__(self, "phenotypes", phen)
        object.__setattr__(self, "genotypes", geno)
        object.__setattr__(self, "pair_classes", classes)

    @property
    def size(self) -> int:
        return len(self.phenotypes)

    def complete_members(self) -> list[int]:
        """Indices of members with both phenotype and genotype observed."""
        return [
            j
            for j, (y, x) in enumerate(zip(self.phenotypes, self.genotypes))
            if y is not None and x is not None
        ]

    @classmethod
    def singleton(cls, family_id, phenotype, genotype) -> "FamilyData":
        return cls(str(family_id), (phenotype,), (genotype,), {})


@dataclass(frozen=True)
class ModelParams:
    """Logistic margins plus per-relationship dependence odds ratios.

    Classes absent from ``psi`` are treated as independent (psi = 1).
    """

    beta0: float
    beta1: float
    psi: Mapping[RelationshipClass, float] = field(default_factory=dict)

    def __post_init__(self):
        if not (math.isfinite(self.beta0) and math.isfinite(self.beta1)):
            raise InvalidArgumentError("beta0 and beta1 must be finite")
        psi = {RelationshipClass(k): float(v) for k, v in dict(self.psi).items()}
        for k, v in psi.items():
            if not math.isfinite(v) or v < 0:
                raise InvalidArgumentError(f"psi[{k.value}] must be finite and >= 0, got {v}")
        if psi.get(RelationshipClass.UNRELATED, 1.0) != 1.0:
            raise InvalidArgumentError("psi for unrelated pairs is fixed at 1")
        psi[RelationshipClass.UNRELATED] = 1.0
        object.__setattr__(self, "psi", psi)

    def psi_for(self, cls: RelationshipClass) -> float:
        return self.psi.get(cls, 1.0)

    @property
    def odds_ratio(self) -> float:
        return math.exp(self.beta1)


def marginal_prob(beta0: float, beta1: float, x) -> float:
    """Inverse logit of ``beta0 + beta1 * x``."""
    if not (math.isfinite(beta0) and math.isfinite(beta1)):
        raise InvalidArgumentError("beta0 and beta1 must be finite")
    eta = beta0 + beta1 * x
    if eta >= 0:
        return 1.0 / (1.0 + math.exp(-eta))
    e = math.exp(eta)
    return e / (1.0 + e)


def expit(eta):
    """Vectorised inverse logit, stable for large ``|eta|``."""
    return np.where(eta >= 0, 1.0 / (1.0 + np.exp(-np.abs(eta))),
                    np.exp(-np.abs(eta)) / (1.0 + np.exp(-np.abs(eta))))


# ---------------------------------------------------------------------------
# Pedigrees


@dataclass(frozen=True)
class Member:
    id: str
    father: Optional[str] = None
    mother: Optional[str] = None
    observed: bool = True


@dataclass(frozen=True)
class Pedigree:
    """Member list with parent pointers.

    Members with ``observed=False`` take part in genotype transmission but
    are not part of the analysed family (e.g. untyped parents of a sibship).
    """

    members: tuple

    def __post_init__(self):
        members = tuple(self.members)
        ids = [m.id for m in members]
        if len(set(ids)) != len(ids):
            raise InvalidArgumentError("duplicate member id in pedigree")
        known = set(ids)
        for m in members:
            for p in (m.father, m.mother):
                if p is not None and p not in known:
                    raise InvalidArgumentError(f"unknown parent {p!r} of member {m.id!r}")
            if (m.father is None) != (m.mother is None):
                raise InvalidArgumentError(f"member {m.id!r} must have both or no parents")
        object.__setattr__(self, "members", members)
        self.transmission_order()  # raises on cycles

    @property
    def ids(self) -> list[str]:
        return [m.id for m in self.members]

    def _by_id(self) -> dict:
        return {m.id: m for m in self.members}

    def transmission_order(self) -> list[int]:
        """Indices ordered so that parents precede their children."""
        by_id = self._by_id()
        index = {m.id: i for i, m in enumerate(self.members)}
        state: dict[str, int] = {}
        order: list[int] = []

        def visit(mid: str, stack: tuple):
            s = state.get(mid)
            if s == 2:
                return
            if s == 1:
                raise InvalidArgumentError(f"cyclic pedigree through {' -> '.join(stack + (mid,))}")
            state[mid] = 1
            m = by_id[mid]
            for p in (m.father, m.mother):
                if p is not None:
                    visit(p, stack + (mid,))
            state[mid] = 2
            order.append(index[mid])

        for m in self.members:
            visit(m.id, ())
        return order

    def observed_indices(self) -> list[int]:
        return [i for i, m in enumerate(self.members) if m.observed]

    def relationship(self, a: str, b: str) -> RelationshipClass:
        return classify_pair(self._by_id(), a, b)

    def pair_classes(self, observed_only: bool = True) -> dict:
        """Relationship classes keyed by positions within the (observed) member list."""
        idx = self.observed_indices() if observed_only else list(range(len(self.members)))
        by_id = self._by_id()
        out = {}
        for j, k in combinations(range(len(idx)), 2):
            a, b = self.members[idx[j]].id, self.members[idx[k]].id
            out[(j, k)] = classify_pair(by_id, a, b)
        return out


def _parents(by_id, mid):
    m = by_id[mid]
    return (m.father, m.mother) if m.father is not None else None


def _full_sibs(by_id, a, b) -> bool:
    if a == b:
        return False
    pa, pb = _parents(by_id, a), _parents(by_id, b)
    return pa is not None and pb is not None and set(pa) == set(pb)


def classify_pair(by_id: Mapping[str, Member], a: str, b: str) -> RelationshipClass:
    """Classify the relationship between members ``a`` and ``b``.

    Only full siblings, parent-offspring, avuncular, grandparental and first
    cousins are recognised; everything else (half sibs, spouses, in-laws,
    more distant kin) is unrelated.
    """
    pa, pb = _parents(by_id, a), _parents(by_id, b)
    if (pb is not None and a in pb) or (pa is not None and b in pa):
        return RelationshipClass.PARENT_OFFSPRING
    if _full_sibs(by_id, a, b):
        return RelationshipClass.SIBLING
    for x, y, py in ((a, b, pb), (b, a, pa)):
        if py is None:
            continue
        for parent in py:
            gp = _parents(by_id, parent)
            if gp is not None and x in gp:
                return RelationshipClass.GRANDPARENTAL
            if _full_sibs(by_id, x, parent):
                return RelationshipClass.AVUNCULAR
    if pa is not None and pb is not None:
        if any(_full_sibs(by_id, u, v) for u in pa for v in pb):
            return RelationshipClass.COUSIN
    return RelationshipClass.UNRELATED


# Templates used by the simulation studies.


def three_generation_pedigree() -> Pedigree:
    """Twelve-member, three-generation family.

    Two grandparents, their two children with spouses, and three
    grandchildren in each branch, so all five dependent classes occur.
    """
    M = Member
    return Pedigree((
        M("gf"), M("gm"),
        M("c1", "gf", "gm"), M("s1"),
        M("c2", "gf", "gm"), M("s2"),
        M("g11", "c1", "s1"), M("g12", "c1", "s1"), M("g13", "c1", "s1"),
        M("g21", "s2", "c2"), M("g22", "s2", "c2"), M("g23", "s2", "c2"),
    ))


def sibship_pedigree(k: int) -> Pedigree:
    """``k`` full siblings whose untyped parents only transmit genotypes."""
    if k < 1:
        raise InvalidArgumentError("sibship size must be >= 1")
    kids = tuple(Member(f"o{i + 1}", "f", "m") for i in range(k))
    return Pedigree((Member("f", observed=False), Member("m", observed=False)) + kids)


def nuclear_pedigree(n_offspring: int) -> Pedigree:
    """Two parents and ``n_offspring`` children, all observed."""
    kids = tuple(Member(f"o{i + 1}", "f", "m") for i in range(n_offspring))
    return Pedigree((Member("f"), Member("m")) + kids)


def singleton_pedigree() -> Pedigree:
    return Pedigree((Member("i1"),))


def family_from_arrays(family_id, phenotypes: Sequence, genotypes: Sequence,
                       pair_classes: Mapping) -> FamilyData:
    return FamilyData(str(family_id), tuple(phenotypes), tuple(genotypes), pair_classes)
