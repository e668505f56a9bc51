import math
from decimal import Decimal, getcontext

import numpy as np
import pytest

from famcl.model import (
    DEPENDENT_CLASSES,
    FamilyData,
    InvalidArgumentError,
    Member,
    ModelParams,
    Pedigree,
    RelationshipClass as R,
    marginal_prob,
    nuclear_pedigree,
    sibship_pedigree,
    three_generation_pedigree,
)


def test_marginal_prob_at_zero():
    assert marginal_prob(0.0, 0.0, 0) == 0.5


def test_baseline_odds_near_0_09():
    p = marginal_prob(-2.38, 1.76, 0)
    assert p / (1 - p) == pytest.approx(0.0925, abs=5e-4)


def test_marginal_prob_high_precision_oracle():
    getcontext().prec = 40
    e = Decimal(-0.62).exp()
    expected = float(e / (1 + e))
    assert marginal_prob(-2.38, 1.76, 1) == pytest.approx(expected, abs=1e-15)
    assert expected == pytest.approx(0.3498, abs=5e-5)


def test_odds_ratio_of_1_76():
    assert ModelParams(-2.38, 1.76).odds_ratio == pytest.approx(5.8, abs=0.05)


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_marginal_prob_rejects_non_finite(bad):
    with pytest.raises(InvalidArgumentError):
        marginal_prob(bad, 0.0, 1)
    with pytest.raises(InvalidArgumentError):
        marginal_prob(0.0, bad, 1)


def test_marginal_prob_monotone():
    b0s = np.linspace(-5, 5, 21)
    for x in (0, 1, 2):
        vals = [marginal_prob(b, 0.7, x) for b in b0s]
        assert np.all(np.diff(vals) > 0)
    assert marginal_prob(-1, 0.5, 0) < marginal_prob(-1, 0.5, 1) < marginal_prob(-1, 0.5, 2)


def test_marginal_prob_extreme_stays_inside():
    assert 0.0 < marginal_prob(-700.0, 0.0, 0) < 1e-300
    assert marginal_prob(30.0, 0.0, 0) < 1.0


def test_family_data_validation():
    fam = FamilyData("f", (1, 0), (2, None), {(1, 0): R.SIBLING})
    assert fam.pair_classes == {(0, 1): R.SIBLING}
    assert fam.complete_members() == [0]
    with pytest.raises(InvalidArgumentError):
        FamilyData("f", (1, 0), (2,), {(0, 1): R.SIBLING})
    with pytest.raises(InvalidArgumentError):
        FamilyData("f", (1, 0, 1), (0, 1, 2), {(0, 1): R.SIBLING})
    with pytest.raises(InvalidArgumentError):
        FamilyData("f", (1,), (3,), {})
    with pytest.raises(InvalidArgumentError):
        FamilyData("f", (2,), (1,), {})
    with pytest.raises(InvalidArgumentError):
        FamilyData("f", (), (), {})


def test_singleton_has_empty_pair_map():
    fam = FamilyData.singleton("s1", 1, 1)
    assert fam.size == 1 and fam.pair_classes == {}


def test_nan_means_missing():
    fam = FamilyData("f", (float("nan"),), (1,), {})
    assert fam.phenotypes == (None,)


def test_model_params_unrelated_fixed_at_one():
    p = ModelParams(0, 0, {R.SIBLING: 2.0})
    assert p.psi_for(R.UNRELATED) == 1.0
    assert p.psi_for(R.COUSIN) == 1.0
    with pytest.raises(InvalidArgumentError):
        ModelParams(0, 0, {R.UNRELATED: 2.0})
    with pytest.raises(InvalidArgumentError):
        ModelParams(0, 0, {R.SIBLING: -1.0})
    with pytest.raises(InvalidArgumentError):
        ModelParams(0, 0, {R.SIBLING: math.inf})


def test_nuclear_family_classes():
    pcs = nuclear_pedigree(3).pair_classes()
    counts = {}
    for c in pcs.values():
        counts[c] = counts.get(c, 0) + 1
    assert counts == {R.UNRELATED: 1, R.PARENT_OFFSPRING: 6, R.SIBLING: 3}
    assert pcs[(0, 1)] is R.UNRELATED


def test_twelve_member_classes_by_hand():
    ped = three_generation_pedigree()
    rel = ped.relationship
    assert rel("gf", "c1") is R.PARENT_OFFSPRING
    assert rel("c1", "c2") is R.SIBLING
    assert rel("c2", "g11") is R.AVUNCULAR
    assert rel("gm", "g23") is R.GRANDPARENTAL
    assert rel("g11", "g21") is R.COUSIN
    assert rel("s1", "s2") is R.UNRELATED
    assert rel("s1", "c2") is R.UNRELATED  # in-law
    assert rel("s2", "g11") is R.UNRELATED  # spouse of an aunt
    assert set(ped.pair_classes().values()) >= set(DEPENDENT_CLASSES)
    assert len(ped.pair_classes()) == 66


def test_sibship_hides_parents():
    ped = sibship_pedigree(4)
    pcs = ped.pair_classes()
    assert len(pcs) == 6 and set(pcs.values()) == {R.SIBLING}
    assert len(ped.pair_classes(observed_only=False)) == 15


def test_half_sibs_are_unrelated():
    ped = Pedigree((Member("a"), Member("b"), Member("c"),
                    Member("x", "a", "b"), Member("y", "a", "c")))
    assert ped.relationship("x", "y") is R.UNRELATED


def test_pedigree_errors():
    with pytest.raises(InvalidArgumentError):
        Pedigree((Member("a"), Member("a")))
    with pytest.raises(InvalidArgumentError):
        Pedigree((Member("a", "zz", "yy"),))
    with pytest.raises(InvalidArgumentError):
        Pedigree((Member("m"), Member("a", "m", None)))
    with pytest.raises(InvalidArgumentError, match="cyclic"):
        Pedigree((Member("a", "b", "c"), Member("b", "a", "c"), Member("c")))


def test_transmission_order_parents_first():
    ped = three_generation_pedigree()
    order = ped.transmission_order()
    pos = {ped.members[i].id: n for n, i in enumerate(order)}
    for m in ped.members:
        if m.father:
            assert pos[m.father] < pos[m.id] and pos[m.mother] < pos[m.id]
