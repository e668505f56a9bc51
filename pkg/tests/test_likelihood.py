import itertools
import math

import numpy as np
import pytest
from scipy.optimize import minimize

from famcl.likelihood import (
    CLKind,
    DegenerateCellError,
    ParamLayout,
    check_gradient,
    cl_eval,
    default_layout,
    maximize_cl,
    pack,
    pack_arrays,
)
from famcl.model import (
    FamilyData,
    InvalidArgumentError,
    ModelParams,
    RelationshipClass as R,
    marginal_prob,
    nuclear_pedigree,
    sibship_pedigree,
)
from famcl.plackett import PairMargins, pair_joint
from famcl.simulate import simulate_families

KINDS = list(CLKind)


def _oracle_loglik(families, params, kind):
    """Direct sum over members and pairs, one family at a time."""
    total = 0.0
    for fam in families:
        used = fam.complete_members()
        p = {j: marginal_prob(params.beta0, params.beta1, fam.genotypes[j]) for j in used}
        bern = lambda j: math.log(p[j] if fam.phenotypes[j] else 1 - p[j])
        if kind is CLKind.INDEPENDENCE or len(used) == 1:
            total += sum(bern(j) for j in used)
            continue
        w = 1.0 / (len(used) - 1) if kind is CLKind.PAIRWISE_WEIGHTED else 1.0
        for j, k in itertools.combinations(used, 2):
            joint = pair_joint(PairMargins(p[j], p[k], params.psi_for(fam.pair_classes[(j, k)])))
            yj, yk = fam.phenotypes[j], fam.phenotypes[k]
            cell = {(1, 1): joint.p11, (1, 0): joint.p10, (0, 1): joint.p01, (0, 0): joint.p00}
            total += w * math.log(cell[(yj, yk)])
    return total


def _trio(ys, gs, cls=(R.SIBLING, R.SIBLING, R.PARENT_OFFSPRING), fid="t"):
    pcs = {(0, 1): cls[0], (0, 2): cls[1], (1, 2): cls[2]}
    return FamilyData(fid, ys, gs, pcs)


def _all_trios():
    out = []
    for n, ys in enumerate(itertools.product((0, 1), repeat=3)):
        gs = ((n % 3), (n + 1) % 3, (2 * n) % 3)
        out.append(_trio(ys, gs, fid=str(n)))
    return out


PARAMS = ModelParams(-0.7, 0.9, {R.SIBLING: 2.5, R.PARENT_OFFSPRING: 0.6})


@pytest.mark.parametrize("kind", KINDS)
def test_brute_force_three_member_families(kind):
    fams = _all_trios()
    got = cl_eval(fams, PARAMS, kind).loglik
    assert got == pytest.approx(_oracle_loglik(fams, PARAMS, kind), abs=1e-10)


def test_brute_force_with_missing_and_singletons():
    fams = [_trio((1, None, 0), (2, 1, 0)), FamilyData.singleton("s", 1, 2),
            _trio((0, 1, 1), (None, 1, 2), fid="u")]
    for kind in KINDS:
        assert cl_eval(fams, PARAMS, kind).loglik == pytest.approx(
            _oracle_loglik(fams, PARAMS, kind), abs=1e-10)


def _random_families(seed, n=40):
    rng = np.random.default_rng(seed)
    params = ModelParams(-1.0, 1.0, {R.SIBLING: 3, R.PARENT_OFFSPRING: 2})
    batch = simulate_families(nuclear_pedigree(2), n, 0.3, params, rng)
    return pack_arrays(batch.phenotypes, batch.genotypes, batch.pair_classes)


def test_independence_matches_logistic_regression():
    pk = _random_families(3, 150)
    X = np.column_stack([np.ones_like(pk.x), pk.x])

    def nll(b):
        eta = X @ b
        return float(np.sum(np.logaddexp(0, eta) - pk.y * eta))

    ref = minimize(nll, np.zeros(2), method="BFGS", options={"gtol": 1e-10}).x
    fit = maximize_cl(pk, CLKind.INDEPENDENCE)
    np.testing.assert_allclose(fit.theta, ref, atol=1e-6)


def test_analytic_derivatives_random_points():
    rng = np.random.default_rng(8)
    pk = _random_families(4, 25)
    worst = 0.0
    for i in range(100):
        kind = KINDS[i % 3]
        params = ModelParams(rng.uniform(-2, 1), rng.uniform(-1.5, 1.5),
                             {R.SIBLING: math.exp(rng.uniform(-1.5, 2)),
                              R.PARENT_OFFSPRING: math.exp(rng.uniform(-1.5, 2))})
        worst = max(worst, check_gradient(pk, params, kind))
    assert worst <= 1e-5


def test_shared_delta_layout_derivatives():
    pk = _random_families(5, 25)
    layout = default_layout(pk, CLKind.PAIRWISE_UNWEIGHTED_PSI, shared_delta=True)
    assert layout.names == ["beta0", "beta1", "delta"]
    params = ModelParams(-0.5, 0.4, {R.SIBLING: 2.0, R.PARENT_OFFSPRING: 2.0})
    assert check_gradient(pk, params, CLKind.PAIRWISE_UNWEIGHTED_PSI, layout) <= 1e-5


def test_weighted_pairwise_equals_independence_at_psi_one():
    pk = _random_families(6, 60)
    fams = [_trio((1, 0, 1), (0, 1, 2)), FamilyData.singleton("s", 0, 1)]
    for data in (pk, fams):
        params = ModelParams(-0.3, 0.8)
        ind = cl_eval(data, params, CLKind.INDEPENDENCE)
        pw = cl_eval(data, params, CLKind.PAIRWISE_WEIGHTED)
        assert pw.loglik == pytest.approx(ind.loglik, rel=1e-12)
        np.testing.assert_allclose(pw.score[:2], ind.score, rtol=1e-10, atol=1e-12)


def test_family_permutation_invariance():
    fams = _all_trios()
    rng = np.random.default_rng(0)
    shuffled = [fams[i] for i in rng.permutation(len(fams))]
    for kind in KINDS:
        assert cl_eval(shuffled, PARAMS, kind).loglik == pytest.approx(
            cl_eval(fams, PARAMS, kind).loglik, abs=1e-12)


def test_member_permutation_invariance():
    fam = _trio((1, 0, 1), (2, 0, 1))
    # swap members 0 and 2: pair classes follow the members
    swapped = FamilyData("t", (1, 0, 1), (1, 0, 2),
                         {(0, 1): R.PARENT_OFFSPRING, (0, 2): R.SIBLING, (1, 2): R.SIBLING})
    for kind in KINDS:
        assert cl_eval([swapped], PARAMS, kind).loglik == pytest.approx(
            cl_eval([fam], PARAMS, kind).loglik, abs=1e-12)


def test_adding_singleton_adds_bernoulli_term():
    fams = _all_trios()
    extra = FamilyData.singleton("new", 1, 2)
    p = marginal_prob(PARAMS.beta0, PARAMS.beta1, 2)
    for kind in KINDS:
        base = cl_eval(fams, PARAMS, kind).loglik
        assert cl_eval(fams + [extra], PARAMS, kind).loglik == pytest.approx(
            base + math.log(p), abs=1e-12)


def test_balanced_data_gives_zero_slope():
    fams = [FamilyData.singleton(f"{g}{y}{r}", y, g)
            for g in (0, 1, 2) for y in (0, 1, 1) for r in range(3)]
    fit = maximize_cl(fams, CLKind.INDEPENDENCE)
    assert fit["beta1"] == pytest.approx(0.0, abs=1e-8)
    assert fit["beta0"] == pytest.approx(math.log(2), abs=1e-8)


def test_empty_and_constant_data_rejected():
    with pytest.raises(InvalidArgumentError):
        maximize_cl([], CLKind.INDEPENDENCE)
    with pytest.raises(InvalidArgumentError):
        maximize_cl([FamilyData.singleton("a", 1, 0), FamilyData.singleton("b", 1, 2)],
                    CLKind.INDEPENDENCE)


def test_degenerate_cell_reported():
    fam = FamilyData("d", (1, 1), (1, 1), {(0, 1): R.SIBLING})
    with pytest.raises(DegenerateCellError):
        cl_eval([fam], ModelParams(math.log(0.3 / 0.7), 0.0, {R.SIBLING: 1e-305}),
                CLKind.PAIRWISE_WEIGHTED)


@pytest.mark.parametrize("kind", KINDS)
def test_optimum_has_zero_score_and_nsd_hessian(kind):
    pk = _random_families(9, 200)
    fit = maximize_cl(pk, kind)
    assert fit.converged and not fit.separation
    assert np.max(np.abs(fit.evaluation.score)) <= 1e-6
    assert np.max(np.linalg.eigvalsh(fit.evaluation.hessian)) <= 1e-8


def test_fixed_parameter_respected():
    pk = _random_families(10, 200)
    fit = maximize_cl(pk, CLKind.PAIRWISE_UNWEIGHTED_PSI, fixed={"beta1": 0.5})
    assert fit["beta1"] == 0.5
    assert abs(fit.evaluation.score[0]) <= 1e-6


def test_layout_names_and_roundtrip():
    layout = ParamLayout(CLKind.PAIRWISE_WEIGHTED, (R.SIBLING, R.COUSIN))
    assert layout.names == ["beta0", "beta1", "delta_sibling", "delta_cousin"]
    params = ModelParams(-1, 2, {R.SIBLING: 3.0, R.COUSIN: 1.5})
    np.testing.assert_allclose(layout.to_params(layout.from_params(params)).psi_for(R.COUSIN), 1.5)


def test_pack_matches_pack_arrays():
    rng = np.random.default_rng(2)
    batch = simulate_families(sibship_pedigree(3), 20, 0.3,
                              ModelParams(-1, 1, {R.SIBLING: 2}), rng)
    pa = pack_arrays(batch.phenotypes, batch.genotypes, batch.pair_classes)
    pl = pack(batch.families())
    for kind in KINDS:
        params = ModelParams(-1, 1, {R.SIBLING: 2})
        assert cl_eval(pa, params, kind).loglik == pytest.approx(cl_eval(pl, params, kind).loglik,
                                                                 abs=1e-10)
