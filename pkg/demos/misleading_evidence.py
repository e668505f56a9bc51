"""How often does the data favour a wrong odds ratio by a factor of k?

Unrelated individuals, true OR = 1.  For each alternative OR we count the
replicates whose profile LR (alternative vs truth) reaches k, and compare
with the large-sample ceiling bump_max(k).  The counts come from the fast
sufficient-statistic simulator, so 10^5 replicates take a few seconds.

    python demos/misleading_evidence.py
"""

import math

import numpy as np

from famcl.misleading import bump, bump_argmax, bump_max, estimate_misleading_singletons, fwer_bound

N, MAF, BETA0 = 300, 0.3, -1.0


def main() -> None:
    for k in (8, 32):
        print(f"k = {k}: bump_max = {bump_max(k):.4f} at c = {bump_argmax(k):.3f}")
    ors = np.array([1.2, 1.4, 1.6, 2.0, 2.5])
    for k in (8, 32, 1000):
        est = estimate_misleading_singletons(N, MAF, BETA0, 0.0, np.log(ors), k,
                                             replicates=100_000, seed=k)
        print(f"\nk = {k}, n = {N}, {est.replicates} replicates")
        print(f"{'OR':>5} {'M0':>10} {'mc se':>9}")
        for o, p, se in zip(ors, est.proportion_adjusted, est.mc_se):
            print(f"{o:5.1f} {p:10.2e} {se:9.1e}")
        m0 = float(est.proportion_adjusted[list(ors).index(2.0)])
        print(f"bound on the family-wise rate over 1000 independent SNPs at OR = 2: "
              f"{fwer_bound(1000, m0):.4f}")
    print("\nbump(c, 8) for a few c:", ", ".join(f"{c}: {bump(c, 8):.4f}" for c in (0.5, 1, 2, 3)))
    print("ceiling check:", math.isclose(max(bump(c, 8) for c in np.linspace(0.1, 5, 4901)),
                                          bump_max(8), rel_tol=1e-5))


if __name__ == "__main__":
    main()
