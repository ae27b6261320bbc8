"""
What d-ipfp actually does, one step at a time.

For a constraint over Y = (A, D) in the diamond network, the solver never
builds the 2^4 joint.  It works with a conditional table over Y given the
outside parents S = (B, C):

1. build the subnet conditional Q'(Y|S), the product of the member CPTs;
2. rescale it toward the constraint against a fixed outside weight,
   renormalizing per S configuration;
3. read CPTs for A and D back out of the rescaled conditional, so the
   next iteration starts from tables that still factor.

Step 3 inside the loop matters: fitting the conditional freely and only
extracting CPTs at the very end converges somewhere else, because the
extraction is a projection and throws away whatever part of the fit did
not factor.  This script runs build / rescale / extract by hand until
the residual dies and checks the tables against run_d_ipfp.  The subnet
here has 4 variables either way, but the loop costs the same if the
diamond is embedded in a network of a hundred variables; the dense joint
would have 2^100 cells.
"""

import numpy as np

from bnrefit import (
    Constraint,
    Cpt,
    NetworkSpec,
    VariableDecl,
    build_local_subnet,
    extract_subnet_cpts,
    joint_from_network,
    nonlocal_update,
    run_d_ipfp,
)


def make_diamond():
    return NetworkSpec(
        (VariableDecl("A", 2), VariableDecl("B", 2),
         VariableDecl("C", 2), VariableDecl("D", 2)),
        {"B": ("A",), "C": ("A",), "D": ("B", "C")},
        {
            "A": Cpt("A", (), np.array([0.6, 0.4])),
            "B": Cpt("B", ("A",), np.array([[0.3, 0.7], [0.7, 0.3]])),
            "C": Cpt("C", ("A",), np.array([[0.5, 0.5], [0.3, 0.7]])),
            "D": Cpt("D", ("B", "C"), np.array([
                [[0.5, 0.5], [0.7, 0.3]],
                [[0.4, 0.6], [0.9, 0.1]],
            ])),
        },
    )


def main():
    net = make_diamond()
    r = Constraint.over(net, ("A", "D"),
                        [[0.4686, 0.1314], [0.2132, 0.1868]])

    # Step 1: the conditional of the member CPTs.
    sub = build_local_subnet(net, ("A", "D"))
    print("subnet: Y =", sub.y, " S =", sub.s)
    print("cond table shape (S..., Y...):", sub.cond_table.shape)
    print("Q'(A=1, D=0 | B=1, C=1) =", sub.cond_table[1, 1, 1, 0])
    print("  which is P(A=1) * P(D=0 | B=1, C=1) = 0.4 * 0.9")

    # Steps 2 and 3, interleaved.  The outside weight is the contraction
    # of every non-member CPT onto S and Y; for the diamond that is
    # P(B|A) * P(C|A), indexed (B, C, A).  Neither table belongs to the
    # subnet, so the weight never changes while we iterate.
    b, c = net.cpts["B"].table, net.cpts["C"].table
    w = b.T[:, None, :] * c.T[None, :, :]
    w_full = np.broadcast_to(w[..., None], sub.cond_table.shape)

    cpts = dict(net.cpts)
    for i in range(3000):
        sub = build_local_subnet(net, ("A", "D"), cpts)
        fitted = (sub.cond_table * w_full).sum(axis=(0, 1))
        gap = np.max(np.abs(fitted / fitted.sum() - r.dist.probs))
        if i in (0, 1, 10, 100, 1000) or gap <= 1e-9:
            print(f"  iteration {i}: residual {gap:.3e}")
        if gap <= 1e-9:
            break
        stepped = nonlocal_update(sub, r, w_full)
        cpts.update(extract_subnet_cpts(stepped, net, cpts))

    print("\nextracted P(A):", cpts["A"].table)
    print("extracted P(D=1 | B, C):")
    print(cpts["D"].table[..., 1])

    # The packaged solver does build / iterate / extract per cycle and
    # refreshes the outside weight between cycles.
    net_d, report = run_d_ipfp(net, [r])
    print(f"\nrun_d_ipfp: {report.cycles} cycles, "
          f"divergence {report.final_divergence:.6f}")
    for name in ("A", "D"):
        drift = np.max(np.abs(net_d.cpts[name].table - cpts[name].table))
        print(f"  {name}: max difference vs manual steps {drift:.2e}")
    same = all(net_d.cpts[n] is net.cpts[n] for n in ("B", "C"))
    print("  B and C untouched:", same)
    q = joint_from_network(net_d)
    print("  joint sums to", q.probs.sum())


if __name__ == "__main__":
    main()
