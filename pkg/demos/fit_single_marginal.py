"""
Fit a two-node network to a new marginal.

The network is the smallest one where the three algorithms already tell
different stories:

    A -> B,  P(A=1) = 0.5,  P(B=1|A=0) = 0.2,  P(B=1|A=1) = 0.8

We ask for P(B) = (0.3, 0.7).  A single-marginal tilt of a chain still
factors over the same DAG, so plain IPFP and e-ipfp land on the same
joint, and that joint moves P(A) as well: raising P(B=1) makes A=1 more
likely upstream.

d-ipfp is not allowed to do that.  The constraint names only B, so only
B's CPT may change; P(A) stays (0.5, 0.5) and the solver must reach
P(B) = (0.3, 0.7) by bending the rows of P(B|A) alone.  Its first visit
has a closed form, row a scaled by target/current and renormalized:

    P(B|A=0) -> (12/19, 7/19),   P(B|A=1) -> (3/31, 28/31)

One visit is not enough (the per-row renormalization bleeds part of the
move), so the solver revisits until the mixture hits the target.  The
price of locality is a strictly larger divergence from the prior.
"""

import numpy as np

from bnrefit import (
    Constraint,
    Cpt,
    NetworkSpec,
    VariableDecl,
    joint_from_network,
    local_update,
    marginalize,
    run_d_ipfp,
    run_e_ipfp,
    run_ipfp,
)


def main():
    net = NetworkSpec(
        (VariableDecl("A", 2), VariableDecl("B", 2)),
        {"B": ("A",)},
        {
            "A": Cpt("A", (), np.array([0.5, 0.5])),
            "B": Cpt("B", ("A",), np.array([[0.8, 0.2], [0.2, 0.8]])),
        },
    )
    q0 = joint_from_network(net)
    print("prior joint P(A,B):")
    print(q0.probs)
    print("prior marginal P(B):", marginalize(q0, ("B",)).probs)

    r = Constraint.over(net, ("B",), [0.3, 0.7])
    print("\ntarget marginal P(B):", r.dist.probs)

    # Dense joint first: one multiplicative step per cycle.
    q, rep_p = run_ipfp(net, [r])
    print(f"\nipfp:   {rep_p.termination.value} in {rep_p.cycles} cycle(s), "
          f"divergence {rep_p.final_divergence:.6f}")
    print(q.probs)

    # Same fit, re-expressed over the DAG after each sweep.  For a single
    # constraint the tilt already factors, so nothing changes.
    net_e, rep_e = run_e_ipfp(net, [r])
    q_e = joint_from_network(net_e)
    print(f"e-ipfp: {rep_e.termination.value} in {rep_e.cycles} cycle(s), "
          f"divergence {rep_e.final_divergence:.6f}")
    print("same joint as ipfp:", np.allclose(q_e.probs, q.probs, atol=1e-9))
    print("but P(A) moved to:", marginalize(q_e, ("A",)).probs)

    # The first decomposed visit: the closed-form row rescale.
    first = local_update(net.cpts["B"], r, net)
    print("\nfirst d-ipfp visit, P(B|A):")
    print(first.table)
    print("closed form [[12/19, 7/19], [3/31, 28/31]]:")
    print(np.array([[12 / 19, 7 / 19], [3 / 31, 28 / 31]]))

    # Iterated to its fixed point: P(A) frozen, target met anyway.
    net_d, rep_d = run_d_ipfp(net, [r])
    q_d = joint_from_network(net_d)
    print(f"\nd-ipfp: {rep_d.termination.value} in {rep_d.cycles} cycle(s), "
          f"divergence {rep_d.final_divergence:.6f}")
    print("final P(B|A):")
    print(net_d.cpts["B"].table)
    print("A's CPT object untouched:", net_d.cpts["A"] is net.cpts["A"])
    print("P(B) =", marginalize(q_d, ("B",)).probs,
          " P(A) =", marginalize(q_d, ("A",)).probs)

    print(f"\nlocality costs divergence: {rep_d.final_divergence:.6f} "
          f"> {rep_p.final_divergence:.6f}")


if __name__ == "__main__":
    main()
