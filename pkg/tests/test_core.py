"""Table primitives: joints, marginals, extraction, divergence, residuals."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import nets
from bnrefit import (
    TAU_NORM,
    Constraint,
    Cpt,
    CycleError,
    JointTable,
    Local,
    NetworkSpec,
    NonLocal,
    NormalizationError,
    ScopeError,
    ValidationError,
    VariableDecl,
    classify_constraint,
    classify_scope,
    constraint_residual,
    extract_cpt,
    i_divergence,
    is_structurally_consistent,
    joint_from_network,
    marginalize,
    validate_constraint,
)
from bnrefit.generate import random_network


def random_net(seed, n, cardinality=2, max_in_degree=3):
    return random_network(np.random.default_rng(seed), n, cardinality,
                          max_in_degree)


# type invariants


def test_variable_decl_rejects_cardinality_below_two():
    with pytest.raises(ValidationError):
        VariableDecl("A", 1)


def test_variable_decl_rejects_label_count_mismatch():
    with pytest.raises(ValidationError):
        VariableDecl("A", 2, states=("only",))


def test_cpt_rejects_unnormalized_row():
    with pytest.raises(NormalizationError) as err:
        Cpt("B", ("A",), np.array([[0.5, 0.6], [0.5, 0.5]]))
    assert "B" in str(err.value) and "row 0" in str(err.value)


def test_cpt_rejects_child_as_own_parent():
    with pytest.raises(ValidationError):
        Cpt("A", ("A",), np.full((2, 2), 0.5))


def test_cpt_table_is_read_only(chain_net):
    with pytest.raises(ValueError):
        chain_net.cpts["B"].table[0, 0] = 0.3


def test_joint_table_accepts_flat_array():
    decls = (VariableDecl("A", 2), VariableDecl("B", 2))
    q = JointTable(decls, np.array(nets.CHAIN_JOINT_FLAT))
    assert q.probs.shape == (2, 2)


def test_joint_table_rejects_bad_total():
    with pytest.raises(NormalizationError):
        JointTable((VariableDecl("A", 2),), np.array([0.5, 0.6]))


def test_network_rejects_cycle_and_names_it():
    decls = tuple(VariableDecl(n, 2) for n in "ABD")
    uniform = np.full((2, 2), 0.5)
    with pytest.raises(CycleError) as err:
        NetworkSpec(decls, {"B": ("A",), "D": ("B",), "A": ("D",)},
                    {"A": Cpt("A", ("D",), uniform),
                     "B": Cpt("B", ("A",), uniform),
                     "D": Cpt("D", ("B",), uniform)})
    message = str(err.value)
    assert "cycle" in message
    for name in "ABD":
        assert name in message


def test_network_rejects_undeclared_parent():
    with pytest.raises(ValidationError):
        NetworkSpec((VariableDecl("A", 2),), {"A": ("Z",)},
                    {"A": Cpt("A", ("Z",), np.full((2, 2), 0.5))})


def test_network_rejects_shape_mismatch():
    decls = (VariableDecl("A", 3), VariableDecl("B", 2))
    with pytest.raises(ValidationError):
        NetworkSpec(decls, {"B": ("A",)},
                    {"A": Cpt("A", (), np.array([0.2, 0.3, 0.5])),
                     "B": Cpt("B", ("A",), np.full((2, 2), 0.5))})


def test_topo_order_respects_parents(diamond_net):
    order = diamond_net.topo_order
    assert order.index("A") < order.index("B") < order.index("D")
    assert order.index("A") < order.index("C") < order.index("D")


# joint_from_network


def test_joint_single_variable(single_net):
    q = joint_from_network(single_net)
    assert np.array_equal(q.probs, np.array([0.6, 0.4]))


def test_joint_chain_values(chain_net):
    q = joint_from_network(chain_net)
    assert np.array_equal(q.probs.ravel(), np.array(nets.CHAIN_JOINT_FLAT))


@pytest.mark.parametrize("seed", range(10))
def test_joint_sums_to_one_random_nets(seed):
    net = random_net(seed, 4 + seed % 9)
    q = joint_from_network(net)
    assert abs(float(q.probs.sum()) - 1.0) <= TAU_NORM


# marginalize


def test_marginalize_full_scope_is_identity(chain_net):
    q = joint_from_network(chain_net)
    m = marginalize(q, ("A", "B"))
    assert np.array_equal(m.probs, q.probs)


def test_marginalize_chain_to_b(chain_net):
    q = joint_from_network(chain_net)
    assert np.allclose(marginalize(q, ("B",)).probs, [0.5, 0.5], atol=1e-15)


def test_marginalize_uniform_pair():
    decls = (VariableDecl("A", 2), VariableDecl("B", 2))
    q = JointTable(decls, np.full((2, 2), 0.25))
    assert np.array_equal(marginalize(q, ("A",)).probs, np.array([0.5, 0.5]))


def test_marginalize_reorders_axes(diamond_net):
    q = joint_from_network(diamond_net)
    ad = marginalize(q, ("A", "D"))
    da = marginalize(q, ("D", "A"))
    assert np.array_equal(ad.probs, da.probs.T)


def test_marginalize_unknown_variable(chain_net):
    q = joint_from_network(chain_net)
    with pytest.raises(ScopeError):
        marginalize(q, ("A", "Z"))


@pytest.mark.parametrize("seed", range(8))
def test_marginalize_commutes(seed):
    net = random_net(seed, 6)
    q = joint_from_network(net)
    rng = np.random.default_rng(seed)
    names = list(net.names)
    y = list(rng.permutation(names)[:4])
    z = list(rng.permutation(y)[:2])
    direct = marginalize(q, z)
    via = marginalize(marginalize(q, y), z)
    assert np.max(np.abs(direct.probs - via.probs)) <= 1e-12


# extract_cpt


def test_extract_recovers_chain_cpt(chain_net):
    q = joint_from_network(chain_net)
    cpt = extract_cpt(q, "B", ("A",))
    assert np.allclose(cpt.table, chain_net.cpts["B"].table, atol=1e-15)


def test_extract_independent_pair_uniform():
    decls = (VariableDecl("A", 2), VariableDecl("B", 2))
    q = JointTable(decls, np.full((2, 2), 0.25))
    cpt = extract_cpt(q, "B", ("A",))
    assert np.array_equal(cpt.table, np.full((2, 2), 0.5))


def test_extract_zero_parent_row_fills_uniform():
    decls = (VariableDecl("A", 2), VariableDecl("B", 2))
    q = JointTable(decls, np.array([[0.3, 0.7], [0.0, 0.0]]))
    cpt = extract_cpt(q, "B", ("A",))
    assert np.array_equal(cpt.table[1], np.array([0.5, 0.5]))


@pytest.mark.parametrize("seed", range(8))
def test_extract_joint_roundtrip(seed):
    net = random_net(seed, 7)
    q = joint_from_network(net)
    for name in net.names:
        got = extract_cpt(q, name, net.parents[name])
        assert np.max(np.abs(got.table - net.cpts[name].table)) <= 1e-12


# i_divergence


def test_divergence_of_table_with_itself(chain_net):
    q = joint_from_network(chain_net)
    assert i_divergence(q, q) == 0.0


def test_divergence_point_mass_vs_uniform():
    decl = (VariableDecl("A", 2),)
    p = JointTable(decl, np.array([1.0, 0.0]))
    q = JointTable(decl, np.array([0.5, 0.5]))
    assert i_divergence(p, q) == pytest.approx(np.log(2.0), abs=1e-15)


def test_divergence_infinite_when_dominance_fails():
    decl = (VariableDecl("A", 2),)
    p = JointTable(decl, np.array([0.5, 0.5]))
    q = JointTable(decl, np.array([1.0, 0.0]))
    assert i_divergence(p, q) == float("inf")


def test_divergence_scope_mismatch():
    p = JointTable((VariableDecl("A", 2),), np.array([0.5, 0.5]))
    q = JointTable((VariableDecl("B", 2),), np.array([0.5, 0.5]))
    with pytest.raises(ScopeError):
        i_divergence(p, q)


@pytest.mark.parametrize("seed", range(8))
def test_divergence_nonnegative_zero_iff_equal(seed):
    net = random_net(seed, 5)
    q = joint_from_network(net)
    rng = np.random.default_rng(seed)
    noise = np.exp(0.3 * rng.normal(size=q.probs.shape))
    p = JointTable(q.scope, q.probs * noise / (q.probs * noise).sum())
    d = i_divergence(p, q)
    assert d >= 0.0
    if np.max(np.abs(p.probs - q.probs)) > 1e-12:
        assert d > 0.0
    assert i_divergence(q, q) == 0.0


# is_structurally_consistent


@pytest.mark.parametrize("seed", range(8))
def test_network_joint_is_structurally_consistent(seed):
    net = random_net(seed, 6)
    q = joint_from_network(net)
    assert is_structurally_consistent(q, net, 1e-9)


def test_perturbed_v_structure_joint_is_inconsistent():
    net = nets.v_structure()
    probs = joint_from_network(net).probs.copy()
    probs[0, 0, 0] += 0.05
    probs[1, 1, 1] -= 0.05
    q = JointTable(joint_from_network(net).scope, probs / probs.sum())
    assert not is_structurally_consistent(q, net, 1e-9)


# constraint_residual and validation


def test_residual_zero_when_satisfied(chain_net):
    q = joint_from_network(chain_net)
    r = Constraint.over(chain_net, ("B",), marginalize(q, ("B",)).probs)
    assert constraint_residual(q, r) == 0.0


def test_residual_chain_example(chain_net):
    q = joint_from_network(chain_net)
    r = nets.constraint_over(chain_net, ("B",), [0.3, 0.7])
    assert constraint_residual(q, r) == pytest.approx(0.2, abs=1e-15)


def test_residual_full_scope_identity(chain_net):
    q = joint_from_network(chain_net)
    r = Constraint.over(chain_net, ("A", "B"), q.probs)
    assert constraint_residual(q, r) == 0.0


def test_constraint_rejects_scope_distribution_mismatch(chain_net):
    with pytest.raises(ValidationError):
        Constraint(("A",), JointTable((VariableDecl("B", 2),),
                                      np.array([0.5, 0.5])))


def test_validate_constraint_unknown_variable(chain_net):
    r = Constraint(("Z",), JointTable((VariableDecl("Z", 2),),
                                      np.array([0.5, 0.5])))
    with pytest.raises(ScopeError):
        validate_constraint(chain_net, r)


def test_validate_constraint_cardinality_mismatch(chain_net):
    r = Constraint(("B",), JointTable((VariableDecl("B", 3),),
                                      np.array([0.2, 0.3, 0.5])))
    with pytest.raises(ValidationError):
        validate_constraint(chain_net, r)


# classification


def test_classify_single_variable_is_local(diamond_net):
    r = nets.constraint_over(diamond_net, ("B",), [0.4, 0.6])
    cls = classify_constraint(diamond_net, r)
    assert cls == Local("B", ())


def test_classify_diamond_pair_is_nonlocal(diamond_net, diamond_r3):
    cls = classify_constraint(diamond_net, diamond_r3)
    assert cls == NonLocal(("A", "D"), ("B", "C"))


def test_classify_child_with_parent_is_local(diamond_net):
    cls = classify_scope(diamond_net, ("D", "B"))
    assert cls == Local("D", ("B",))


def test_classify_full_family_is_local(diamond_net):
    cls = classify_scope(diamond_net, ("B", "C", "D"))
    assert cls == Local("D", ("B", "C"))


@pytest.mark.parametrize("seed", range(6))
def test_every_single_variable_scope_is_local(seed):
    net = random_net(seed, 8)
    for name in net.names:
        cls = classify_scope(net, (name,))
        assert isinstance(cls, Local) and cls.target == name


# property sweep over randomized nets, mixed cardinalities included


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 12),
       card=st.integers(2, 3))
def test_joint_properties_randomized(seed, n, card):
    net = random_net(seed, n, cardinality=card)
    q = joint_from_network(net)
    assert abs(float(q.probs.sum()) - 1.0) <= TAU_NORM
    assert is_structurally_consistent(q, net, 1e-9)
    name = net.names[seed % n]
    m = marginalize(q, (name,))
    assert abs(float(m.probs.sum()) - 1.0) <= 1e-12
