"""Structure-preserving fitting without the full joint table.

A constraint only ever forces changes in the CPTs of the variables it
mentions.  A local constraint (one variable plus some of its parents) is
absorbed by rescaling single rows of that variable's CPT.  A non-local
constraint over a set ``Y`` is handled inside a local subnet: the
conditional table of ``Y`` given the outside parents ``S``, iterated
against the constraint and re-factored until it settles.  Either way the
work is bounded by subnet size, not by the number of network variables,
and the result factors over the original DAG by construction.

The marginal a constraint is matched against is always the network's true
marginal ``Q(y)``, obtained by variable elimination; inside a subnet it is
computed from the factored form ``cond(y | s) * w(y, s)``, where ``w`` is
the contraction of every CPT outside ``Y`` onto ``S`` and ``Y``.  ``w``
does not change while only ``Y``'s tables are updated, so each inner
iteration costs a handful of subnet-sized array operations.
"""

from __future__ import annotations

import logging
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import (
    TAU_NORM,
    BnError,
    Constraint,
    Cpt,
    DominanceError,
    JointTable,
    Local,
    NetworkSpec,
    NonLocal,
    ScopeError,
    ValidationError,
    _conditional,
    _placed,
    _reextracted_product,
    classify_constraint,
    i_divergence,
    joint_from_network,
    validate_constraint,
)
from .dense import RunReport, Schedule, StopPolicy, Termination
from .elimination import Factor, _ancestral, contract, cpt_factor

logger = logging.getLogger("bnrefit")

SUBNET_BUDGET = 20
"""Largest variable count (constrained set plus outside parents) a single
constraint may span; beyond it the run aborts instead of degrading."""


class SubnetSizeError(BnError):
    """A constraint's subnet spans more variables than the budget allows."""


@dataclass(frozen=True, eq=False)
class LocalSubnet:
    """Conditional table of a variable set ``y`` given outside parents ``s``.

    ``cond_table`` has one axis per ``s`` variable followed by one per ``y``
    variable; for every ``s`` configuration the ``y`` block sums to one.
    """

    y: tuple[str, ...]
    s: tuple[str, ...]
    cond_table: np.ndarray = field(repr=False)

    def __post_init__(self):
        y = tuple(self.y)
        s = tuple(self.s)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "s", s)
        if not y:
            raise ValidationError("subnet needs a non-empty variable set")
        if set(y) & set(s):
            raise ValidationError(f"subnet sets overlap: y={y}, s={s}")
        table = np.array(self.cond_table, dtype=float)
        if table.ndim != len(s) + len(y):
            raise ValidationError(
                f"subnet table has {table.ndim} axes, expected "
                f"{len(s) + len(y)} for s={s}, y={y}"
            )
        if np.any(table < 0.0):
            raise ValidationError("subnet table has a negative entry")
        y_axes = tuple(range(len(s), len(s) + len(y)))
        sums = table.sum(axis=y_axes)
        if np.any(np.abs(sums - 1.0) > TAU_NORM):
            raise ValidationError(
                "subnet table rows must sum to 1 for every outside configuration"
            )
        table.setflags(write=False)
        object.__setattr__(self, "cond_table", table)


def _project(table: np.ndarray, axes_vars: tuple[str, ...],
             keep: tuple[str, ...]) -> np.ndarray:
    """Sum ``table`` down to ``keep`` and put the axes in ``keep`` order."""
    keep_set = set(keep)
    drop = tuple(i for i, v in enumerate(axes_vars) if v not in keep_set)
    reduced = table.sum(axis=drop) if drop else table
    remaining = [v for v in axes_vars if v in keep_set]
    return np.transpose(reduced, [remaining.index(v) for v in keep])


def _aligned_target(r: Constraint, order: tuple[str, ...]) -> np.ndarray:
    """``r``'s table transposed from its scope order to ``order``."""
    if sorted(r.scope) != sorted(order):
        raise ScopeError(
            f"constraint scope {r.scope} does not cover the variables {order}"
        )
    return np.transpose(r.dist.probs, [r.scope.index(v) for v in order])


def _ratio(target: np.ndarray, current: np.ndarray,
           names: tuple[str, ...]) -> np.ndarray:
    blocked = (current == 0.0) & (target > 0.0)
    if np.any(blocked):
        idx = tuple(int(v) for v in np.argwhere(blocked)[0])
        cell = ", ".join(f"{n}={v}" for n, v in zip(names, idx))
        raise DominanceError(
            f"constraint over {names} requires mass {target[idx]:.17g} at "
            f"({cell}) where the current distribution has none"
        )
    return np.divide(target, current, out=np.zeros_like(target),
                     where=current > 0.0)


def _scaled_rows(table: np.ndarray, ratio_placed: np.ndarray,
                 row_axes: tuple[int, ...], fallback: np.ndarray) -> np.ndarray:
    """Scale ``table`` cellwise, then renormalize over ``row_axes``.

    Rows left with zero mass carry no information; they keep ``fallback``.
    """
    scaled = table * ratio_placed
    alpha = scaled.sum(axis=row_axes, keepdims=True)
    safe = np.where(alpha > 0.0, alpha, 1.0)
    return np.where(alpha > 0.0, scaled / safe, fallback)


def _cond_product(y: tuple[str, ...], s: tuple[str, ...],
                  cpts: Mapping[str, Cpt]) -> np.ndarray:
    """Product of the ``y`` CPTs over axes ``(*s, *y)``."""
    order = s + y
    pos = {v: i for i, v in enumerate(order)}
    shape = [1] * len(order)
    out = np.ones(shape)
    for name in y:
        cpt = cpts[name]
        axes = [pos[p] for p in cpt.parent_order] + [pos[name]]
        out = out * _placed(cpt.table, axes, len(order))
    return out


def build_local_subnet(net: NetworkSpec, y_vars: Sequence[str],
                       cpts: Mapping[str, Cpt] | None = None) -> LocalSubnet:
    """Conditional table of ``y_vars`` given their outside parents.

    ``y`` and ``s`` come out in network declaration order.  The table is
    the product of the member CPTs, so for every outside configuration it
    is exactly the distribution of ``y`` the network prescribes given
    ``s``.  ``cpts`` overrides the network's tables.
    """
    members = set(y_vars)
    if not members:
        raise ValidationError("subnet needs a non-empty variable set")
    for v in members:
        if v not in net.names:
            raise ScopeError(f"variable {v!r} is not declared in this network")
    y = tuple(sorted(members, key=net.axis))
    outside: set[str] = set()
    for v in y:
        outside.update(p for p in net.parents[v] if p not in members)
    s = tuple(sorted(outside, key=net.axis))
    table = _cond_product(y, s, cpts if cpts is not None else net.cpts)
    cards = {v: net.cardinality(v) for v in s + y}
    full = np.broadcast_to(table, tuple(cards[v] for v in s + y))
    return LocalSubnet(y, s, full)


def local_update(cpt: Cpt, r: Constraint, net: NetworkSpec,
                 cpts: Mapping[str, Cpt] | None = None) -> Cpt:
    """Absorb a local constraint by rescaling rows of one CPT.

    ``r`` must classify as local with ``cpt.child`` as its target.  Each
    row of the result is the old row times the per-cell ratio of target to
    current marginal, renormalized, so the network's joint absorbs exactly
    the proportional-fitting step for ``r`` while only this table changes.
    The current marginal over the parents comes from variable elimination
    against ``net`` (or ``cpts`` when given).
    """
    cls = classify_constraint(net, r)
    if not isinstance(cls, Local) or cls.target != cpt.child:
        raise ScopeError(
            f"constraint over {r.scope} is not local to variable {cpt.child!r}"
        )
    parents = net.parents[cpt.child]
    if cpt.parent_order != parents:
        raise ValidationError(
            f"CPT parent order {cpt.parent_order} differs from the network's "
            f"{parents}"
        )
    working = dict(cpts if cpts is not None else net.cpts)
    working[cpt.child] = cpt
    return _local_visit(_LocalPlan.build(net, r, cls), working, net)


@dataclass
class _LocalPlan:
    target: str
    parents: tuple[str, ...]
    ancestral: tuple[str, ...]
    y_order: tuple[str, ...]
    y_axes: tuple[int, ...]
    target_table: np.ndarray

    @staticmethod
    def build(net: NetworkSpec, r: Constraint, cls: Local) -> "_LocalPlan":
        parents = net.parents[cls.target]
        needed = _ancestral(net.parents, parents, set(net.names))
        ancestral = tuple(n for n in net.names if n in needed)
        in_z = set(cls.constrained_parents)
        y_order = tuple(p for p in parents if p in in_z) + (cls.target,)
        y_axes = tuple(
            [parents.index(p) for p in y_order[:-1]] + [len(parents)]
        )
        return _LocalPlan(cls.target, parents, ancestral, y_order, y_axes,
                          _aligned_target(r, y_order))


def _local_visit(plan: _LocalPlan, work: Mapping[str, Cpt],
                 net: NetworkSpec) -> Cpt:
    rank = {name: i for i, name in enumerate(net.names)}
    cards = {v.name: v.cardinality for v in net.variables}
    cpt = work[plan.target]
    ndim = len(plan.parents) + 1
    if plan.parents:
        factors = [cpt_factor(work[name]) for name in plan.ancestral]
        qpi = contract(factors, plan.parents, rank, cards)
        joint = qpi[..., None] * cpt.table
    else:
        joint = cpt.table
    drop = tuple(i for i in range(ndim) if i not in set(plan.y_axes))
    qy = joint.sum(axis=drop) if drop else joint
    ratio = _ratio(plan.target_table, qy, plan.y_order)
    new = _scaled_rows(cpt.table, _placed(ratio, list(plan.y_axes), ndim),
                       (ndim - 1,), cpt.table)
    return Cpt(plan.target, plan.parents, new)


def nonlocal_update(sub: LocalSubnet, r: Constraint,
                    q_s: np.ndarray | None) -> LocalSubnet:
    """One proportional step on a subnet's conditional table.

    ``q_s`` supplies the context weight the conditional is paired with to
    form the subnet's joint: either a distribution over ``sub.s`` alone or
    a full table over ``(*sub.s, *sub.y)`` (any positive scaling works, and
    ``None`` means uniform, which is exact when ``sub.s`` is empty).  The
    conditional is scaled cellwise by target over current marginal and
    renormalized per outside configuration, so for every ``s`` it stays a
    distribution while the subnet's marginal over ``y`` moves onto ``r``.
    """
    target = _aligned_target(r, sub.y)
    shape = sub.cond_table.shape
    ns, ny = len(sub.s), len(sub.y)
    s_axes = tuple(range(ns))
    y_axes = tuple(range(ns, ns + ny))
    if q_s is None:
        w = np.ones((1,) * len(shape))
    else:
        w = np.asarray(q_s, dtype=float)
        if w.shape == shape[:ns]:
            w = w.reshape(shape[:ns] + (1,) * ny)
        elif w.shape != shape:
            raise ScopeError(
                f"context weight shape {w.shape} matches neither the outside "
                f"variables {shape[:ns]} nor the full subnet {shape}"
            )
    joint = sub.cond_table * w
    qy = joint.sum(axis=s_axes) if s_axes else joint
    total = float(qy.sum())
    if total > 0.0:
        qy = qy / total
    ratio = _ratio(target, qy, sub.y)
    new = _scaled_rows(sub.cond_table,
                       _placed(ratio, list(y_axes), len(shape)),
                       y_axes, sub.cond_table)
    return LocalSubnet(sub.y, sub.s, new)


def _outside_weight(net: NetworkSpec, y: tuple[str, ...], s: tuple[str, ...],
                    cpts: Mapping[str, Cpt]) -> np.ndarray:
    """Contraction of every CPT outside ``y`` onto ``(*s, *y)``.

    Pairing this weight with a conditional table for ``y`` gives the exact
    joint marginal over ``s`` and ``y``; it only involves tables of
    variables outside ``y``, so it is invariant while ``y``'s CPTs move.
    """
    rank = {name: i for i, name in enumerate(net.names)}
    cards = {v.name: v.cardinality for v in net.variables}
    have = set(net.names) - set(y)
    needed = _ancestral(net.parents, s + y, have)
    outside = [cpt_factor(cpts[name]) for name in net.names if name in needed]
    return contract(outside, s + y, rank, cards)


def extract_subnet_cpts(sub: LocalSubnet, net: NetworkSpec,
                        cpts: Mapping[str, Cpt] | None = None) -> dict[str, Cpt]:
    """Read per-variable CPTs back off a subnet's conditional table.

    The subnet joint is formed as ``cond * w`` with the exact outside
    weight for ``net`` (see ``_outside_weight``), then each member's
    conditional given its own parents is extracted from it.  Building a
    subnet and extracting immediately returns the original CPTs wherever
    parent configurations have positive mass; zero-mass rows fill
    uniformly.
    """
    for v in sub.y:
        if v not in net.names:
            raise ScopeError(f"variable {v!r} is not declared in this network")
    members = set(sub.y)
    outside: set[str] = set()
    for v in sub.y:
        outside.update(p for p in net.parents[v] if p not in members)
    if set(sub.s) != outside:
        raise ScopeError(
            f"subnet outside set {sub.s} does not match the network's "
            f"{tuple(sorted(outside, key=net.axis))}"
        )
    table = cpts if cpts is not None else net.cpts
    w = _outside_weight(net, sub.y, sub.s, table)
    joint = sub.cond_table * w
    sy = sub.s + sub.y
    out: dict[str, Cpt] = {}
    for child in sub.y:
        parents = net.parents[child]
        m = _project(joint, sy, parents + (child,))
        out[child] = Cpt(child, parents, _conditional(m))
    return out


@dataclass
class _SubnetPlan:
    y: tuple[str, ...]
    s: tuple[str, ...]
    sy: tuple[str, ...]
    target_table: np.ndarray
    y_axes: tuple[int, ...]
    s_axes: tuple[int, ...]
    extractions: tuple[tuple[str, tuple[str, ...]], ...]

    @staticmethod
    def build(net: NetworkSpec, r: Constraint, cls: NonLocal) -> "_SubnetPlan":
        y, s = cls.y, cls.s
        sy = s + y
        ns, ny = len(s), len(y)
        return _SubnetPlan(
            y=y, s=s, sy=sy,
            target_table=_aligned_target(r, y),
            y_axes=tuple(range(ns, ns + ny)),
            s_axes=tuple(range(ns)),
            extractions=tuple((child, net.parents[child]) for child in y),
        )


def _nonlocal_visit(plan: _SubnetPlan, work: dict[str, Cpt], net: NetworkSpec,
                    inner_epsilon: float, inner_cap: int) -> int:
    """Fit one non-local constraint in place; returns inner iterations used.

    Alternates a proportional step on the subnet conditional with
    re-extraction of member CPTs until the step stops moving the table.
    The context weight is computed once; it only involves outside CPTs.

    The loop can run for thousands of iterations when the constraint asks
    for dependence the subnet expresses reluctantly, so all per-iteration
    work happens on member tables kept in broadcast position over the
    subnet axes: summing with ``keepdims`` both extracts a member and
    leaves it placed for the next product, and the proper ``Cpt`` objects
    are only built once the loop settles.
    """
    w = _outside_weight(net, plan.y, plan.s, work)
    pos = {v: i for i, v in enumerate(plan.sy)}
    ndim = len(plan.sy)
    ratio_shape = (1,) * len(plan.s) + plan.target_table.shape
    specs = []
    placed: dict[str, np.ndarray] = {}
    for child, parents in plan.extractions:
        axes = [pos[p] for p in parents] + [pos[child]]
        drop = tuple(i for i in range(ndim) if i not in axes)
        uniform = 1.0 / work[child].table.shape[-1]
        specs.append((child, parents, drop, pos[child], uniform))
        placed[child] = _placed(work[child].table, axes, ndim)
    delta = float("inf")
    iterations = 0
    while iterations < inner_cap:
        iterations += 1
        cond = placed[plan.y[0]]
        for child in plan.y[1:]:
            cond = cond * placed[child]
        joint = cond * w
        qy = joint.sum(axis=plan.s_axes) if plan.s_axes else joint
        total = float(qy.sum())
        if total > 0.0:
            qy = qy / total
        ratio = _ratio(plan.target_table, qy, plan.y)
        scaled = cond * ratio.reshape(ratio_shape)
        alpha = scaled.sum(axis=plan.y_axes, keepdims=True)
        newcond = np.where(alpha > 0.0,
                           scaled / np.where(alpha > 0.0, alpha, 1.0), cond)
        delta = float(np.max(np.abs(newcond - cond)))
        refit = newcond * w
        for child, parents, drop, child_axis, uniform in specs:
            m = refit.sum(axis=drop, keepdims=True) if drop else refit
            denom = m.sum(axis=child_axis, keepdims=True)
            placed[child] = np.where(
                denom > 0.0, m / np.where(denom > 0.0, denom, 1.0), uniform)
        if delta <= inner_epsilon:
            break
    for child, parents, drop, child_axis, uniform in specs:
        keep = sorted(set(range(ndim)) - set(drop))
        axes = [pos[p] for p in parents] + [pos[child]]
        table = placed[child].reshape([placed[child].shape[i] for i in keep])
        work[child] = Cpt(child, parents,
                          np.transpose(table, [keep.index(a) for a in axes]))
    if delta > inner_epsilon:
        logger.warning(
            "constraint over %s: inner loop hit its cap of %d iterations "
            "with step size %.3e; the outer cycle will revisit it",
            plan.y, inner_cap, delta,
        )
    return iterations


def run_d_ipfp(net: NetworkSpec, constraints: Sequence[Constraint],
               stop: StopPolicy | None = None,
               schedule: Schedule | None = None,
               *,
               inner_epsilon: float | None = None,
               inner_max_iterations: int = 1000,
               subnet_budget: int = SUBNET_BUDGET,
               dense_report_ceiling: int = 25) -> tuple[NetworkSpec, RunReport]:
    """Structure-preserving fit that never materializes the joint.

    Each cycle visits the constraints in schedule order; a local constraint
    rescales rows of one CPT, a non-local one runs the subnet iteration of
    ``_nonlocal_visit``.  Convergence is judged on CPT entries (the state
    the solver actually moves) together with the true marginal residuals
    from variable elimination.  The report's dense quantities (divergence,
    structural residual) are filled in only when the variable count is at
    most ``dense_report_ceiling``; the result factors over the DAG by
    construction either way.
    """
    t0 = time.perf_counter()
    stop = stop or StopPolicy()
    constraints = list(constraints)
    for r in constraints:
        validate_constraint(net, r)
    if schedule is None:
        schedule = Schedule.document_order(len(constraints))
    if len(schedule.order) != len(constraints):
        raise ValidationError(
            f"schedule covers {len(schedule.order)} constraints, got "
            f"{len(constraints)}"
        )
    inner_eps = stop.epsilon if inner_epsilon is None else inner_epsilon

    dense_ok = len(net.variables) <= dense_report_ceiling
    if not constraints:
        report = RunReport(
            algorithm="d-ipfp", cycles=0,
            wall_time=time.perf_counter() - t0,
            final_divergence=0.0 if dense_ok else None,
            per_constraint_residuals=(),
            structural_residual=0.0 if dense_ok else None,
            termination=Termination.CONVERGED,
        )
        return net, report

    plans: list[_LocalPlan | _SubnetPlan] = []
    for r in constraints:
        cls = classify_constraint(net, r)
        if isinstance(cls, Local):
            span = {cls.target} | set(net.parents[cls.target])
            if len(span) > subnet_budget:
                raise SubnetSizeError(
                    f"constraint over {r.scope}: the family of "
                    f"{cls.target!r} spans {len(span)} variables, over the "
                    f"budget of {subnet_budget}"
                )
            plans.append(_LocalPlan.build(net, r, cls))
        else:
            span = len(cls.y) + len(cls.s)
            if span > subnet_budget:
                raise SubnetSizeError(
                    f"constraint over {r.scope}: subnet spans {span} "
                    f"variables (y={cls.y}, s={cls.s}), over the budget "
                    f"of {subnet_budget}"
                )
            plans.append(_SubnetPlan.build(net, r, cls))

    rank = {name: i for i, name in enumerate(net.names)}
    cards = {v.name: v.cardinality for v in net.variables}
    all_names = set(net.names)
    residual_names = [
        tuple(n for n in net.names
              if n in _ancestral(net.parents, r.scope, all_names))
        for r in constraints
    ]

    work: dict[str, Cpt] = dict(net.cpts)

    def current_residuals() -> tuple[float, ...]:
        res = []
        for r, names in zip(constraints, residual_names):
            factors = [cpt_factor(work[n]) for n in names]
            m = contract(factors, r.scope, rank, cards)
            res.append(float(np.max(np.abs(m - r.dist.probs))))
        return tuple(res)

    eps = stop.epsilon
    deltas: deque[float] = deque(maxlen=stop.oscillation_window)
    worsts: deque[float] = deque(maxlen=stop.oscillation_window)
    termination = Termination.MAX_CYCLES
    cycles = stop.max_cycles
    residuals: tuple[float, ...] | None = None

    for cycle in range(1, stop.max_cycles + 1):
        snapshot = dict(work)
        for i in schedule.order:
            plan = plans[i]
            if isinstance(plan, _LocalPlan):
                work[plan.target] = _local_visit(plan, work, net)
            else:
                _nonlocal_visit(plan, work, net, inner_eps,
                                inner_max_iterations)

        delta = 0.0
        for name, cpt in work.items():
            before = snapshot[name].table
            if cpt.table is not before:
                delta = max(delta, float(np.max(np.abs(cpt.table - before))))

        # Residuals come from variable elimination, which costs more than a
        # whole cycle of CPT updates; verify them only when the cheap delta
        # signal says the run may be done, or has stalled.
        residuals = None
        if delta <= eps:
            residuals = current_residuals()
            if max(residuals) <= eps:
                termination = Termination.CONVERGED
                cycles = cycle
                break

        deltas.append(delta)
        if len(deltas) == deltas.maxlen and deltas[-1] >= 0.9 * deltas[0]:
            if residuals is None:
                residuals = current_residuals()
            worsts.append(max(residuals))
            if (len(worsts) == worsts.maxlen
                    and worsts[-1] >= 0.99 * worsts[0]):
                logger.warning(
                    "cycle %d: CPT deltas plateaued near %.3e and max "
                    "residual stuck near %.3e; constraints look "
                    "contradictory, stopping as oscillating",
                    cycle, delta, worsts[-1],
                )
                termination = Termination.OSCILLATING
                cycles = cycle
                break
        else:
            worsts.clear()

    if residuals is None:
        residuals = current_residuals()

    result = NetworkSpec(net.variables, net.parents, work)
    final_divergence = None
    structural_residual = None
    if dense_ok:
        q0 = joint_from_network(net)
        qf = joint_from_network(result)
        final_divergence = i_divergence(qf, q0)
        structural_residual = float(
            np.max(np.abs(qf.probs - _reextracted_product(qf, result)))
        )
    report = RunReport(
        algorithm="d-ipfp",
        cycles=cycles,
        wall_time=time.perf_counter() - t0,
        final_divergence=final_divergence,
        per_constraint_residuals=residuals,
        structural_residual=structural_residual,
        termination=termination,
    )
    return result, report
