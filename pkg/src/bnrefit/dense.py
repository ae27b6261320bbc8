"""Dense-table solvers.

``run_ipfp`` is plain iterative proportional fitting on the explicit joint:
each step rescales the table so one constraint's marginal is met exactly,
and cycling the steps converges to the I-projection of the starting joint
onto the constraint set.  The fitted table generally no longer factors over
the network's DAG.  ``run_e_ipfp`` restores that factorization once per
cycle by re-extracting CPTs from the working table and replacing it with
their product, so its answer is again a network with the original
structure.

Both solvers detect three outcomes: convergence (all residuals and the
cycle-to-cycle change within epsilon), a cycle budget running out, and
oscillation.  Contradictory constraints make the table orbit instead of
settle; the oscillation heuristic watches a window of recent cycle deltas
and worst residuals and fires only when both have stopped improving while
the residuals are still above epsilon.  A plateau in the deltas alone is
not enough: slowly converging runs can crawl for stretches, but their
residuals keep shrinking, whereas a genuine orbit's residuals do not.
The event is logged, never silent.
"""

from __future__ import annotations

import enum
import logging
import time
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    Constraint,
    DominanceError,
    JointTable,
    NetworkSpec,
    ValidationError,
    _placed,
    _reextracted_product,
    constraint_residual,
    extract_cpt,
    i_divergence,
    joint_from_network,
    marginalize,
    validate_constraint,
)

logger = logging.getLogger("bnrefit")


class Termination(enum.Enum):
    """How a solver run ended."""

    CONVERGED = "converged"
    MAX_CYCLES = "max-cycles"
    OSCILLATING = "oscillating"


@dataclass(frozen=True)
class StopPolicy:
    """Termination tuning shared by the solvers.

    ``epsilon`` bounds both constraint residuals and the cycle-to-cycle
    table change at convergence.  ``oscillation_window`` is how many recent
    cycles the plateau detector looks at; a run is declared oscillating
    only when, over a full window, the newest delta fails to fall below
    0.9 times the oldest and the worst residual has also improved by less
    than one percent.
    """

    epsilon: float = 1e-9
    max_cycles: int = 10_000
    oscillation_window: int = 20

    def __post_init__(self):
        if not (self.epsilon > 0.0):
            raise ValidationError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_cycles < 1:
            raise ValidationError(f"max_cycles must be >= 1, got {self.max_cycles}")
        if self.oscillation_window < 2:
            raise ValidationError(
                f"oscillation_window must be >= 2, got {self.oscillation_window}"
            )


@dataclass(frozen=True)
class Schedule:
    """Constraint visiting order within one cycle.

    ``order`` is a permutation of constraint indices.  ``include_structural``
    asks ``run_ipfp`` to finish each cycle with the structural re-extraction
    step; ``run_e_ipfp`` performs that step regardless.
    """

    order: tuple[int, ...]
    include_structural: bool = False

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(self.order))
        if sorted(self.order) != list(range(len(self.order))):
            raise ValidationError(
                f"schedule order {self.order} is not a permutation of "
                f"0..{len(self.order) - 1}"
            )

    @staticmethod
    def document_order(count: int, include_structural: bool = False) -> "Schedule":
        return Schedule(tuple(range(count)), include_structural)

    @staticmethod
    def ancestors_first(net: NetworkSpec, constraints: Sequence[Constraint],
                        include_structural: bool = False) -> "Schedule":
        """Visit constraints whose scopes sit higher in the DAG first.

        Scopes are ordered by the topological depth of their deepest
        member, the variable whose CPT region absorbs the constraint, so
        upstream constraints are applied before the downstream fits that
        must account for them.  Ties fall back to shallowest member, then
        to position in the input list, keeping the order deterministic.
        """

        def key(i: int):
            depths = [net.topo_depth(v) for v in constraints[i].scope]
            return (max(depths), min(depths), i)

        return Schedule(tuple(sorted(range(len(constraints)), key=key)),
                        include_structural)


@dataclass
class RunReport:
    """What a solver run did and how it ended.

    ``final_divergence`` is the I-divergence of the result from the input
    network's joint, in natural log (``log_base`` records this); it is
    ``None`` when the variable count makes the dense computation
    unreasonable.  ``structural_residual`` is the max-abs gap between the
    final joint and the product of its extracted CPTs, ``None`` when
    skipped for the same reason.
    """

    algorithm: str
    cycles: int
    wall_time: float
    final_divergence: float | None
    per_constraint_residuals: tuple[float, ...]
    structural_residual: float | None
    termination: Termination
    log_base: str = "e"


def ipfp_step(q: JointTable, r: Constraint) -> JointTable:
    """One proportional-fitting step: after it, ``q``'s marginal over
    ``r.scope`` equals ``r.dist`` exactly (up to rounding).

    Cells where the current marginal and the target are both zero stay
    zero.  A target that is positive where the marginal is zero cannot be
    reached by rescaling and raises ``DominanceError`` naming the cell.
    """
    current = marginalize(q, r.scope).probs
    target = r.dist.probs
    blocked = (current == 0.0) & (target > 0.0)
    if np.any(blocked):
        idx = tuple(int(v) for v in np.argwhere(blocked)[0])
        cell = ", ".join(f"{n}={v}" for n, v in zip(r.scope, idx))
        raise DominanceError(
            f"constraint over {r.scope} requires mass {target[idx]:.17g} at "
            f"({cell}) where the current joint has none"
        )
    ratio = np.divide(target, current, out=np.zeros_like(target),
                      where=current > 0.0)
    axes = [q.axis(n) for n in r.scope]
    return JointTable(q.scope, q.probs * _placed(ratio, axes, q.probs.ndim))


def structural_projection(q: JointTable, net: NetworkSpec) -> JointTable:
    """Replace ``q`` with the product of the CPTs it induces on ``net``'s DAG.

    This is itself a proportional-fitting step whose target is the set of
    distributions factoring over the DAG; applying it at the end of each
    cycle is what turns plain fitting into the structure-preserving solver.
    """
    return JointTable(q.scope, _reextracted_product(q, net))


def _immediate_report(algorithm: str, net: NetworkSpec, q0: JointTable,
                      t0: float) -> RunReport:
    return RunReport(
        algorithm=algorithm,
        cycles=0,
        wall_time=time.perf_counter() - t0,
        final_divergence=0.0,
        per_constraint_residuals=(),
        structural_residual=float(
            np.max(np.abs(q0.probs - _reextracted_product(q0, net)))
        ),
        termination=Termination.CONVERGED,
    )


def _run_dense(net: NetworkSpec, constraints: Sequence[Constraint],
               stop: StopPolicy, schedule: Schedule | None,
               structural: bool, algorithm: str) -> tuple[JointTable, RunReport]:
    t0 = time.perf_counter()
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
    structural = structural or schedule.include_structural

    q0 = joint_from_network(net)
    if not constraints:
        return q0, _immediate_report(algorithm, net, q0, t0)

    q = q0
    eps = stop.epsilon
    deltas: deque[float] = deque(maxlen=stop.oscillation_window)
    worsts: deque[float] = deque(maxlen=stop.oscillation_window)
    termination = Termination.MAX_CYCLES
    cycles = stop.max_cycles
    residuals: tuple[float, ...] = ()

    for cycle in range(1, stop.max_cycles + 1):
        previous = q.probs
        for i in schedule.order:
            q = ipfp_step(q, constraints[i])
        if structural:
            q = structural_projection(q, net)
        total = float(q.probs.sum())
        if total != 1.0:
            # Drift is a few ulp per cycle; correct it in the open.
            logger.debug("cycle %d: renormalizing, sum off by %.3e",
                         cycle, total - 1.0)
            q = JointTable(q.scope, q.probs / total)

        delta = float(np.max(np.abs(q.probs - previous)))
        residuals = tuple(constraint_residual(q, r) for r in constraints)
        worst = max(residuals)
        if worst <= eps and delta <= eps:
            if structural:
                gap = float(np.max(np.abs(q.probs - _reextracted_product(q, net))))
                if gap > eps:
                    # Re-extraction is idempotent so this is unreachable in
                    # practice, but convergence must not be claimed on a
                    # structurally drifted table.
                    deltas.append(delta)
                    continue
            termination = Termination.CONVERGED
            cycles = cycle
            break
        deltas.append(delta)
        worsts.append(worst)
        if (len(deltas) == deltas.maxlen
                and deltas[-1] >= 0.9 * deltas[0]
                and worsts[-1] >= 0.99 * worsts[0]):
            logger.warning(
                "cycle %d: deltas plateaued near %.3e and max residual stuck "
                "near %.3e; constraints look contradictory, stopping as "
                "oscillating",
                cycle, delta, worst,
            )
            termination = Termination.OSCILLATING
            cycles = cycle
            break

    structural_residual = float(
        np.max(np.abs(q.probs - _reextracted_product(q, net)))
    )
    report = RunReport(
        algorithm=algorithm,
        cycles=cycles,
        wall_time=time.perf_counter() - t0,
        final_divergence=i_divergence(q, q0),
        per_constraint_residuals=residuals,
        structural_residual=structural_residual,
        termination=termination,
    )
    return q, report


def run_ipfp(net: NetworkSpec, constraints: Sequence[Constraint],
             stop: StopPolicy | None = None,
             schedule: Schedule | None = None) -> tuple[JointTable, RunReport]:
    """Fit ``net``'s joint to ``constraints`` by cycling proportional steps.

    Returns the fitted joint table and a report.  On convergence the table
    is the I-projection of the starting joint onto the constraint set; it
    usually does not factor over the network's DAG any more, and the
    report's ``structural_residual`` says by how much.
    """
    return _run_dense(net, constraints, stop or StopPolicy(), schedule,
                      structural=False, algorithm="ipfp")


def run_e_ipfp(net: NetworkSpec, constraints: Sequence[Constraint],
               stop: StopPolicy | None = None,
               schedule: Schedule | None = None) -> tuple[NetworkSpec, RunReport]:
    """Structure-preserving fit: proportional steps plus a per-cycle
    re-extraction of CPTs, so the result is a network on the same DAG.

    Returns the refitted network and a report.  The network's joint meets
    every constraint within ``stop.epsilon`` when the report says
    ``CONVERGED``.
    """
    q, report = _run_dense(net, constraints, stop or StopPolicy(), schedule,
                           structural=True, algorithm="e-ipfp")
    if report.cycles == 0:
        return net, report
    cpts = {
        v.name: extract_cpt(q, v.name, net.parents[v.name])
        for v in net.variables
    }
    return NetworkSpec(net.variables, net.parents, cpts), report
