"""Discrete Bayesian networks as dense probability tables.

A network couples a DAG over finitely-valued variables with one conditional
probability table (CPT) per variable; the joint distribution is the product
of the CPT entries selected by each full instantiation.  This module holds
the domain types (variable declarations, CPTs, networks, joint tables,
marginal constraints) and the table primitives every solver builds on:
joint construction, marginalization, CPT extraction, I-divergence, and the
structural-consistency and constraint-residual checks.

Tables are numpy arrays with one axis per scope variable, axes in scope
order.  Flattened in C order they enumerate instantiations in mixed-radix
order with the last scope variable varying fastest; the file formats in
``fileio`` rely on exactly this convention.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

logger = logging.getLogger("bnrefit")

TAU_NORM = 1e-9
"""Normalization tolerance applied whenever a table is ingested.

Rows and distributions must sum to one within this bound; nothing is
renormalized silently on ingest."""


class BnError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(BnError):
    """A type invariant failed while constructing or checking an object."""


class CycleError(ValidationError):
    """The parent graph contains a directed cycle."""


class NormalizationError(ValidationError):
    """A table row or distribution does not sum to one within TAU_NORM."""


class ScopeError(BnError):
    """An operation was asked to relate tables over incompatible scopes."""


class DominanceError(BnError):
    """A constraint demands mass where the current distribution has none.

    Proportional fitting can only reweight existing support; a target that
    is positive on a zero-probability cell is unreachable.
    """


def _freeze(values, dtype=float) -> np.ndarray:
    """Copy ``values`` into a read-only float array."""
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _placed(table: np.ndarray, axes: Sequence[int], ndim: int) -> np.ndarray:
    """View of ``table`` broadcastable over an ``ndim``-axis array.

    ``axes[i]`` is the destination axis of ``table`` axis ``i``; every other
    destination axis has length one.  ``axes`` need not be increasing.
    """
    order = np.argsort(axes)
    moved = np.transpose(table, order)
    shape = [1] * ndim
    for pos, size in zip(sorted(axes), moved.shape):
        shape[pos] = size
    return moved.reshape(shape)


@dataclass(frozen=True)
class VariableDecl:
    """A named discrete variable with states indexed ``0..cardinality-1``.

    ``states`` is an optional tuple of display labels; indices, not labels,
    are what tables and file formats are keyed by.
    """

    name: str
    cardinality: int
    states: tuple[str, ...] | None = None

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise ValidationError("variable name must be a non-empty string")
        if not isinstance(self.cardinality, int) or self.cardinality < 2:
            raise ValidationError(
                f"variable {self.name!r}: cardinality must be an integer >= 2, "
                f"got {self.cardinality!r}"
            )
        if self.states is not None:
            object.__setattr__(self, "states", tuple(self.states))
            if len(self.states) != self.cardinality:
                raise ValidationError(
                    f"variable {self.name!r}: {len(self.states)} state labels "
                    f"for cardinality {self.cardinality}"
                )


@dataclass(frozen=True, eq=False)
class Cpt:
    """Conditional probability table for one child variable.

    ``table`` has one axis per parent, in ``parent_order``, plus a final
    axis for the child; each parent configuration selects a row that is a
    distribution over the child's states.  The array is stored read-only.
    """

    child: str
    parent_order: tuple[str, ...]
    table: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "parent_order", tuple(self.parent_order))
        if len(set(self.parent_order)) != len(self.parent_order):
            raise ValidationError(f"CPT for {self.child!r}: duplicate parent")
        if self.child in self.parent_order:
            raise ValidationError(f"CPT for {self.child!r}: child listed as its own parent")
        table = np.array(self.table, dtype=float)
        if table.ndim != len(self.parent_order) + 1:
            raise ValidationError(
                f"CPT for {self.child!r}: table has {table.ndim} axes, "
                f"expected {len(self.parent_order) + 1} (parents plus child)"
            )
        if table.shape[-1] < 2:
            raise ValidationError(
                f"CPT for {self.child!r}: child axis has length {table.shape[-1]}"
            )
        if np.any(table < 0.0) or np.any(table > 1.0 + TAU_NORM):
            raise ValidationError(f"CPT for {self.child!r}: entries must lie in [0, 1]")
        rows = table.reshape(-1, table.shape[-1])
        sums = rows.sum(axis=1)
        bad = np.nonzero(np.abs(sums - 1.0) > TAU_NORM)[0]
        if bad.size:
            i = int(bad[0])
            config = tuple(int(v) for v in np.unravel_index(i, table.shape[:-1])) if self.parent_order else ()
            where = ", ".join(f"{p}={v}" for p, v in zip(self.parent_order, config))
            raise NormalizationError(
                f"CPT for {self.child!r}: row {i} ({where or 'no parents'}) "
                f"sums to {sums[i]:.17g}, more than {TAU_NORM:g} away from 1"
            )
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    @property
    def child_cardinality(self) -> int:
        return self.table.shape[-1]


@dataclass(frozen=True, eq=False)
class JointTable:
    """Dense probability table over an ordered scope of variables.

    ``probs`` carries one axis per scope variable, axes in scope order, and
    sums to one within ``TAU_NORM``.  A flat array of the right total size
    is accepted and reshaped.  The array is stored read-only.
    """

    scope: tuple[VariableDecl, ...]
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        scope = tuple(self.scope)
        object.__setattr__(self, "scope", scope)
        if not scope:
            raise ValidationError("joint table needs a non-empty scope")
        names = [v.name for v in scope]
        if len(set(names)) != len(names):
            raise ValidationError(f"joint table scope repeats a variable: {names}")
        shape = tuple(v.cardinality for v in scope)
        probs = np.array(self.probs, dtype=float)
        if probs.ndim == 1 and probs.size == int(np.prod(shape)):
            probs = probs.reshape(shape)
        if probs.shape != shape:
            raise ValidationError(
                f"joint table over {tuple(names)}: shape {probs.shape} does not "
                f"match cardinalities {shape}"
            )
        if np.any(probs < 0.0):
            raise ValidationError(f"joint table over {tuple(names)}: negative entry")
        total = float(probs.sum())
        if abs(total - 1.0) > TAU_NORM:
            raise NormalizationError(
                f"joint table over {tuple(names)}: sums to {total:.17g}, more "
                f"than {TAU_NORM:g} away from 1"
            )
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.scope)

    def axis(self, name: str) -> int:
        for i, v in enumerate(self.scope):
            if v.name == name:
                return i
        raise ScopeError(f"variable {name!r} is not in scope {self.names}")


@dataclass(frozen=True, eq=False)
class Constraint:
    """A target marginal distribution over a subset of network variables."""

    scope: tuple[str, ...]
    dist: JointTable

    def __post_init__(self):
        object.__setattr__(self, "scope", tuple(self.scope))
        if not self.scope:
            raise ValidationError("constraint scope must be non-empty")
        if len(set(self.scope)) != len(self.scope):
            raise ValidationError(f"constraint scope repeats a variable: {self.scope}")
        if self.dist.names != self.scope:
            raise ValidationError(
                f"constraint scope {self.scope} does not match its "
                f"distribution's scope {self.dist.names}"
            )

    @classmethod
    def over(cls, net: "NetworkSpec", names: Sequence[str], values) -> "Constraint":
        """Build a constraint against ``net``, taking declarations from it."""
        names = tuple(names)
        decls = tuple(net.decl(n) for n in names)
        return cls(names, JointTable(decls, values))


@dataclass(frozen=True)
class Local:
    """Constraint scope covered by one CPT: a target variable plus some of
    its parents."""

    target: str
    constrained_parents: tuple[str, ...]


@dataclass(frozen=True)
class NonLocal:
    """Constraint scope spanning several families.

    ``y`` is the constrained variable set and ``s`` the union of their
    parents outside ``y``, both in network declaration order.
    """

    y: tuple[str, ...]
    s: tuple[str, ...]


LocalityClass = Union[Local, NonLocal]


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    """A DAG over declared variables plus one CPT per variable.

    ``parents`` maps each variable name to its ordered parent tuple (missing
    entries mean no parents); ``cpts`` maps each variable name to a ``Cpt``
    whose ``parent_order`` equals the declared parents and whose shape
    matches the declared cardinalities.  Construction validates everything,
    including acyclicity, so a ``NetworkSpec`` in hand is a usable network.
    """

    variables: tuple[VariableDecl, ...]
    parents: Mapping[str, tuple[str, ...]]
    cpts: Mapping[str, Cpt]
    topo_order: tuple[str, ...] = field(init=False, repr=False)

    def __post_init__(self):
        variables = tuple(self.variables)
        object.__setattr__(self, "variables", variables)
        if not variables:
            raise ValidationError("network needs at least one variable")
        names = [v.name for v in variables]
        if len(set(names)) != len(names):
            raise ValidationError("duplicate variable declaration")
        index = {n: i for i, n in enumerate(names)}
        object.__setattr__(self, "_index", index)

        for key in self.parents:
            if key not in index:
                raise ValidationError(f"parents given for undeclared variable {key!r}")
        parents = {}
        for name in names:
            ps = tuple(self.parents.get(name, ()))
            if len(set(ps)) != len(ps):
                raise ValidationError(f"variable {name!r}: duplicate parent")
            for p in ps:
                if p not in index:
                    raise ValidationError(
                        f"variable {name!r}: parent {p!r} is not declared"
                    )
            parents[name] = ps
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "topo_order", self._toposort(names, parents))

        for key in self.cpts:
            if key not in index:
                raise ValidationError(f"CPT given for undeclared variable {key!r}")
        cpts = {}
        for name in names:
            cpt = self.cpts.get(name)
            if cpt is None:
                raise ValidationError(f"variable {name!r}: no CPT")
            if cpt.child != name:
                raise ValidationError(
                    f"CPT stored under {name!r} declares child {cpt.child!r}"
                )
            if cpt.parent_order != parents[name]:
                raise ValidationError(
                    f"variable {name!r}: CPT parent order {cpt.parent_order} "
                    f"differs from declared parents {parents[name]}"
                )
            want = tuple(variables[index[p]].cardinality for p in parents[name])
            want = want + (variables[index[name]].cardinality,)
            if cpt.table.shape != want:
                raise ValidationError(
                    f"variable {name!r}: CPT shape {cpt.table.shape} does not "
                    f"match declared cardinalities {want}"
                )
            cpts[name] = cpt
        object.__setattr__(self, "cpts", cpts)

    @staticmethod
    def _toposort(names: list[str], parents: Mapping[str, tuple[str, ...]]) -> tuple[str, ...]:
        children: dict[str, list[str]] = {n: [] for n in names}
        pending = {n: len(parents[n]) for n in names}
        for n in names:
            for p in parents[n]:
                children[p].append(n)
        ready = [n for n in names if pending[n] == 0]
        order: list[str] = []
        while ready:
            n = ready.pop(0)
            order.append(n)
            for c in children[n]:
                pending[c] -= 1
                if pending[c] == 0:
                    ready.append(c)
        if len(order) == len(names):
            return tuple(order)
        # Walk parent links among the leftover nodes until one repeats,
        # so the error can name an actual cycle.
        stuck = next(n for n in names if pending[n] > 0)
        seen: list[str] = []
        node = stuck
        while node not in seen:
            seen.append(node)
            node = next(p for p in parents[node] if pending[p] > 0)
        cycle = seen[seen.index(node):] + [node]
        raise CycleError("cycle detected: " + " -> ".join(reversed(cycle)))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def axis(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise ScopeError(f"variable {name!r} is not declared in this network") from None

    def decl(self, name: str) -> VariableDecl:
        return self.variables[self.axis(name)]

    def cardinality(self, name: str) -> int:
        return self.decl(name).cardinality

    def topo_depth(self, name: str) -> int:
        return self.topo_order.index(name)


def _cpt_product(variables: tuple[VariableDecl, ...],
                 cpts: Mapping[str, Cpt]) -> np.ndarray:
    """Multiply all CPTs out to a dense table over ``variables``."""
    axis = {v.name: i for i, v in enumerate(variables)}
    ndim = len(variables)
    out = np.ones(tuple(v.cardinality for v in variables))
    for v in variables:
        cpt = cpts[v.name]
        axes = [axis[p] for p in cpt.parent_order] + [axis[v.name]]
        out *= _placed(cpt.table, axes, ndim)
    return out


def joint_from_network(net: NetworkSpec) -> JointTable:
    """Dense joint distribution of ``net``, axes in declaration order.

    The product of valid CPTs sums to one by construction, so this cannot
    fail on a constructed ``NetworkSpec``; cyclic graphs and non-normalized
    rows are rejected earlier, when the network object is built.
    """
    return JointTable(net.variables, _cpt_product(net.variables, net.cpts))


def marginalize(q: JointTable, target: Sequence[str]) -> JointTable:
    """Sum ``q`` down to ``target``, result axes in ``target`` order."""
    target = tuple(target)
    if not target:
        raise ScopeError("marginalization target must be non-empty")
    if len(set(target)) != len(target):
        raise ScopeError(f"marginalization target repeats a variable: {target}")
    names = q.names
    missing = [t for t in target if t not in names]
    if missing:
        raise ScopeError(f"variables {missing} are not in scope {names}")
    keep = [names.index(t) for t in target]
    drop = tuple(i for i in range(len(names)) if i not in set(keep))
    reduced = q.probs.sum(axis=drop) if drop else q.probs
    kept_sorted = sorted(keep)
    out = np.transpose(reduced, [kept_sorted.index(a) for a in keep])
    return JointTable(tuple(q.scope[a] for a in keep), out)


def _conditional(m: np.ndarray) -> np.ndarray:
    """Rows of ``m`` (last axis) normalized; zero-mass rows become uniform."""
    denom = m.sum(axis=-1, keepdims=True)
    safe = np.where(denom > 0.0, denom, 1.0)
    uniform = 1.0 / m.shape[-1]
    return np.where(denom > 0.0, m / safe, uniform)


def extract_cpt(q: JointTable, child: str, parents: Sequence[str]) -> Cpt:
    """Conditional table of ``child`` given ``parents`` read off ``q``.

    Parent configurations with zero marginal probability carry no
    information, so their rows are filled uniformly.
    """
    parents = tuple(parents)
    m = marginalize(q, parents + (child,))
    return Cpt(child, parents, _conditional(m.probs))


def _reextracted_product(q: JointTable, net: NetworkSpec) -> np.ndarray:
    """Product of the CPTs that ``net``'s DAG reads off ``q``.

    This is the closest distribution to ``q`` that factors over the DAG in
    the extraction sense; comparing it with ``q`` measures how far ``q`` is
    from respecting the structure.
    """
    if q.names != net.names:
        raise ScopeError(
            f"joint scope {q.names} does not match network variables {net.names}"
        )
    cpts = {
        v.name: extract_cpt(q, v.name, net.parents[v.name]) for v in net.variables
    }
    return _cpt_product(net.variables, cpts)


def is_structurally_consistent(q: JointTable, net: NetworkSpec,
                               tol: float = TAU_NORM) -> bool:
    """Whether ``q`` equals the product of its own extracted CPTs within ``tol``."""
    return bool(np.max(np.abs(q.probs - _reextracted_product(q, net))) <= tol)


def i_divergence(p: JointTable, q: JointTable) -> float:
    """I-divergence (Kullback-Leibler, natural log) of ``p`` from ``q``.

    Infinite when ``p`` puts mass where ``q`` has none; zero-probability
    cells of ``p`` contribute nothing.  Scopes must match exactly, order
    included.
    """
    if p.names != q.names or tuple(v.cardinality for v in p.scope) != tuple(
        v.cardinality for v in q.scope
    ):
        raise ScopeError(
            f"divergence needs identical scopes, got {p.names} and {q.names}"
        )
    mask = p.probs > 0.0
    if np.any(q.probs[mask] <= 0.0):
        return float("inf")
    terms = p.probs[mask] * np.log(p.probs[mask] / q.probs[mask])
    return float(terms.sum())


def validate_constraint(net: NetworkSpec, r: Constraint) -> None:
    """Check that ``r`` refers to declared variables with matching cardinalities."""
    for name, decl in zip(r.scope, r.dist.scope):
        if name not in net.names:
            raise ScopeError(f"constraint over {r.scope}: unknown variable {name!r}")
        if decl.cardinality != net.cardinality(name):
            raise ValidationError(
                f"constraint over {r.scope}: variable {name!r} has cardinality "
                f"{decl.cardinality}, network declares {net.cardinality(name)}"
            )


def constraint_residual(q: JointTable, r: Constraint) -> float:
    """Max-abs difference between ``q``'s marginal over ``r.scope`` and ``r``."""
    m = marginalize(q, r.scope)
    return float(np.max(np.abs(m.probs - r.dist.probs)))


def classify_scope(net: NetworkSpec, scope: Sequence[str]) -> LocalityClass:
    """Locality of a constraint scope against ``net``'s structure.

    The scope is local when some member variable's parent set covers all the
    others; that member becomes the update target.  If several members
    qualify the latest one in topological order is chosen, which keeps the
    choice deterministic.  Otherwise the scope is non-local and is described
    by its variable set ``y`` plus the outside parents ``s`` needed to close
    the member families.
    """
    scope = tuple(scope)
    members = set(scope)
    for name in scope:
        if name not in net.names:
            raise ScopeError(f"scope {scope}: unknown variable {name!r}")
    candidates = [
        v for v in scope if members - {v} <= set(net.parents[v])
    ]
    if candidates:
        target = max(candidates, key=net.topo_depth)
        others = tuple(sorted(members - {target}, key=net.axis))
        return Local(target, others)
    y = tuple(sorted(members, key=net.axis))
    outside: set[str] = set()
    for v in y:
        outside.update(p for p in net.parents[v] if p not in members)
    s = tuple(sorted(outside, key=net.axis))
    return NonLocal(y, s)


def classify_constraint(net: NetworkSpec, r: Constraint) -> LocalityClass:
    """Locality of ``r`` against ``net``; validates ``r`` first."""
    validate_constraint(net, r)
    return classify_scope(net, r.scope)
