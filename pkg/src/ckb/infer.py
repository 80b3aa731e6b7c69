"""Exact inference and structural independence queries.

Two inference routes are provided on purpose: ``enumerate_joint``
multiplies every local distribution into the full joint (the slow,
obviously-correct oracle, guarded to 2**20 cells), and
``eliminate_variables`` answers the same queries by variable elimination
with a deterministic min-degree ordering. ``d_separated`` is the purely
graphical independence test, ``markov_blanket`` the usual
parents/children/co-parents set, and ``monotonicity_audit`` ties the
qualitative arc annotations back to the quantitative tables: a positive
arc must never lower the chance of its effect being active, context by
context.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import CausalModel
from .errors import (
    InconsistentEvidence,
    InvalidArgument,
    NotFound,
    TooLarge,
    Unparameterised,
)
from .param import expand_distribution

JOINT_CELL_LIMIT = 2 ** 20
MONOTONICITY_TOLERANCE = 1e-12
AUDIT_SAMPLE_SEED = 42
AUDIT_SAMPLE_CONTEXTS = 1024


def _require_parameterised(model: CausalModel):
    missing = sorted(set(model.nodes) - set(model.distributions))
    if missing:
        raise Unparameterised(
            f"model {model.id!r} lacks distributions for: {', '.join(missing)}"
        )


def _check_known(model: CausalModel, node_ids) -> None:
    for nid in node_ids:
        if nid not in model.nodes:
            raise NotFound(f"no node {nid!r} in {model.id!r}")


def _check_evidence(model: CausalModel, evidence: Mapping) -> dict:
    out = {}
    for nid, state in dict(evidence).items():
        if nid not in model.nodes:
            raise NotFound(f"evidence names unknown node {nid!r}")
        state = int(state)
        if not 0 <= state < len(model.nodes[nid].states):
            raise InvalidArgument(f"evidence state {state} out of range for {nid!r}")
        out[nid] = state
    return out


@dataclass(frozen=True, eq=False)
class JointTable:
    """Full joint distribution; axes follow ``nodes`` (sorted node ids)."""

    nodes: tuple
    cards: tuple
    probs: np.ndarray

    def marginal(self, keep: Sequence) -> np.ndarray:
        """Marginal over ``keep`` (result axes in the given order)."""
        keep = list(keep)
        drop = tuple(i for i, nid in enumerate(self.nodes) if nid not in set(keep))
        reduced = self.probs.sum(axis=drop) if drop else self.probs
        remaining = [nid for nid in self.nodes if nid in set(keep)]
        order = [remaining.index(nid) for nid in keep]
        return np.transpose(reduced, order)


def _embed(values: np.ndarray, axes: Sequence, n_axes: int, cards: Sequence) -> np.ndarray:
    """Broadcast a factor (axes = global axis indices, any order) to the
    full joint shape."""
    order = np.argsort(axes)
    arr = np.transpose(values, order)
    shape = [1] * n_axes
    for axis in sorted(axes):
        shape[axis] = cards[axis]
    return arr.reshape(shape)


def enumerate_joint(model: CausalModel) -> JointTable:
    """Exact joint by multiplying the local tables in one pass."""
    _require_parameterised(model)
    nodes = tuple(sorted(model.nodes))
    cards = tuple(len(model.nodes[nid].states) for nid in nodes)
    size = 1
    for c in cards:
        size *= c
        if size > JOINT_CELL_LIMIT:
            raise TooLarge(
                f"joint over {len(nodes)} nodes exceeds {JOINT_CELL_LIMIT} cells"
            )
    index = {nid: i for i, nid in enumerate(nodes)}
    joint = np.ones(cards if cards else (1,))
    for nid in nodes:
        table = expand_distribution(model, nid)
        parent_cards = tuple(len(model.nodes[p].states) for p in table.parents)
        child_card = len(model.nodes[nid].states)
        values = np.asarray(table.rows).reshape(parent_cards + (child_card,))
        axes = [index[p] for p in table.parents] + [index[nid]]
        joint = joint * _embed(values, axes, len(nodes), cards)
    return JointTable(nodes, cards, joint)


# -- variable elimination -------------------------------------------------


@dataclass
class _Factor:
    vars: tuple
    values: np.ndarray


def _factor_multiply(a: _Factor, b: _Factor) -> _Factor:
    merged = tuple(sorted(set(a.vars) | set(b.vars)))
    pos = {v: i for i, v in enumerate(merged)}

    def align(f: _Factor) -> np.ndarray:
        order = np.argsort([pos[v] for v in f.vars])
        arr = np.transpose(f.values, order)
        shape = [1] * len(merged)
        for v, size in zip(f.vars, f.values.shape):
            shape[pos[v]] = size
        return arr.reshape(shape)

    return _Factor(merged, align(a) * align(b))


def _factor_sum_out(f: _Factor, var: str) -> _Factor:
    axis = f.vars.index(var)
    keep = tuple(v for v in f.vars if v != var)
    return _Factor(keep, f.values.sum(axis=axis))


def _elimination_order(scopes, eliminate: set) -> list:
    """Min-degree order over the factor interaction graph; ties break
    lexicographically so runs are reproducible."""
    neighbors = {v: set() for scope in scopes for v in scope}
    for scope in scopes:
        for v in scope:
            neighbors[v].update(w for w in scope if w != v)
    order = []
    remaining = set(v for v in neighbors if v in eliminate)
    while remaining:
        best = min(remaining, key=lambda v: (len(neighbors[v] & set(neighbors)), v))
        order.append(best)
        nbrs = neighbors.pop(best)
        nbrs = {v for v in nbrs if v in neighbors}
        for v in nbrs:
            neighbors[v].discard(best)
            neighbors[v].update(w for w in nbrs if w != v)
        remaining.discard(best)
    return order


def eliminate_variables(
    model: CausalModel, query: Sequence, evidence: Optional[Mapping] = None
) -> dict:
    """Posterior marginal of each query node given the evidence.

    Matches ``enumerate_joint`` marginalization to within numerical
    noise, without ever materializing the joint.
    """
    _require_parameterised(model)
    query = list(dict.fromkeys(query))
    if not query:
        raise InvalidArgument("query must name at least one node")
    _check_known(model, query)
    evidence = _check_evidence(model, evidence or {})

    factors = []
    for nid in sorted(model.nodes):
        table = expand_distribution(model, nid)
        parent_cards = tuple(len(model.nodes[p].states) for p in table.parents)
        child_card = len(model.nodes[nid].states)
        values = np.asarray(table.rows).reshape(parent_cards + (child_card,))
        factor = _Factor(table.parents + (nid,), values)
        for var in factor.vars:
            if var in evidence:
                axis = factor.vars.index(var)
                factor = _Factor(
                    tuple(v for v in factor.vars if v != var),
                    np.take(factor.values, evidence[var], axis=axis),
                )
        factors.append(factor)

    keep = set(q for q in query if q not in evidence)
    eliminate = set()
    for f in factors:
        eliminate.update(f.vars)
    eliminate -= keep
    for var in _elimination_order([f.vars for f in factors], eliminate):
        bucket = [f for f in factors if var in f.vars]
        rest = [f for f in factors if var not in f.vars]
        if not bucket:
            continue
        product = bucket[0]
        for f in bucket[1:]:
            product = _factor_multiply(product, f)
        rest.append(_factor_sum_out(product, var))
        factors = rest

    result = _Factor((), np.array(1.0))
    for f in factors:
        result = _factor_multiply(result, f)
    z = float(result.values.sum())
    if z == 0.0:
        raise InconsistentEvidence("evidence has zero probability")
    joint = result.values / z

    posterior = {}
    for nid in query:
        if nid in evidence:
            dist = np.zeros(len(model.nodes[nid].states))
            dist[evidence[nid]] = 1.0
        elif result.vars:
            axes = tuple(i for i, v in enumerate(result.vars) if v != nid)
            dist = joint.sum(axis=axes) if axes else joint
        else:
            dist = np.array([1.0])
        posterior[nid] = tuple(float(v) for v in np.atleast_1d(dist))
    return posterior


# -- structural queries ----------------------------------------------------


@dataclass(frozen=True)
class DSeparation:
    separated: bool
    witness: Optional[tuple] = None  # one active trail when not separated

    def __bool__(self):
        return self.separated


def d_separated(model: CausalModel, x, y, z=()) -> DSeparation:
    """Graphical conditional-independence test (structure only).

    Returns the verdict plus, when the sets are connected, one active
    trail from an X node to a Y node as a witness.
    """
    x, y, z = set(x), set(y), set(z)
    _check_known(model, x | y | z)
    if (x & y) or (x & z) or (y & z):
        raise InvalidArgument("x, y and z must be disjoint")

    parents = {nid: model.parents(nid) for nid in model.nodes}
    children = {nid: model.children(nid) for nid in model.nodes}

    # ancestors of z (inclusive): colliders open only below these
    in_or_above_z = set(z)
    queue = deque(sorted(z))
    while queue:
        nid = queue.popleft()
        for p in parents[nid]:
            if p not in in_or_above_z:
                in_or_above_z.add(p)
                queue.append(p)

    # trail search over (node, how-we-arrived) states
    start = [(nid, "from_child") for nid in sorted(x)]
    seen = set(start)
    back: dict = {state: None for state in start}
    queue = deque(start)
    while queue:
        state = queue.popleft()
        nid, direction = state
        if nid in y:
            trail = []
            cursor = state
            while cursor is not None:
                trail.append(cursor[0])
                cursor = back[cursor]
            return DSeparation(False, tuple(reversed(trail)))
        moves = []
        if direction == "from_child":
            # arrived against the arrow (or started here): blocked only if observed
            if nid not in z:
                moves += [(p, "from_child") for p in parents[nid]]
                moves += [(c, "from_parent") for c in children[nid]]
        else:
            # arrived along the arrow: collider opens only at/above z
            if nid not in z:
                moves += [(c, "from_parent") for c in children[nid]]
            if nid in in_or_above_z:
                moves += [(p, "from_child") for p in parents[nid]]
        for move in moves:
            if move not in seen and move[0] not in x:
                seen.add(move)
                back[move] = state
                queue.append(move)
    return DSeparation(True, None)


def markov_blanket(model: CausalModel, node_id: str) -> tuple:
    """Parents, children and the children's other parents, sorted."""
    if node_id not in model.nodes:
        raise NotFound(f"no node {node_id!r} in {model.id!r}")
    blanket = set(model.parents(node_id)) | set(model.children(node_id))
    for child in model.children(node_id):
        blanket.update(model.parents(child))
    blanket.discard(node_id)
    return tuple(sorted(blanket))


# -- monotonicity audit -----------------------------------------------------


@dataclass(frozen=True)
class MonotonicityViolation:
    arc: tuple  # (source, target)
    context: tuple  # ((other parent, state index), ...)
    parent_state: int  # the non-active source state compared against
    p_given_active: float
    p_given_inactive: float


@dataclass(frozen=True)
class AuditReport:
    violations: tuple
    unaudited: tuple  # ((source, target), reason) pairs

    @property
    def ok(self) -> bool:
        return not self.violations


def monotonicity_audit(
    model: CausalModel, max_exhaustive_parents: int = 12
) -> AuditReport:
    """Check every positive/negative arc against its child's table.

    For a positive arc u -> v the chance of v being active must not drop
    when u turns active, for every fixed configuration of v's other
    parents (negative arcs reverse the inequality; 1e-12 slack for float
    noise). Contexts are exhaustive up to ``max_exhaustive_parents``
    other parents, beyond that 1024 pseudorandom contexts drawn with
    numpy's default_rng(42). Enabling/other arcs are reported unaudited.
    """
    _require_parameterised(model)
    violations = []
    unaudited = []
    for (src, dst) in sorted(model.arcs):
        arc = model.arcs[(src, dst)]
        kind = arc.influence.kind
        if kind not in ("positive", "negative"):
            unaudited.append(((src, dst), f"{kind} influence is not audited"))
            continue
        child = model.nodes[dst]
        parents = model.parents(dst)
        table = expand_distribution(model, dst)
        u_index = parents.index(src)
        others = [p for p in parents if p != src]
        other_cards = [len(model.nodes[p].states) for p in others]
        strides = _row_strides(parents, [len(model.nodes[p].states) for p in parents])
        contexts = _audit_contexts(other_cards, max_exhaustive_parents)
        u_active = model.nodes[src].active_state
        u_card = len(model.nodes[src].states)
        for context in contexts:
            base = 0
            for p, state in zip(others, context):
                base += strides[parents.index(p)] * state
            p_active = table.rows[base + strides[u_index] * u_active][child.active_state]
            for state in range(u_card):
                if state == u_active:
                    continue
                p_inactive = table.rows[base + strides[u_index] * state][child.active_state]
                delta = p_active - p_inactive
                bad = (
                    delta < -MONOTONICITY_TOLERANCE
                    if kind == "positive"
                    else delta > MONOTONICITY_TOLERANCE
                )
                if bad:
                    violations.append(
                        MonotonicityViolation(
                            arc=(src, dst),
                            context=tuple(zip(others, context)),
                            parent_state=state,
                            p_given_active=p_active,
                            p_given_inactive=p_inactive,
                        )
                    )
    return AuditReport(tuple(violations), tuple(unaudited))


def _row_strides(parents, cards) -> list:
    strides = [1] * len(parents)
    for i in range(len(parents) - 2, -1, -1):
        strides[i] = strides[i + 1] * cards[i + 1]
    return strides


def _audit_contexts(other_cards, max_exhaustive: int):
    if len(other_cards) <= max_exhaustive:
        return list(itertools.product(*[range(c) for c in other_cards]))
    rng = np.random.default_rng(AUDIT_SAMPLE_SEED)
    draws = rng.integers(0, other_cards, size=(AUDIT_SAMPLE_CONTEXTS, len(other_cards)))
    return [tuple(int(v) for v in row) for row in draws]
