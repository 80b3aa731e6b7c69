"""Local probability models and qualitative parameter synthesis.

Four local-distribution shapes are supported:

* ``Table`` — explicit CPT: one row per parent-state combination
  (row-major over the parents in their canonical, lexicographic order),
  each row a distribution over the child's states.
* ``NoisyOr`` — independent binary causes with optional inhibitors::

      P(child active | x) = (1 - (1 - leak) * prod_{i active} (1 - p_i))
                            * prod_{j active} (1 - q_j)

  where p_i are activation probabilities of active positive parents and
  q_j suppression probabilities of active negative parents. A parent is
  "active" when it sits in its designated active state.
* ``NoisyMax`` — graded generalization over totally ordered child states
  (index 0 most severe, last state none-like). Each active cause and the
  always-on leak independently produce a severity drawn from their
  activation table; the child takes the most severe one. Equivalently,
  with D(s) = P(severity index >= s)::

      P(child index >= s | x) = D_leak(s) * prod_{i active} D_i(s)

  The ranking is an importance order over parents, used by node-merge
  labeling semantics.
* ``Gate`` — deterministic OR/AND of parent activations, softened by a
  leak probability when the gate condition fails.

``synthesize`` turns a qualitatively annotated model (arc influence kinds
plus strength levels) into a fully parameterised one. The result
illustrates intended directional behaviour only; it makes no claim to
quantitative validity.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence, Union

from .core import CausalModel, Node, Strength, topological_order
from .diagnostics import SEVERITY_INFO, Diagnostic
from .errors import (
    InvalidArgument,
    UnderspecifiedNode,
    UnsupportedInfluence,
)

ROW_TOLERANCE = 1e-9

GATE_KINDS = ("or", "and")


def _check_probability(value, what: str) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise InvalidArgument(f"{what} must lie in [0, 1], got {value!r}")
    return value


def _check_row(row, what: str) -> tuple:
    row = tuple(_check_probability(v, what) for v in row)
    if abs(sum(row) - 1.0) > ROW_TOLERANCE:
        raise InvalidArgument(f"{what} must sum to 1, got {sum(row)!r}")
    return row


@dataclass(frozen=True)
class Table:
    """Explicit CPT. ``rows[i]`` is the child distribution for the i-th
    parent-state combination (row-major in ``parents`` order)."""

    parents: tuple
    rows: tuple

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(self.parents))
        rows = tuple(_check_row(r, "CPT row") for r in self.rows)
        if not rows:
            raise InvalidArgument("a table needs at least one row")
        width = len(rows[0])
        if width < 2 or any(len(r) != width for r in rows):
            raise InvalidArgument("CPT rows must share one width >= 2")
        object.__setattr__(self, "rows", rows)


@dataclass(frozen=True)
class NoisyOr:
    pos: Mapping
    neg: Mapping
    leak: float = 0.0

    def __post_init__(self):
        pos = {p: _check_probability(v, f"activation for {p!r}") for p, v in dict(self.pos).items()}
        neg = {p: _check_probability(v, f"inhibition for {p!r}") for p, v in dict(self.neg).items()}
        if set(pos) & set(neg):
            raise InvalidArgument("a parent cannot be both positive and negative")
        if not pos and not neg:
            raise InvalidArgument("noisy-or needs at least one parent")
        object.__setattr__(self, "pos", pos)
        object.__setattr__(self, "neg", neg)
        object.__setattr__(self, "leak", _check_probability(self.leak, "leak"))

    @property
    def parents(self) -> tuple:
        return tuple(sorted(set(self.pos) | set(self.neg)))


@dataclass(frozen=True)
class NoisyMax:
    tables: Mapping  # parent -> activation distribution over child states
    ranking: tuple  # importance order, a permutation of the parents
    leak: tuple  # leak distribution over child states

    def __post_init__(self):
        leak = _check_row(self.leak, "leak distribution")
        if len(leak) < 2:
            raise InvalidArgument("noisy-max needs at least 2 child states")
        tables = {}
        for parent, dist in dict(self.tables).items():
            dist = _check_row(dist, f"activation table for {parent!r}")
            if len(dist) != len(leak):
                raise InvalidArgument(
                    f"activation table for {parent!r} must match the child arity"
                )
            tables[parent] = dist
        if not tables:
            raise InvalidArgument("noisy-max needs at least one parent")
        ranking = tuple(self.ranking)
        if sorted(ranking) != sorted(tables):
            raise InvalidArgument("ranking must be a permutation of the parents")
        object.__setattr__(self, "tables", tables)
        object.__setattr__(self, "ranking", ranking)
        object.__setattr__(self, "leak", leak)

    @property
    def parents(self) -> tuple:
        return tuple(sorted(self.tables))


@dataclass(frozen=True)
class Gate:
    kind: str
    parents: tuple = ()
    leak: float = 0.0

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise InvalidArgument(f"gate kind must be or/and, got {self.kind!r}")
        parents = tuple(sorted(self.parents))
        if not parents:
            raise InvalidArgument("a gate needs at least one parent")
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "leak", _check_probability(self.leak, "leak"))


LocalDistribution = Union[Table, NoisyOr, NoisyMax, Gate]


@dataclass(frozen=True)
class StrengthScale:
    """Numeric realization of the qualitative strength levels.

    The level values, the prior for parentless nodes, and the default
    leak are all design knobs; the defaults give stark behaviour that is
    easy to sense-check.
    """

    very_weak: float = 0.05
    weak: float = 0.2
    moderate: float = 0.5
    strong: float = 0.8
    very_strong: float = 0.95
    root_prior: float = 0.5
    default_leak: float = 0.0

    def __post_init__(self):
        for name in (
            "very_weak", "weak", "moderate", "strong", "very_strong",
            "root_prior", "default_leak",
        ):
            _check_probability(getattr(self, name), name)

    def value(self, strength: Optional[Strength]) -> float:
        if strength is None:
            return self.moderate
        if strength.level == "explicit":
            return strength.value
        return getattr(self, strength.level)


DEFAULT_SCALE = StrengthScale()


# -- CPT builders --------------------------------------------------------


def _auto_names(count: int, prefix: str = "x") -> tuple:
    return tuple(f"{prefix}{i}" for i in range(count))


def build_noisy_or_cpt(
    pos: Sequence, neg: Sequence = (), leak: float = 0.0, parents=None
) -> Table:
    """Expand the noisy-or formula into an explicit binary CPT.

    Parents are the positive causes followed by the negative ones, in
    the given order; every parent is binary with state 0 = active. Rows
    are (P(active), P(inactive)) for each of the 2**n combinations.
    """
    pos = [_check_probability(p, "activation probability") for p in pos]
    neg = [_check_probability(q, "inhibition probability") for q in neg]
    leak = _check_probability(leak, "leak")
    n = len(pos) + len(neg)
    if parents is None:
        parents = _auto_names(n)
    parents = tuple(parents)
    if len(parents) != n:
        raise InvalidArgument("parent names must match the probability lists")
    rows = []
    for config in itertools.product((0, 1), repeat=n):
        p = _noisy_or_active(
            [pos[i] for i in range(len(pos)) if config[i] == 0],
            [neg[j] for j in range(len(neg)) if config[len(pos) + j] == 0],
            leak,
        )
        rows.append((p, 1.0 - p))
    return Table(parents, tuple(rows))


def _noisy_or_active(active_pos, active_neg, leak, enabled=True) -> float:
    escape = 1.0 - leak
    if enabled:
        for p in active_pos:
            escape *= 1.0 - p
    p = 1.0 - escape
    for q in active_neg:
        p *= 1.0 - q
    return p


def build_noisy_max_cpt(tables, ranking, leak, parents=None) -> Table:
    """Expand the graded-max formula into an explicit CPT.

    ``tables`` maps each parent to its activation distribution over the
    ordered child states; ``leak`` is the always-on cause's distribution.
    Parents are binary with state 0 = active, enumerated in ``tables``
    order (or ``parents`` when given).
    """
    dist = NoisyMax(tables=tables, ranking=ranking, leak=leak)
    if parents is None:
        parents = tuple(dict(tables))
    parents = tuple(parents)
    if sorted(parents) != sorted(dist.tables):
        raise InvalidArgument("parent names must match the activation tables")
    k = len(dist.leak)
    rows = []
    for config in itertools.product((0, 1), repeat=len(parents)):
        active = [parents[i] for i in range(len(parents)) if config[i] == 0]
        rows.append(_max_row(dist, active, k))
    return Table(parents, tuple(rows))


def _upper_tail(dist: Sequence, s: int) -> float:
    # P(state index >= s): toward the none-like end of the order
    return sum(dist[s:])


def _max_row(dist: NoisyMax, active, k: int) -> tuple:
    return _max_row_from(dist.leak, dist.tables, active, k)


def _max_row_from(leak_dist, tables, active, k: int) -> tuple:
    tails = []
    for s in range(k + 1):
        if s == 0:
            tails.append(1.0)
            continue
        if s == k:
            tails.append(0.0)
            continue
        t = _upper_tail(leak_dist, s)
        for parent in active:
            t *= _upper_tail(tables[parent], s)
        tails.append(t)
    row = [tails[s] - tails[s + 1] for s in range(k)]
    total = sum(row)
    if abs(total - 1.0) > ROW_TOLERANCE:  # guard against float drift
        row = [v / total for v in row]
    return tuple(row)


def build_gate_cpt(kind: str, arity: int, leak: float = 0.0, parents=None) -> Table:
    """Deterministic OR/AND over binary parents, with a leak floor."""
    if arity < 1:
        raise InvalidArgument("a gate needs arity >= 1")
    if parents is None:
        parents = _auto_names(arity)
    gate = Gate(kind=kind, parents=parents, leak=leak)
    rows = []
    for config in itertools.product((0, 1), repeat=arity):
        actives = [c == 0 for c in config]
        fired = any(actives) if gate.kind == "or" else all(actives)
        p = 1.0 if fired else gate.leak
        rows.append((p, 1.0 - p))
    return Table(tuple(parents), tuple(rows))


# -- expansion to explicit tables -----------------------------------------


def expand_distribution(model: CausalModel, node_id: str) -> Table:
    """The node's local distribution as an explicit CPT over its graph
    parents in canonical (lexicographic) order."""
    if node_id not in model.distributions:
        raise InvalidArgument(f"node {node_id!r} has no distribution")
    dist = model.distributions[node_id]
    node = model.nodes[node_id]
    parents = model.parents(node_id)
    parent_nodes = [model.nodes[p] for p in parents]
    cards = [len(p.states) for p in parent_nodes]
    k = len(node.states)

    if isinstance(dist, Table):
        expected = 1
        for c in cards:
            expected *= c
        if len(dist.rows) != expected or len(dist.rows[0]) != k:
            raise InvalidArgument(
                f"table for {node_id!r} has shape {len(dist.rows)}x{len(dist.rows[0])}, "
                f"expected {expected}x{k}"
            )
        return dist

    rows = []
    if isinstance(dist, (NoisyOr, Gate)):
        if k != 2:
            raise InvalidArgument(
                f"{type(dist).__name__} on {node_id!r} needs a binary child"
            )
        for config in itertools.product(*[range(c) for c in cards]):
            active = {
                parents[i]
                for i in range(len(parents))
                if config[i] == parent_nodes[i].active_state
            }
            if isinstance(dist, Gate):
                fired = (
                    bool(active) if dist.kind == "or" else active == set(parents)
                )
                p = 1.0 if fired else dist.leak
            else:
                p = _noisy_or_active(
                    [dist.pos[x] for x in sorted(dist.pos) if x in active],
                    [dist.neg[x] for x in sorted(dist.neg) if x in active],
                    dist.leak,
                )
            row = [0.0, 0.0]
            row[node.active_state] = p
            row[1 - node.active_state] = 1.0 - p
            rows.append(tuple(row))
        return Table(parents, tuple(rows))

    if isinstance(dist, NoisyMax):
        if len(dist.leak) != k:
            raise InvalidArgument(
                f"noisy-max for {node_id!r} has arity {len(dist.leak)}, child has {k}"
            )
        for config in itertools.product(*[range(c) for c in cards]):
            active = [
                parents[i]
                for i in range(len(parents))
                if config[i] == parent_nodes[i].active_state
            ]
            rows.append(_max_row(dist, active, k))
        return Table(parents, tuple(rows))

    raise InvalidArgument(f"unknown distribution type for {node_id!r}: {dist!r}")


# -- qualitative synthesis -------------------------------------------------


@dataclass(frozen=True)
class SynthesisResult:
    model: CausalModel
    notes: tuple  # Diagnostic, severity info


def _prior_row(node: Node, prior: float) -> tuple:
    k = len(node.states)
    rest = (1.0 - prior) / (k - 1)
    return tuple(prior if i == node.active_state else rest for i in range(k))


def _gated_binary_table(model, node, parents, pos, neg, enablers, leak) -> Table:
    parent_nodes = [model.nodes[p] for p in parents]
    rows = []
    for config in itertools.product(*[range(len(p.states)) for p in parent_nodes]):
        active = {
            parents[i]
            for i in range(len(parents))
            if config[i] == parent_nodes[i].active_state
        }
        enabled = all(e in active for e in enablers)
        p = _noisy_or_active(
            [pos[x] for x in sorted(pos) if x in active],
            [neg[x] for x in sorted(neg) if x in active],
            leak,
            enabled=enabled,
        )
        row = [0.0, 0.0]
        row[node.active_state] = p
        row[1 - node.active_state] = 1.0 - p
        rows.append(tuple(row))
    return Table(tuple(parents), tuple(rows))


def _graded_table(model, node, parents, pos, neg, enablers, leak) -> Table:
    """Graded-max over positive causes with suppression-to-none inhibitors
    and indicator-gated enabling, for ordered multi-state children."""
    k = len(node.states)
    leak_dist = _severity_split(leak, k)
    tables = {p: _severity_split(v, k) for p, v in pos.items()}
    parent_nodes = [model.nodes[p] for p in parents]
    rows = []
    for config in itertools.product(*[range(len(p.states)) for p in parent_nodes]):
        active = {
            parents[i]
            for i in range(len(parents))
            if config[i] == parent_nodes[i].active_state
        }
        enabled = all(e in active for e in enablers)
        contributing = [p for p in sorted(tables) if p in active] if enabled else []
        row = list(_max_row_from(leak_dist, tables, contributing, k))
        survival = 1.0
        for q_parent, q in sorted(neg.items()):
            if q_parent in active:
                survival *= 1.0 - q
        row = [v * survival for v in row[:-1]] + [0.0]
        row[-1] = max(0.0, 1.0 - sum(row[:-1]))
        rows.append(tuple(row))
    return Table(tuple(parents), tuple(rows))


def _severity_split(p: float, k: int) -> tuple:
    # scaled strength on the most severe state, remainder on "none"
    return tuple([p] + [0.0] * (k - 2) + [1.0 - p])


def synthesize(model: CausalModel, scale: StrengthScale = DEFAULT_SCALE) -> SynthesisResult:
    """Fill in a local distribution for every node that lacks one.

    Roots get their prior; binary children of positive/negative arcs get
    a NoisyOr; ordered multi-state children of positive arcs get a
    NoisyMax (ranking: descending strength, then id); enabling arcs and
    inhibited multi-state children expand to explicit tables. Existing
    distributions are preserved untouched, so synthesis is idempotent.

    Arcs without a strength are assumed moderate and noted (I101).
    Other-influence arcs have no default functional form: the node must
    already carry an explicit distribution.
    """
    notes = []
    dists = dict(model.distributions)
    for nid in topological_order(model):
        if nid in dists:
            continue
        node = model.nodes[nid]
        parents = model.parents(nid)
        if not parents:
            dists[nid] = Table((), (_prior_row(node, scale.root_prior),))
            continue
        pos, neg, enablers = {}, {}, []
        for pid in parents:
            arc = model.arcs[(pid, nid)]
            kind = arc.influence.kind
            if kind == "other":
                raise UnsupportedInfluence(
                    f"arc {pid} -> {nid} has influence other({arc.influence.label!r}); "
                    "give the node an explicit cpd"
                )
            if kind == "enabling":
                enablers.append(pid)
                continue
            if arc.strength is None:
                notes.append(
                    Diagnostic(
                        "I101",
                        SEVERITY_INFO,
                        f"arc {pid} -> {nid} has no strength; assuming moderate "
                        f"({scale.moderate})",
                    )
                )
                value = scale.moderate
            else:
                value = scale.value(arc.strength)
            (pos if kind == "positive" else neg)[pid] = value
        binary = len(node.states) == 2
        if binary:
            if enablers:
                dists[nid] = _gated_binary_table(
                    model, node, parents, pos, neg, enablers, scale.default_leak
                )
            else:
                dists[nid] = NoisyOr(pos=pos, neg=neg, leak=scale.default_leak)
        else:
            if not node.ordered or node.active_state != 0:
                raise UnderspecifiedNode(
                    f"multi-state node {nid!r} needs ordered states (most severe "
                    "first) or an explicit cpd"
                )
            if enablers or neg:
                dists[nid] = _graded_table(
                    model, node, parents, pos, neg, enablers, scale.default_leak
                )
            else:
                ranking = tuple(
                    sorted(pos, key=lambda p: (-pos[p], p))
                )
                dists[nid] = NoisyMax(
                    tables={p: _severity_split(v, len(node.states)) for p, v in pos.items()},
                    ranking=ranking,
                    leak=_severity_split(scale.default_leak, len(node.states)),
                )
    return SynthesisResult(replace(model, distributions=dists), tuple(notes))
