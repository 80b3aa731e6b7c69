"""Domain model for causal knowledge bases.

A knowledge base is a hierarchy of small causal directed-acyclic-graph
models: every node is (preferably) a Boolean proposition, every arc an
annotated causal influence, and every element can carry a dictionary
entry tracing it back to sources. This module holds the value types and
the fundamental graph operations.

All types are immutable after construction and every operation is a pure
function returning a new value, so models can be shared freely across
threads. Orderings are deterministic everywhere: ties break
lexicographically on node ids.
"""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Union

from .errors import (
    CycleError,
    DanglingReference,
    DuplicateNode,
    InvalidArgument,
    NotFound,
)

_ID_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

BOOLEAN_STATES = ("true", "false")

STATUS_INCOMPLETE_DRAFT = "incomplete_draft"
STATUS_DRAFT = "draft"
STATUS_MULTIPLE_DRAFT_VERSIONS = "multiple_draft_versions"
STATUS_EXPERT_VALIDATED = "expert_validated"
STATUS_PUBLISHED = "published"
STATUSES = (
    STATUS_INCOMPLETE_DRAFT,
    STATUS_DRAFT,
    STATUS_MULTIPLE_DRAFT_VERSIONS,
    STATUS_EXPERT_VALIDATED,
    STATUS_PUBLISHED,
)

INFLUENCE_KINDS = ("positive", "negative", "enabling", "other")

STRENGTH_LEVELS = ("very_weak", "weak", "moderate", "strong", "very_strong")

ENTRY_STATUSES = ("stub", "drafted", "reviewed")

KNOWLEDGE_TYPES = ("direct", "transferable", "inferable")
SOURCE_KINDS = ("model", "literature", "expert", "data", "inferred")


def check_node_id(value: str) -> str:
    if not isinstance(value, str) or not _ID_RE.match(value):
        raise InvalidArgument(
            f"invalid node id {value!r}: need a non-empty ASCII identifier"
        )
    return value


def arc_key(source: str, target: str) -> str:
    """Canonical dictionary key for an arc."""
    return f"{source}->{target}"


@dataclass(frozen=True)
class Influence:
    """Qualitative kind of a causal influence.

    The default reading of an arc is positive: when the cause is true the
    effect becomes more probable. ``negative`` means the cause makes the
    effect less probable, ``enabling`` means it lets other causes operate,
    and ``other`` carries a free-text label that is stored verbatim and
    never interpreted.
    """

    kind: str
    label: str = ""

    def __post_init__(self):
        if self.kind not in INFLUENCE_KINDS:
            raise InvalidArgument(f"unknown influence kind {self.kind!r}")
        if self.kind == "other" and not self.label:
            raise InvalidArgument("other-influence requires a non-empty label")
        if self.kind != "other" and self.label:
            raise InvalidArgument(f"{self.kind} influence cannot carry a label")


POSITIVE = Influence("positive")
NEGATIVE = Influence("negative")
ENABLING = Influence("enabling")


def other_influence(label: str) -> Influence:
    return Influence("other", label)


@dataclass(frozen=True)
class Strength:
    """Qualitative strength level, or an explicit probability."""

    level: str
    value: Optional[float] = None

    def __post_init__(self):
        if self.level == "explicit":
            if self.value is None or not 0.0 <= self.value <= 1.0:
                raise InvalidArgument("explicit strength needs a value in [0, 1]")
        elif self.level in STRENGTH_LEVELS:
            if self.value is not None:
                raise InvalidArgument("level strengths carry no explicit value")
        else:
            raise InvalidArgument(f"unknown strength level {self.level!r}")


def explicit_strength(value: float) -> Strength:
    return Strength("explicit", float(value))


@dataclass(frozen=True)
class Node:
    """A variable of a model.

    Identity is the id; the title is display-only and is where the
    Boolean-proposition phrasing lives. ``active_state`` designates which
    state counts as "present/true" for activation semantics; ``ordered``
    marks a multi-state space as totally ordered from most severe
    (index 0) down to a terminal none-like state.
    """

    id: str
    title: str = ""
    states: tuple = BOOLEAN_STATES
    active_state: int = 0
    category: str = ""
    boolean_note: str = ""
    dictionary_key: str = ""
    ordered: bool = False

    def __post_init__(self):
        check_node_id(self.id)
        states = tuple(str(s) for s in self.states)
        object.__setattr__(self, "states", states)
        if len(states) < 2 or len(set(states)) != len(states):
            raise InvalidArgument(
                f"node {self.id!r} needs at least 2 distinct states, got {states!r}"
            )
        if not 0 <= self.active_state < len(states):
            raise InvalidArgument(
                f"node {self.id!r}: active_state {self.active_state} out of range"
            )

    @property
    def display_title(self) -> str:
        return self.title or self.id


@dataclass(frozen=True)
class ReverseNote:
    """Note that causal flow in the opposite direction also matters."""

    significant: bool = True
    text: str = ""


@dataclass(frozen=True)
class Arc:
    source: str
    target: str
    influence: Influence = POSITIVE
    strength: Optional[Strength] = None
    significant: bool = True
    reverse: Optional[ReverseNote] = None
    note: str = ""
    provenance: tuple = ()  # claim reference strings

    def __post_init__(self):
        check_node_id(self.source)
        check_node_id(self.target)
        if self.source == self.target:
            raise InvalidArgument(f"self-arc {self.source!r} -> {self.target!r}")
        object.__setattr__(self, "provenance", tuple(self.provenance))

    @property
    def key(self):
        return (self.source, self.target)


@dataclass(frozen=True)
class Reference:
    """Literature reference anchored by a short verbatim quote."""

    citation_key: str
    quote_anchor: str
    note: str = ""

    def __post_init__(self):
        if not self.citation_key:
            raise InvalidArgument("reference needs a citation key")
        if not self.quote_anchor.strip():
            raise InvalidArgument("reference needs a non-empty quote anchor")


@dataclass(frozen=True)
class DictionaryEntry:
    definition: str = ""
    references: tuple = ()
    status: str = "stub"

    def __post_init__(self):
        object.__setattr__(self, "references", tuple(self.references))
        if self.status not in ENTRY_STATUSES:
            raise InvalidArgument(f"unknown dictionary status {self.status!r}")
        if self.status != "stub" and not self.definition.strip():
            raise InvalidArgument(
                f"dictionary entry with status {self.status!r} needs a definition"
            )


@dataclass(frozen=True)
class Citation:
    citation_key: str
    quote_anchor: str = ""

    def __post_init__(self):
        if not self.citation_key:
            raise InvalidArgument("citation needs a citation key")


@dataclass(frozen=True)
class Claim:
    """One recorded causal claim with its provenance.

    Knowledge is either specific to the problem (direct), transported from
    a neighbouring domain (transferable), or derived by inference
    (inferable); inferable claims must come from the inferred source and
    vice versa. Literature-sourced claims must carry a citation.
    """

    cause: str
    effect: str
    influence: Influence = POSITIVE
    knowledge_type: str = "direct"
    source_kind: str = "expert"
    source_detail: str = ""
    citation: Optional[Citation] = None

    def __post_init__(self):
        if not self.cause or not self.effect:
            raise InvalidArgument("claim needs both a cause and an effect")
        if self.knowledge_type not in KNOWLEDGE_TYPES:
            raise InvalidArgument(f"unknown knowledge type {self.knowledge_type!r}")
        if self.source_kind not in SOURCE_KINDS:
            raise InvalidArgument(f"unknown claim source {self.source_kind!r}")
        if (self.knowledge_type == "inferable") != (self.source_kind == "inferred"):
            raise InvalidArgument(
                "inferable knowledge and the inferred source imply each other"
            )
        if self.source_kind == "literature" and self.citation is None:
            raise InvalidArgument("literature-sourced claims need a citation")


@dataclass(frozen=True)
class GraphStats:
    n_nodes: int
    n_arcs: int
    possible_arcs: int
    log2_possible_digraphs: int
    max_fan_in: int
    max_fan_out: int
    longest_path: int
    n_isolated: int


def _as_node_map(nodes) -> dict:
    if isinstance(nodes, Mapping):
        nodes = nodes.values()
    out = {}
    for node in nodes:
        if not isinstance(node, Node):
            raise InvalidArgument(f"expected a Node, got {node!r}")
        if node.id in out:
            raise DuplicateNode(f"duplicate node id {node.id!r}")
        out[node.id] = node
    return out


def _as_arc_map(arcs) -> dict:
    if isinstance(arcs, Mapping):
        arcs = arcs.values()
    out = {}
    for arc in arcs:
        if not isinstance(arc, Arc):
            raise InvalidArgument(f"expected an Arc, got {arc!r}")
        if arc.key in out:
            raise InvalidArgument(f"duplicate arc {arc.source} -> {arc.target}")
        out[arc.key] = arc
    return out


@dataclass(frozen=True)
class CausalModel:
    """One causal DAG fragment of a knowledge base.

    Carries its purpose/scope/status metadata, the graph itself, the
    element dictionary, the designated key start/end variables that scope
    it, and (optionally) local probability distributions. Construction
    validates referential integrity and acyclicity, so a successfully
    built value is always a consistent DAG.

    ``distributions`` may cover only part of the graph while a model is
    being edited; every present entry must match its node's parent set,
    and inference requires full coverage (see ckb.infer).
    """

    id: str
    purpose: str = ""
    scope: str = ""
    status: str = STATUS_INCOMPLETE_DRAFT
    nodes: Mapping = field(default_factory=dict)
    arcs: Mapping = field(default_factory=dict)
    dictionary: Mapping = field(default_factory=dict)
    key_start: tuple = ()
    key_end: tuple = ()
    distributions: Mapping = field(default_factory=dict)
    version_label: str = ""
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if not self.id or not isinstance(self.id, str):
            raise InvalidArgument("model id must be a non-empty string")
        if self.status not in STATUSES:
            raise InvalidArgument(f"unknown model status {self.status!r}")
        nodes = _as_node_map(self.nodes)
        arcs = _as_arc_map(self.arcs)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "arcs", arcs)
        object.__setattr__(self, "key_start", tuple(self.key_start))
        object.__setattr__(self, "key_end", tuple(self.key_end))
        object.__setattr__(self, "dictionary", dict(self.dictionary))
        object.__setattr__(self, "distributions", dict(self.distributions))
        object.__setattr__(self, "meta", dict(self.meta))
        self._validate()

    def _validate(self):
        for (src, dst), arc in self.arcs.items():
            if (src, dst) != arc.key:
                raise InvalidArgument("arc map key does not match the arc")
            for endpoint in arc.key:
                if endpoint not in self.nodes:
                    raise DanglingReference(
                        f"arc endpoint {endpoint!r} is not a node of {self.id!r}"
                    )
        cycle = find_cycle(self.nodes, self.arcs)
        if cycle is not None:
            raise CycleError(cycle)
        for key_list, name in ((self.key_start, "key_start"), (self.key_end, "key_end")):
            for nid in key_list:
                if nid not in self.nodes:
                    raise DanglingReference(f"{name} id {nid!r} is not a node")
        valid_keys = set(self.nodes)
        valid_keys.update(arc_key(s, t) for s, t in self.arcs)
        for key, entry in self.dictionary.items():
            if key not in valid_keys:
                raise DanglingReference(f"dictionary key {key!r} matches no element")
            if not isinstance(entry, DictionaryEntry):
                raise InvalidArgument(f"dictionary value for {key!r} is not an entry")
        if self.distributions:
            graph_parents = {nid: [] for nid in self.nodes}
            for src, dst in self.arcs:
                graph_parents[dst].append(src)
            for nid, dist in self.distributions.items():
                if nid not in self.nodes:
                    raise DanglingReference(f"distribution for unknown node {nid!r}")
                parents = getattr(dist, "parents", None)
                if parents is None:
                    raise InvalidArgument(
                        f"distribution for {nid!r} has no parent list"
                    )
                if tuple(parents) != tuple(sorted(graph_parents[nid])):
                    raise InvalidArgument(
                        f"distribution for {nid!r} lists parents {tuple(parents)!r}, "
                        f"graph has {tuple(sorted(graph_parents[nid]))!r}"
                    )

    # -- query helpers -------------------------------------------------

    def parents(self, node_id: str) -> tuple:
        return tuple(sorted(s for s, t in self.arcs if t == node_id))

    def children(self, node_id: str) -> tuple:
        return tuple(sorted(t for s, t in self.arcs if s == node_id))

    def has_node(self, node_id: str) -> bool:
        return node_id in self.nodes

    def has_arc(self, source: str, target: str) -> bool:
        return (source, target) in self.arcs

    def is_parameterised(self) -> bool:
        return set(self.distributions) == set(self.nodes)


@dataclass(frozen=True)
class KnowledgeBase:
    """Top-level framework plus the models that elaborate its pieces."""

    id: str
    framework: CausalModel
    coverage: Mapping = field(default_factory=dict)
    models: Mapping = field(default_factory=dict)
    claims: tuple = ()
    documentation: str = ""

    def __post_init__(self):
        if not self.id:
            raise InvalidArgument("knowledge base id must be non-empty")
        models = dict(self.models)
        for mid, model in models.items():
            if not isinstance(model, CausalModel) or model.id != mid:
                raise InvalidArgument(f"model map entry {mid!r} is inconsistent")
        coverage = {k: tuple(v) for k, v in self.coverage.items()}
        for fw_node, mids in coverage.items():
            if fw_node not in self.framework.nodes:
                raise DanglingReference(
                    f"coverage key {fw_node!r} is not a framework node"
                )
            for mid in mids:
                if mid not in models:
                    raise DanglingReference(f"coverage names unknown model {mid!r}")
        object.__setattr__(self, "models", models)
        object.__setattr__(self, "coverage", coverage)
        object.__setattr__(self, "claims", tuple(self.claims))


# -- graph algorithms ---------------------------------------------------


def children_adjacency(nodes: Mapping, arcs: Mapping) -> dict:
    """Child lists per node, each sorted for deterministic traversal."""
    adj = {nid: [] for nid in nodes}
    for src, dst in arcs:
        adj[src].append(dst)
    for nid in adj:
        adj[nid].sort()
    return adj


def find_cycle(nodes: Mapping, arcs: Mapping) -> Optional[list]:
    """Return some directed cycle as a node list, or None if acyclic.

    Iterative DFS: must not recurse, so that arbitrarily deep parsed
    inputs cannot blow the interpreter stack.
    """
    adj = children_adjacency(nodes, arcs)
    white, gray, black = 0, 1, 2
    color = {nid: white for nid in nodes}
    for root in sorted(nodes):
        if color[root] != white:
            continue
        color[root] = gray
        stack = [(root, iter(adj[root]))]
        path = [root]
        while stack:
            nid, children = stack[-1]
            advanced = False
            for child in children:
                if color[child] == gray:
                    return path[path.index(child):]
                if color[child] == white:
                    color[child] = gray
                    stack.append((child, iter(adj[child])))
                    path.append(child)
                    advanced = True
                    break
            if not advanced:
                stack.pop()
                path.pop()
                color[nid] = black
    return None


def can_reach(adj: Mapping, start: str, goal: str) -> bool:
    """Forward reachability with early exit; a cheap probe to run before
    building an explanatory path."""
    if start == goal:
        return True
    seen = {start}
    frontier = [start]
    while frontier:
        nid = frontier.pop()
        for child in adj[nid]:
            if child == goal:
                return True
            if child not in seen:
                seen.add(child)
                frontier.append(child)
    return False


def shortest_lex_path(adj: Mapping, src: str, dst: str, skip_arc=None) -> Optional[list]:
    """Lexicographically smallest among the shortest src->dst paths.

    ``skip_arc`` excludes one (source, target) arc from consideration.
    Returns None when dst is unreachable; [src] when src == dst.
    """
    if src == dst:
        return [src]
    # distances to dst over reversed arcs
    rev = {nid: [] for nid in adj}
    for nid, kids in adj.items():
        for kid in kids:
            if skip_arc and (nid, kid) == skip_arc:
                continue
            rev[kid].append(nid)
    dist = {dst: 0}
    frontier = [dst]
    while frontier:
        nxt = []
        for nid in frontier:
            for parent in rev[nid]:
                if parent not in dist:
                    dist[parent] = dist[nid] + 1
                    nxt.append(parent)
        frontier = nxt
    if src not in dist:
        return None
    path = [src]
    current = src
    while current != dst:
        step = None
        for child in adj[current]:  # sorted already
            if skip_arc and (current, child) == skip_arc:
                continue
            if dist.get(child) == dist[current] - 1:
                step = child
                break
        path.append(step)
        current = step
    return path


def reachable_from(adj: Mapping, start: Iterable) -> set:
    seen = set()
    frontier = [s for s in start]
    while frontier:
        nid = frontier.pop()
        if nid in seen:
            continue
        seen.add(nid)
        frontier.extend(adj[nid])
    return seen


# -- operations ----------------------------------------------------------


def new_model(model_id: str, purpose: str = "", scope: str = "") -> CausalModel:
    """Start a model from its purpose and scope: an empty draft DAG."""
    if not model_id:
        raise InvalidArgument("model id must be non-empty")
    return CausalModel(id=model_id, purpose=purpose, scope=scope)


def add_node(model: CausalModel, node: Node) -> CausalModel:
    if node.id in model.nodes:
        raise DuplicateNode(f"node {node.id!r} already exists in {model.id!r}")
    nodes = dict(model.nodes)
    nodes[node.id] = node
    return replace(model, nodes=nodes)


def add_arc(model: CausalModel, arc: Arc) -> CausalModel:
    for endpoint in arc.key:
        if endpoint not in model.nodes:
            raise DanglingReference(f"arc endpoint {endpoint!r} is not a node")
    if arc.key in model.arcs:
        raise InvalidArgument(f"arc {arc.source} -> {arc.target} already exists")
    adj = children_adjacency(model.nodes, model.arcs)
    if can_reach(adj, arc.target, arc.source):
        raise CycleError(shortest_lex_path(adj, arc.target, arc.source))
    arcs = dict(model.arcs)
    arcs[arc.key] = arc
    return replace(model, arcs=arcs)


def remove_element(model: CausalModel, ref: Union[str, tuple]) -> CausalModel:
    """Remove a node (by id) or an arc (by (source, target) pair).

    Removing a node also removes its incident arcs, the dictionary
    entries of the node and those arcs, its own distribution entry, and
    the distribution entries of nodes whose parent set changed. Removing
    an arc leaves both nodes in place.
    """
    if isinstance(ref, str):
        if ref not in model.nodes:
            raise NotFound(f"no node {ref!r} in {model.id!r}")
        nodes = {nid: n for nid, n in model.nodes.items() if nid != ref}
        dropped = {k for k in model.arcs if ref in k}
        arcs = {k: a for k, a in model.arcs.items() if k not in dropped}
        touched = {ref} | {t for _, t in dropped}
        dictionary = {
            k: e
            for k, e in model.dictionary.items()
            if k != ref and k not in {arc_key(s, t) for s, t in dropped}
        }
        distributions = {
            nid: d for nid, d in model.distributions.items() if nid not in touched
        }
        key_start = tuple(k for k in model.key_start if k != ref)
        key_end = tuple(k for k in model.key_end if k != ref)
        return replace(
            model,
            nodes=nodes,
            arcs=arcs,
            dictionary=dictionary,
            distributions=distributions,
            key_start=key_start,
            key_end=key_end,
        )
    ref = tuple(ref)
    if ref not in model.arcs:
        raise NotFound(f"no arc {ref[0]} -> {ref[1]} in {model.id!r}")
    arcs = {k: a for k, a in model.arcs.items() if k != ref}
    dictionary = {k: e for k, e in model.dictionary.items() if k != arc_key(*ref)}
    distributions = {
        nid: d for nid, d in model.distributions.items() if nid != ref[1]
    }
    return replace(model, arcs=arcs, dictionary=dictionary, distributions=distributions)


def topological_order(model: CausalModel) -> list:
    """Arc-consistent node order; ties broken lexicographically."""
    fan_in = {nid: 0 for nid in model.nodes}
    for _, dst in model.arcs:
        fan_in[dst] += 1
    adj = children_adjacency(model.nodes, model.arcs)
    ready = [nid for nid, k in fan_in.items() if k == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        nid = heapq.heappop(ready)
        order.append(nid)
        for child in adj[nid]:
            fan_in[child] -= 1
            if fan_in[child] == 0:
                heapq.heappush(ready, child)
    return order


@dataclass(frozen=True)
class PathsResult:
    paths: tuple
    truncated: bool


def paths_between(
    model: CausalModel, src: str, dst: str, max_paths: int = 1000
) -> PathsResult:
    """All simple directed src->dst paths, shortest first then lexicographic.

    The enumeration stops once ``max_paths`` paths are emitted; the
    truncation flag reports whether more paths exist.
    """
    for nid in (src, dst):
        if nid not in model.nodes:
            raise NotFound(f"no node {nid!r} in {model.id!r}")
    adj = children_adjacency(model.nodes, model.arcs)
    paths = []
    truncated = False
    frontier = [(src,)]
    while frontier:
        level_hits = []
        nxt = []
        for path in frontier:
            tail = path[-1]
            if tail == dst:
                level_hits.append(path)
                continue
            for child in adj[tail]:
                if child not in path:
                    nxt.append(path + (child,))
        for path in level_hits:
            if len(paths) >= max_paths:
                truncated = True
                return PathsResult(tuple(paths), True)
            paths.append(path)
        frontier = sorted(nxt)
    return PathsResult(tuple(paths), truncated)
