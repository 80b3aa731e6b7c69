"""Structural editing and knowledge-derivation operations.

Everything here is pure: operations validate, then build a new model in
one shot, so a failed operation leaves the input untouched (construction
re-checks acyclicity and referential integrity). Distribution entries
whose node's parent set changes are dropped rather than silently kept
stale.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence, Union

from .core import (
    Arc,
    CausalModel,
    Claim,
    DictionaryEntry,
    GraphStats,
    KnowledgeBase,
    Node,
    POSITIVE,
    arc_key,
    children_adjacency,
    other_influence,
    reachable_from,
    topological_order,
)
from .errors import (
    CycleError,
    DuplicateNode,
    IncompleteAssignment,
    InvalidArgument,
    NotFound,
)
from .param import Gate


def _ensure_nodes(model: CausalModel, ids) -> dict:
    """Existing nodes plus default Boolean nodes for fresh ids."""
    nodes = dict(model.nodes)
    for nid in ids:
        if nid not in nodes:
            nodes[nid] = Node(id=nid)
    return nodes


def _prune_distributions(distributions, arcs, dropped_nodes=()):
    """Keep only entries whose parent set still matches the graph."""
    parents = {}
    for src, dst in arcs:
        parents.setdefault(dst, []).append(src)
    out = {}
    for nid, dist in distributions.items():
        if nid in dropped_nodes:
            continue
        if tuple(sorted(parents.get(nid, ()))) == tuple(getattr(dist, "parents", ())):
            out[nid] = dist
    return out


def reverse_bowtie_init(
    model_id: str,
    start: Sequence,
    end: Sequence,
    purpose: str = "",
    scope: str = "",
) -> CausalModel:
    """Start a model from its focal events: the given start and end nodes,
    one placeholder positive arc per (start, end) pair, and the key
    variable lists set accordingly. The placeholder arcs are what
    expand_arc later elaborates into mediating pathways."""
    start = list(dict.fromkeys(start))
    end = list(dict.fromkeys(end))
    if not start or not end:
        raise InvalidArgument("start and end node lists must be non-empty")
    if set(start) & set(end):
        raise InvalidArgument("start and end node lists must be disjoint")
    nodes = [Node(id=nid) for nid in start + end]
    arcs = [Arc(source=s, target=e) for s in start for e in end]
    return CausalModel(
        id=model_id,
        purpose=purpose,
        scope=scope,
        nodes=nodes,
        arcs=arcs,
        key_start=tuple(start),
        key_end=tuple(end),
    )


def expand_arc(
    model: CausalModel,
    source: str,
    target: str,
    pathways: Sequence,
    keep_leak: bool = False,
    influence_overrides: Optional[Mapping] = None,
) -> CausalModel:
    """Replace an arc with one or more mediating pathways.

    Each pathway is a sequence of node ids; fresh ids become default
    Boolean nodes. The first hop inherits the original arc's influence,
    later hops default to positive; ``influence_overrides`` maps
    (from, to) pairs to explicit influences. With ``keep_leak`` the
    original arc stays in place to absorb unmodelled routes (the lint
    pass for redundant paths will then flag it, deliberately).
    """
    if (source, target) not in model.arcs:
        raise NotFound(f"no arc {source} -> {target} in {model.id!r}")
    pathways = [list(p) for p in pathways]
    if not pathways or any(not p for p in pathways):
        raise InvalidArgument("need at least one non-empty pathway")
    original = model.arcs[(source, target)]
    overrides = dict(influence_overrides or {})

    mediators = [nid for path in pathways for nid in path]
    nodes = _ensure_nodes(model, mediators)
    arcs = dict(model.arcs)
    if not keep_leak:
        del arcs[(source, target)]
    for path in pathways:
        hops = list(zip([source] + path, path + [target]))
        for index, (src, dst) in enumerate(hops):
            if src == dst:
                raise CycleError([src])
            if (src, dst) in arcs:
                continue  # pathway reuses an existing arc; keep its annotation
            influence = overrides.get(
                (src, dst), original.influence if index == 0 else POSITIVE
            )
            arcs[(src, dst)] = Arc(source=src, target=dst, influence=influence)
    distributions = _prune_distributions(model.distributions, arcs)
    dictionary = dict(model.dictionary)
    if not keep_leak:
        dictionary.pop(arc_key(source, target), None)
    return replace(
        model,
        nodes=nodes,
        arcs=arcs,
        distributions=distributions,
        dictionary=dictionary,
    )


def bowtie_grow(
    model: CausalModel,
    critical: str,
    causes: Sequence = (),
    consequences: Sequence = (),
    gate: Optional[str] = None,
) -> CausalModel:
    """Grow causes (left) and consequences (right) around a critical node.

    With ``gate`` ("or"/"and") the critical node's local distribution is
    recorded as that deterministic gate over all of its parents.
    """
    if critical not in model.nodes:
        raise NotFound(f"no node {critical!r} in {model.id!r}")
    causes = list(dict.fromkeys(causes))
    consequences = list(dict.fromkeys(consequences))
    nodes = _ensure_nodes(model, list(causes) + list(consequences))
    arcs = dict(model.arcs)
    for cause in causes:
        if (cause, critical) not in arcs:
            arcs[(cause, critical)] = Arc(source=cause, target=critical)
    for consequence in consequences:
        if (critical, consequence) not in arcs:
            arcs[(critical, consequence)] = Arc(source=critical, target=consequence)
    distributions = _prune_distributions(model.distributions, arcs)
    if gate is not None:
        parents = tuple(sorted(src for src, dst in arcs if dst == critical))
        if not parents:
            raise InvalidArgument("a gate needs at least one cause")
        distributions[critical] = Gate(kind=gate, parents=parents)
    return replace(model, nodes=nodes, arcs=arcs, distributions=distributions)


def merge_nodes(
    model: CausalModel,
    ids: Sequence,
    merged: Union[Node, str],
    ranking: Optional[Sequence] = None,
) -> CausalModel:
    """Collapse several nodes into one multi-state node.

    The ranking (default: the given id order) is an importance order: the
    merged node's states follow it, most important first, with a final
    "none" state — the labeling convention of a graded-max model. Passing
    a plain id builds that node automatically; pass a full Node to choose
    states yourself.

    Incident arcs are redirected and deduplicated; when parallel arcs
    disagree on influence, the merged arc gets other("merged-conflict")
    and a note naming the originals, surfacing the disagreement instead
    of picking a side. Dictionary entries of the originals are folded
    into the merged node's entry.
    """
    ids = list(ids)
    if len(ids) < 2 or len(set(ids)) != len(ids):
        raise InvalidArgument("merge needs at least two distinct node ids")
    for nid in ids:
        if nid not in model.nodes:
            raise NotFound(f"no node {nid!r} in {model.id!r}")
    ranking = list(ranking) if ranking is not None else list(ids)
    if sorted(ranking) != sorted(ids):
        raise InvalidArgument("ranking must be a permutation of the merged ids")
    if isinstance(merged, str):
        merged = Node(
            id=merged,
            states=tuple(ranking) + ("none",),
            ordered=True,
        )
    survivors = set(model.nodes) - set(ids)
    if merged.id in survivors:
        raise DuplicateNode(f"node {merged.id!r} already exists")

    members = set(ids)
    for src, dst in sorted(model.arcs):
        if src in members and dst in members:
            raise CycleError([src, dst])

    redirected = {}
    origins = {}
    for (src, dst), arc in sorted(model.arcs.items()):
        new_src = merged.id if src in members else src
        new_dst = merged.id if dst in members else dst
        origins.setdefault((new_src, new_dst), []).append(arc)
    for key, arcs_in in origins.items():
        if len(arcs_in) == 1:
            arc = arcs_in[0]
            if (arc.source, arc.target) != key:
                arc = replace(arc, source=key[0], target=key[1])
            redirected[key] = arc
            continue
        influences = {(a.influence.kind, a.influence.label) for a in arcs_in}
        names = ", ".join(f"{a.source} -> {a.target}" for a in arcs_in)
        if len(influences) == 1:
            influence = arcs_in[0].influence
        else:
            influence = other_influence("merged-conflict")
        strengths = {a.strength for a in arcs_in}
        redirected[key] = Arc(
            source=key[0],
            target=key[1],
            influence=influence,
            strength=arcs_in[0].strength if len(strengths) == 1 else None,
            significant=any(a.significant for a in arcs_in),
            note=f"merged from: {names}",
        )

    nodes = {nid: n for nid, n in model.nodes.items() if nid in survivors}
    nodes[merged.id] = merged

    folded = []
    for nid in ids:
        entry = model.dictionary.get(nid)
        if entry is not None and entry.definition:
            folded.append(f"from {nid!r}: {entry.definition}")
    dictionary = {
        key: entry
        for key, entry in model.dictionary.items()
        if key in nodes or (
            "->" in key and tuple(key.split("->", 1)) in redirected
        )
    }
    if folded:
        dictionary[merged.id] = DictionaryEntry(
            definition="\n".join(folded), status="drafted"
        )

    distributions = _prune_distributions(
        model.distributions, redirected, dropped_nodes=members
    )
    key_start = _splice(model.key_start, members, merged.id)
    key_end = _splice(model.key_end, members, merged.id)
    return replace(
        model,
        nodes=nodes,
        arcs=redirected,
        dictionary=dictionary,
        distributions=distributions,
        key_start=key_start,
        key_end=key_end,
    )


def _splice(key_list, members, replacement_ids) -> tuple:
    if isinstance(replacement_ids, str):
        replacement_ids = [replacement_ids]
    out = []
    for nid in key_list:
        for item in (replacement_ids if nid in members else [nid]):
            if item not in out:
                out.append(item)
    return tuple(out)


def split_node(
    model: CausalModel,
    node_id: str,
    replacements: Sequence,
    parent_assignment: Mapping,
    child_assignment: Mapping,
) -> CausalModel:
    """Divide one node into several, re-attaching every incident arc.

    ``parent_assignment`` maps each former parent to the replacement ids
    that inherit its arc; ``child_assignment`` does the same for former
    children. Every incident arc must be assigned somewhere, and arc
    annotations travel with the re-attached arcs.
    """
    if node_id not in model.nodes:
        raise NotFound(f"no node {node_id!r} in {model.id!r}")
    replacements = list(replacements)
    if not replacements:
        raise InvalidArgument("need at least one replacement node")
    new_ids = [n.id for n in replacements]
    if len(set(new_ids)) != len(new_ids):
        raise DuplicateNode("replacement ids must be distinct")
    for node in replacements:
        if node.id != node_id and node.id in model.nodes:
            raise DuplicateNode(f"node {node.id!r} already exists")

    parents = set(model.parents(node_id))
    children = set(model.children(node_id))
    parent_assignment = {k: list(v) for k, v in dict(parent_assignment).items()}
    child_assignment = {k: list(v) for k, v in dict(child_assignment).items()}
    for name, assignment, expected in (
        ("parent", parent_assignment, parents),
        ("child", child_assignment, children),
    ):
        missing = expected - set(assignment)
        if missing:
            raise IncompleteAssignment(
                f"unassigned {name} arcs for: {', '.join(sorted(missing))}"
            )
        for other, targets in assignment.items():
            if other not in expected:
                raise InvalidArgument(f"{other!r} is not a former {name}")
            if not targets:
                raise IncompleteAssignment(f"{name} {other!r} assigned to nothing")
            unknown = set(targets) - set(new_ids)
            if unknown:
                raise InvalidArgument(
                    f"assignment names unknown replacements: {sorted(unknown)}"
                )

    nodes = {nid: n for nid, n in model.nodes.items() if nid != node_id}
    for node in replacements:
        nodes[node.id] = node
    arcs = {k: a for k, a in model.arcs.items() if node_id not in k}
    for parent, targets in sorted(parent_assignment.items()):
        original = model.arcs[(parent, node_id)]
        for rid in targets:
            arcs[(parent, rid)] = replace(original, source=parent, target=rid)
    for child, sources in sorted(child_assignment.items()):
        original = model.arcs[(node_id, child)]
        for rid in sources:
            arcs[(rid, child)] = replace(original, source=rid, target=child)
    dictionary = {
        key: entry
        for key, entry in model.dictionary.items()
        if key in nodes or ("->" in key and tuple(key.split("->", 1)) in arcs)
    }
    distributions = _prune_distributions(
        model.distributions, arcs, dropped_nodes={node_id}
    )
    key_start = _splice(model.key_start, {node_id}, new_ids)
    key_end = _splice(model.key_end, {node_id}, new_ids)
    return replace(
        model,
        nodes=nodes,
        arcs=arcs,
        dictionary=dictionary,
        distributions=distributions,
        key_start=key_start,
        key_end=key_end,
    )


# -- derived knowledge --------------------------------------------------------


def infer_transitive_claims(target) -> tuple:
    """Claims derivable purely by transitivity.

    For every ordered pair (u, w) connected by a directed path of length
    >= 2 with no direct arc, emit an inferable claim. The influence is
    positive when some connecting path is all-positive, otherwise
    other("sign-ambiguous") — inferred knowledge stays conservative.
    Knowledge bases are processed model by model (framework included);
    no closure is taken across models.
    """
    if isinstance(target, CausalModel):
        graphs = [target]
    elif isinstance(target, KnowledgeBase):
        graphs = [target.framework] + [
            target.models[mid] for mid in sorted(target.models)
        ]
    else:
        raise InvalidArgument(f"cannot derive claims from {target!r}")
    claims = []
    seen = set()
    for model in graphs:
        adj = children_adjacency(model.nodes, model.arcs)
        pos_adj = {nid: [] for nid in model.nodes}
        for (src, dst), arc in model.arcs.items():
            if arc.influence.kind == "positive":
                pos_adj[src].append(dst)
        for u in sorted(model.nodes):
            downstream = reachable_from(adj, adj[u])
            all_positive = reachable_from(pos_adj, pos_adj[u])
            for w in sorted(downstream):
                if w == u or (u, w) in model.arcs:
                    continue
                influence = (
                    POSITIVE if w in all_positive else other_influence("sign-ambiguous")
                )
                claim = Claim(
                    cause=u,
                    effect=w,
                    influence=influence,
                    knowledge_type="inferable",
                    source_kind="inferred",
                    source_detail=f"transitivity within model {model.id!r}",
                )
                marker = (claim.cause, claim.effect, claim.influence,
                          claim.source_detail)
                if marker not in seen:
                    seen.add(marker)
                    claims.append(claim)
    claims.sort(key=lambda c: (c.cause, c.effect, c.source_detail))
    return tuple(claims)


def claims_to_jsonl(claims) -> str:
    """Claims as JSON lines, one object per claim."""
    from .lang.export import claim_to_dict

    return "\n".join(json.dumps(claim_to_dict(c), sort_keys=True) for c in claims)


# -- comparison and statistics -------------------------------------------------


@dataclass(frozen=True)
class DiffReport:
    added_nodes: tuple
    removed_nodes: tuple
    modified_nodes: tuple
    added_arcs: tuple
    removed_arcs: tuple
    modified_arcs: tuple
    dictionary_added: tuple
    dictionary_removed: tuple
    dictionary_modified: tuple
    distributions_added: tuple
    distributions_removed: tuple
    distributions_modified: tuple
    changed_fields: tuple  # model-level metadata fields that differ

    @property
    def empty(self) -> bool:
        return not any(getattr(self, f.name) for f in
                       self.__dataclass_fields__.values())  # type: ignore[attr-defined]


def _keyed_delta(old: Mapping, new: Mapping):
    added = tuple(sorted(set(new) - set(old)))
    removed = tuple(sorted(set(old) - set(new)))
    modified = tuple(
        sorted(k for k in set(old) & set(new) if old[k] != new[k])
    )
    return added, removed, modified


def diff(a: CausalModel, b: CausalModel) -> DiffReport:
    """Element-wise structural comparison, keyed by node id and arc pair."""
    nodes = _keyed_delta(a.nodes, b.nodes)
    arcs = _keyed_delta(a.arcs, b.arcs)
    dictionary = _keyed_delta(a.dictionary, b.dictionary)
    distributions = _keyed_delta(a.distributions, b.distributions)
    changed = tuple(
        name
        for name in ("id", "purpose", "scope", "status", "key_start", "key_end",
                     "version_label", "meta")
        if getattr(a, name) != getattr(b, name)
    )
    return DiffReport(*nodes, *arcs, *dictionary, *distributions, changed)


def graph_stats(model: CausalModel) -> GraphStats:
    """Size and shape summary; possible_arcs is n(n-1), the number of
    candidate directed arcs when cycles are not yet prevented, and
    2**log2_possible_digraphs counts all digraphs over the nodes."""
    n = len(model.nodes)
    fan_in = {nid: 0 for nid in model.nodes}
    fan_out = {nid: 0 for nid in model.nodes}
    for src, dst in model.arcs:
        fan_out[src] += 1
        fan_in[dst] += 1
    longest = {}
    for nid in topological_order(model):
        longest[nid] = max(
            (longest[p] + 1 for p in model.parents(nid)), default=0
        )
    return GraphStats(
        n_nodes=n,
        n_arcs=len(model.arcs),
        possible_arcs=n * (n - 1),
        log2_possible_digraphs=n * (n - 1),
        max_fan_in=max(fan_in.values(), default=0),
        max_fan_out=max(fan_out.values(), default=0),
        longest_path=max(longest.values(), default=0),
        n_isolated=sum(
            1 for nid in model.nodes if fan_in[nid] == 0 and fan_out[nid] == 0
        ),
    )
