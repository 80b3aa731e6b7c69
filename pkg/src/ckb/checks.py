"""Structural lint passes over models and knowledge bases.

Pass catalog (all findings are diagnostics; nothing is ever rewritten):

    C001 error    directed cycle (defense-in-depth on hand-built data)
    C002 error    dangling reference (arc endpoint, dictionary key,
                  distribution entry, coverage target)
    W101 warning  fan-in above threshold
    W102 warning  direct arc shadowed by an indirect path (redundant triangle)
    W103 warning  long chain dilutes influence (strength product under floor;
                  without strengths the length alone triggers it)
    W104 warning  non-Boolean states without a boolean interpretation note
    W105 warning  node on no key_start -> key_end path (both key sets set)
    W106 warning  element without a dictionary entry, or only a stub
    W107 info     positive arc whose titles carry a negation cue
    W108 warning/info  (knowledge base) uncovered framework node is info;
                  model mapped to no framework node is a warning
    W109 info     similar titles: merge/divide candidates
    W110 info     isolated node
    W111 warning  fan-out above threshold
    W112 info     literature claim without a quote anchor

Every pass is deterministic and idempotent, and disabling a code removes
exactly that code's findings.
"""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass
from typing import Mapping, Optional

from .core import (
    CausalModel,
    KnowledgeBase,
    arc_key,
    children_adjacency,
    find_cycle,
    reachable_from,
    shortest_lex_path,
)
from .diagnostics import (
    SEVERITY_ERROR,
    SEVERITY_INFO,
    SEVERITY_WARNING,
    Diagnostic,
    sort_diagnostics,
)
from .errors import InvalidArgument
from .param import DEFAULT_SCALE

ALL_CODES = (
    "C001", "C002",
    "W101", "W102", "W103", "W104", "W105", "W106",
    "W107", "W108", "W109", "W110", "W111", "W112",
)

# cue words hinting that a "positive" arc may actually be inverted;
# "failure" only counts on the source side (failures are normal effects)
NEGATION_CUES = ("decreased", "impaired", "low", "poor", "reduced")
SOURCE_ONLY_CUES = ("failure",)

_WORD_RE = re.compile(r"[a-z0-9]+")

_MAX_DILUTION_PATHS = 10000


@dataclass(frozen=True)
class CheckConfig:
    fan_in_threshold: int = 5
    fan_out_threshold: int = 8
    dilution_chain_length: int = 4
    dilution_product_floor: float = 0.05
    title_similarity_threshold: float = 0.8
    enabled: Optional[tuple] = None  # None: all passes
    disabled: tuple = ()

    def __post_init__(self):
        for name in ("fan_in_threshold", "fan_out_threshold", "dilution_chain_length"):
            if getattr(self, name) <= 0:
                raise InvalidArgument(f"{name} must be positive")
        if not 0.0 <= self.title_similarity_threshold <= 1.0:
            raise InvalidArgument("title_similarity_threshold must lie in [0, 1]")
        if not 0.0 <= self.dilution_product_floor <= 1.0:
            raise InvalidArgument("dilution_product_floor must lie in [0, 1]")
        object.__setattr__(self, "disabled", tuple(self.disabled))
        if self.enabled is not None:
            object.__setattr__(self, "enabled", tuple(self.enabled))

    def is_enabled(self, code: str) -> bool:
        if code in self.disabled:
            return False
        return self.enabled is None or code in self.enabled


@dataclass(frozen=True)
class CheckReport:
    diagnostics: tuple
    summary: Mapping  # code -> count

    @property
    def errors(self) -> int:
        return sum(1 for d in self.diagnostics if d.severity == SEVERITY_ERROR)

    @property
    def warnings(self) -> int:
        return sum(1 for d in self.diagnostics if d.severity == SEVERITY_WARNING)

    def render_text(self) -> str:
        """One human-readable line per finding."""
        return "\n".join(d.render() for d in self.diagnostics)

    def render_jsonl(self) -> str:
        """One JSON object per finding, one per line."""
        return "\n".join(
            json.dumps(d.to_dict(), sort_keys=True) for d in self.diagnostics
        )


@dataclass(frozen=True)
class RedundantArc:
    arc: tuple  # (source, target)
    path: tuple  # shortest indirect route, including both endpoints


@dataclass(frozen=True)
class ScopePartition:
    on_path: tuple
    off_path: tuple
    unscoped: tuple


def find_redundant_paths(model: CausalModel) -> tuple:
    """Arcs u -> v that coexist with an indirect directed u ~> v path,
    each with the (lexicographically first) shortest such path."""
    adj = children_adjacency(model.nodes, model.arcs)
    found = []
    for src, dst in sorted(model.arcs):
        path = shortest_lex_path(adj, src, dst, skip_arc=(src, dst))
        if path is not None and len(path) > 2:
            found.append(RedundantArc((src, dst), tuple(path)))
    return tuple(found)


def scope_mediation_check(model: CausalModel) -> ScopePartition:
    """Partition nodes by whether they mediate key start -> key end paths."""
    if not model.key_start or not model.key_end:
        return ScopePartition((), (), tuple(sorted(model.nodes)))
    adj = children_adjacency(model.nodes, model.arcs)
    radj = {nid: [] for nid in model.nodes}
    for (src, dst) in model.arcs:
        radj[dst].append(src)
    downstream = reachable_from(adj, model.key_start)
    upstream = reachable_from(radj, model.key_end)
    on_path = sorted(downstream & upstream)
    off_path = sorted(set(model.nodes) - set(on_path))
    return ScopePartition(tuple(on_path), tuple(off_path), ())


# -- individual passes -------------------------------------------------------


def _title_tokens(node) -> frozenset:
    return frozenset(_WORD_RE.findall(node.display_title.lower()))


def _pass_c001(model, config, where):
    cycle = find_cycle(model.nodes, model.arcs)
    if cycle is not None:
        loop = " -> ".join(cycle + cycle[:1])
        yield Diagnostic("C001", SEVERITY_ERROR,
                         f"model contains the directed cycle {loop}",
                         where("model"))


def _pass_c002(model, config, where):
    for src, dst in sorted(model.arcs):
        for endpoint in (src, dst):
            if endpoint not in model.nodes:
                yield Diagnostic("C002", SEVERITY_ERROR,
                                 f"arc endpoint {endpoint!r} is not a node",
                                 where(f"arc:{src}->{dst}"))
    element_keys = set(model.nodes) | {arc_key(s, t) for s, t in model.arcs}
    for key in sorted(model.dictionary):
        if key not in element_keys:
            yield Diagnostic("C002", SEVERITY_ERROR,
                             f"dictionary entry for unknown element {key!r}",
                             where(f"dict:{key}"))
    for nid in sorted(model.distributions):
        if nid not in model.nodes:
            yield Diagnostic("C002", SEVERITY_ERROR,
                             f"distribution for unknown node {nid!r}",
                             where(f"cpd:{nid}"))
    for nid in sorted(model.nodes):
        ref = model.nodes[nid].dictionary_key
        if ref and ref not in model.dictionary:
            yield Diagnostic("C002", SEVERITY_ERROR,
                             f"node {nid!r} points at missing dictionary key {ref!r}",
                             where(f"node:{nid}"))


def _pass_w101(model, config, where):
    for nid in sorted(model.nodes):
        fan_in = len(model.parents(nid))
        if fan_in > config.fan_in_threshold:
            yield Diagnostic(
                "W101", SEVERITY_WARNING,
                f"node {nid!r} has {fan_in} parents (threshold "
                f"{config.fan_in_threshold}); consider intermediate nodes",
                where(f"node:{nid}"))


def _pass_w111(model, config, where):
    for nid in sorted(model.nodes):
        fan_out = len(model.children(nid))
        if fan_out > config.fan_out_threshold:
            yield Diagnostic(
                "W111", SEVERITY_WARNING,
                f"node {nid!r} has {fan_out} children (threshold "
                f"{config.fan_out_threshold}); consider mediating mechanisms",
                where(f"node:{nid}"))


def _pass_w102(model, config, where):
    for finding in find_redundant_paths(model):
        src, dst = finding.arc
        via = " -> ".join(finding.path)
        yield Diagnostic(
            "W102", SEVERITY_WARNING,
            f"arc {src} -> {dst} coexists with the indirect path {via}",
            where(f"arc:{src}->{dst}"),
            related=(("keep the direct arc only if it adds a distinct "
                      "mechanism; otherwise prune one route", None),))


def _strength_value(arc) -> Optional[float]:
    if arc.strength is None:
        return None
    return DEFAULT_SCALE.value(arc.strength)


def _pass_w103(model, config, where):
    adj = children_adjacency(model.nodes, model.arcs)
    roots = sorted(nid for nid in model.nodes if not model.parents(nid))
    seen_pairs = set()
    budget = _MAX_DILUTION_PATHS  # bounds DFS expansions on dense graphs
    stack = [(root, (root,)) for root in reversed(roots)]
    while stack and budget > 0:
        budget -= 1
        nid, path = stack.pop()
        children = adj[nid]
        if not children:
            length = len(path) - 1
            if length < config.dilution_chain_length:
                continue
            pair = (path[0], path[-1])
            if pair in seen_pairs:
                continue
            values = [
                _strength_value(model.arcs[(a, b)])
                for a, b in zip(path, path[1:])
            ]
            if all(v is not None for v in values):
                product = 1.0
                for v in values:
                    product *= v
                if product >= config.dilution_product_floor:
                    continue
                detail = (f"strength product {product:.4g} is below the floor "
                          f"{config.dilution_product_floor:g}")
            else:
                detail = "unparameterised chain judged by length alone"
            seen_pairs.add(pair)
            yield Diagnostic(
                "W103", SEVERITY_WARNING,
                f"chain {' -> '.join(path)} has {length} hops; {detail}; "
                "the first cause's influence dilutes at each step",
                where(f"node:{path[0]}"))
            continue
        for child in reversed(children):
            if child not in path:
                stack.append((child, path + (child,)))


def _pass_w104(model, config, where):
    from .core import BOOLEAN_STATES

    for nid in sorted(model.nodes):
        node = model.nodes[nid]
        if node.states != BOOLEAN_STATES and not node.boolean_note:
            yield Diagnostic(
                "W104", SEVERITY_WARNING,
                f"node {nid!r} has states {list(node.states)} but no boolean "
                "interpretation note",
                where(f"node:{nid}"))


def _pass_w105(model, config, where):
    partition = scope_mediation_check(model)
    for nid in partition.off_path:
        yield Diagnostic(
            "W105", SEVERITY_WARNING,
            f"node {nid!r} mediates no path from the key start variables to "
            "the key end variables; it may be out of scope",
            where(f"node:{nid}"))


def _pass_w106(model, config, where):
    for nid in sorted(model.nodes):
        key = model.nodes[nid].dictionary_key or nid
        entry = model.dictionary.get(key)
        if entry is None:
            yield Diagnostic("W106", SEVERITY_WARNING,
                             f"node {nid!r} has no dictionary entry",
                             where(f"node:{nid}"))
        elif entry.status == "stub":
            yield Diagnostic("W106", SEVERITY_WARNING,
                             f"dictionary entry for node {nid!r} is a stub",
                             where(f"node:{nid}"))
    for src, dst in sorted(model.arcs):
        entry = model.dictionary.get(arc_key(src, dst))
        if entry is None:
            yield Diagnostic("W106", SEVERITY_WARNING,
                             f"arc {src} -> {dst} has no dictionary entry",
                             where(f"arc:{src}->{dst}"))
        elif entry.status == "stub":
            yield Diagnostic("W106", SEVERITY_WARNING,
                             f"dictionary entry for arc {src} -> {dst} is a stub",
                             where(f"arc:{src}->{dst}"))


def _pass_w107(model, config, where):
    for src, dst in sorted(model.arcs):
        arc = model.arcs[(src, dst)]
        if arc.influence.kind != "positive":
            continue
        hits = []
        src_tokens = _title_tokens(model.nodes[src])
        dst_tokens = _title_tokens(model.nodes[dst])
        for cue in NEGATION_CUES:
            if cue in src_tokens:
                hits.append((src, cue))
            if cue in dst_tokens:
                hits.append((dst, cue))
        for cue in SOURCE_ONLY_CUES:
            if cue in src_tokens:
                hits.append((src, cue))
        for nid, cue in hits:
            title = model.nodes[nid].display_title
            yield Diagnostic(
                "W107", SEVERITY_INFO,
                f"arc {src} -> {dst} is annotated positive but the title of "
                f"{nid!r} ({title!r}) contains the negation cue {cue!r}; "
                "review the influence direction",
                where(f"arc:{src}->{dst}"))


def _pass_w109(model, config, where):
    ids = sorted(model.nodes)
    tokens = {nid: _title_tokens(model.nodes[nid]) for nid in ids}
    for a, b in itertools.combinations(ids, 2):
        union = tokens[a] | tokens[b]
        if not union:
            continue
        overlap = len(tokens[a] & tokens[b]) / len(union)
        if overlap >= config.title_similarity_threshold:
            yield Diagnostic(
                "W109", SEVERITY_INFO,
                f"nodes {a!r} and {b!r} have similar titles (token overlap "
                f"{overlap:.2f}); consider merging them or sharpening the "
                "definitions",
                where(f"node:{a}"))


def _pass_w110(model, config, where):
    linked = {nid for key in model.arcs for nid in key}
    for nid in sorted(model.nodes):
        if nid not in linked:
            yield Diagnostic("W110", SEVERITY_INFO,
                             f"node {nid!r} is isolated (no incident arcs)",
                             where(f"node:{nid}"))


_MODEL_PASSES = (
    ("C001", _pass_c001),
    ("C002", _pass_c002),
    ("W101", _pass_w101),
    ("W102", _pass_w102),
    ("W103", _pass_w103),
    ("W104", _pass_w104),
    ("W105", _pass_w105),
    ("W106", _pass_w106),
    ("W107", _pass_w107),
    ("W109", _pass_w109),
    ("W110", _pass_w110),
    ("W111", _pass_w111),
)


def _pass_w108(kb: KnowledgeBase, config, where):
    covered = {fw for fw, mids in kb.coverage.items() if mids}
    for nid in sorted(kb.framework.nodes):
        if nid not in covered:
            yield Diagnostic(
                "W108", SEVERITY_INFO,
                f"framework node {nid!r} is covered by no model",
                where(f"framework/node:{nid}"))
    mapped = {mid for mids in kb.coverage.values() for mid in mids}
    for mid in sorted(kb.models):
        if mid not in mapped:
            yield Diagnostic(
                "W108", SEVERITY_WARNING,
                f"model {mid!r} is mapped to no framework node",
                where(f"model:{mid}"))


def _pass_w112(kb: KnowledgeBase, config, where):
    for idx, claim in enumerate(kb.claims):
        if claim.source_kind != "literature":
            continue
        if claim.citation is None or not claim.citation.quote_anchor.strip():
            yield Diagnostic(
                "W112", SEVERITY_INFO,
                f"literature claim {claim.cause!r} -> {claim.effect!r} has no "
                "quote anchor; it cannot be traced to its source text",
                where(f"claim:{idx}"))


def _kb_c002(kb: KnowledgeBase, config, where):
    for fw_node in sorted(kb.coverage):
        if fw_node not in kb.framework.nodes:
            yield Diagnostic("C002", SEVERITY_ERROR,
                             f"coverage target {fw_node!r} is not a framework node",
                             where(f"cover:{fw_node}"))
        for mid in kb.coverage[fw_node]:
            if mid not in kb.models:
                yield Diagnostic("C002", SEVERITY_ERROR,
                                 f"coverage names unknown model {mid!r}",
                                 where(f"cover:{fw_node}"))


def run_checks(target, config: Optional[CheckConfig] = None,
               spans: Optional[Mapping] = None) -> CheckReport:
    """Run every enabled pass over a model or a knowledge base.

    ``spans`` is the side table produced by the parser; when given, each
    finding points back into the source text.
    """
    config = config or CheckConfig()
    spans = spans or {}
    diagnostics = []

    def scoped(prefix: str, label: str):
        def where(key: str):
            return spans.get(prefix + key)

        return where, label

    if isinstance(target, CausalModel):
        jobs = [(target, "", "")]
        kb = None
    elif isinstance(target, KnowledgeBase):
        kb = target
        jobs = [(kb.framework, "framework/", "framework: ")]
        jobs += [
            (kb.models[mid], f"{mid}/", f"model '{mid}': ")
            for mid in sorted(kb.models)
        ]
    else:
        raise InvalidArgument(f"cannot check {target!r}")

    for model, prefix, label in jobs:
        where, _ = scoped(prefix, label)
        for code, impl in _MODEL_PASSES:
            if not config.is_enabled(code):
                continue
            for diag in impl(model, config, where):
                if label:
                    diag = Diagnostic(diag.code, diag.severity,
                                      label + diag.message, diag.span, diag.related)
                diagnostics.append(diag)

    if isinstance(target, KnowledgeBase):
        where, _ = scoped("", "")
        for code, impl in (("C002", _kb_c002), ("W108", _pass_w108),
                           ("W112", _pass_w112)):
            if config.is_enabled(code):
                diagnostics.extend(impl(target, config, where))

    diagnostics = sort_diagnostics(diagnostics)
    summary = {}
    for diag in diagnostics:
        summary[diag.code] = summary.get(diag.code, 0) + 1
    return CheckReport(diagnostics, dict(sorted(summary.items())))
