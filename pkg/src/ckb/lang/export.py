"""Graphviz DOT and JSON exporters, plus the JSON import path.

JSON documents carry ``"schema": "1"`` and sorted keys; importing an
exported document reproduces the original value exactly.

DOT conventions (fixed, so renders are comparable across runs):

* negative influence      -> ``arrowhead=tee``
* enabling influence      -> ``arrowhead=odot``
* other(label) influence  -> edge ``label``
* insignificant arcs      -> ``style=dashed``
* node categories         -> fill colors from an 8-color palette assigned
  to the model's categories in sorted order (uncategorized: white)
"""

from __future__ import annotations

import json

from ..core import (
    Arc,
    CausalModel,
    Citation,
    Claim,
    DictionaryEntry,
    Influence,
    KnowledgeBase,
    Node,
    Reference,
    ReverseNote,
    Strength,
    topological_order,
)
from ..errors import InvalidArgument
from ..param import Gate, NoisyMax, NoisyOr, Table

SCHEMA_VERSION = "1"

PALETTE = (
    "#f4cccc",  # soft red
    "#fce5cd",  # orange
    "#fff2cc",  # yellow
    "#d9ead3",  # green
    "#d0e0e3",  # teal
    "#cfe2f3",  # blue
    "#d9d2e9",  # violet
    "#ead1dc",  # magenta
)


def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(model: CausalModel) -> str:
    categories = sorted({n.category for n in model.nodes.values() if n.category})
    color = {c: PALETTE[i % len(PALETTE)] for i, c in enumerate(categories)}
    lines = [f"digraph {model.id} {{"]
    for nid in topological_order(model):
        node = model.nodes[nid]
        attrs = [f"label={_dot_quote(node.display_title)}"]
        if node.category:
            attrs.append("style=filled")
            attrs.append(f'fillcolor="{color[node.category]}"')
        lines.append(f"  {_dot_quote(nid)} [{', '.join(attrs)}];")
    for src, dst in sorted(model.arcs):
        arc = model.arcs[(src, dst)]
        attrs = []
        if arc.influence.kind == "negative":
            attrs.append("arrowhead=tee")
        elif arc.influence.kind == "enabling":
            attrs.append("arrowhead=odot")
        elif arc.influence.kind == "other":
            attrs.append(f"label={_dot_quote(arc.influence.label)}")
        if not arc.significant:
            attrs.append("style=dashed")
        suffix = f" [{', '.join(attrs)}]" if attrs else ""
        lines.append(f"  {_dot_quote(src)} -> {_dot_quote(dst)}{suffix};")
    lines.append("}")
    return "\n".join(lines) + "\n"


# -- JSON encoding -----------------------------------------------------------


def _influence_dict(influence: Influence) -> dict:
    return {"kind": influence.kind, "label": influence.label}


def _node_dict(node: Node) -> dict:
    return {
        "id": node.id,
        "title": node.title,
        "states": list(node.states),
        "active_state": node.active_state,
        "category": node.category,
        "boolean_note": node.boolean_note,
        "dictionary_key": node.dictionary_key,
        "ordered": node.ordered,
    }


def _arc_dict(arc: Arc) -> dict:
    return {
        "source": arc.source,
        "target": arc.target,
        "influence": _influence_dict(arc.influence),
        "strength": None
        if arc.strength is None
        else {"level": arc.strength.level, "value": arc.strength.value},
        "significant": arc.significant,
        "reverse": None
        if arc.reverse is None
        else {"significant": arc.reverse.significant, "text": arc.reverse.text},
        "note": arc.note,
        "provenance": list(arc.provenance),
    }


def _entry_dict(entry: DictionaryEntry) -> dict:
    return {
        "definition": entry.definition,
        "status": entry.status,
        "references": [
            {"citation_key": r.citation_key, "quote_anchor": r.quote_anchor,
             "note": r.note}
            for r in entry.references
        ],
    }


def _dist_dict(dist) -> dict:
    if isinstance(dist, Table):
        return {
            "kind": "table",
            "parents": list(dist.parents),
            "rows": [list(r) for r in dist.rows],
        }
    if isinstance(dist, NoisyOr):
        return {
            "kind": "noisy_or",
            "pos": {k: dist.pos[k] for k in sorted(dist.pos)},
            "neg": {k: dist.neg[k] for k in sorted(dist.neg)},
            "leak": dist.leak,
        }
    if isinstance(dist, NoisyMax):
        return {
            "kind": "noisy_max",
            "tables": {k: list(v) for k, v in sorted(dist.tables.items())},
            "ranking": list(dist.ranking),
            "leak": list(dist.leak),
        }
    if isinstance(dist, Gate):
        return {
            "kind": "gate",
            "gate": dist.kind,
            "parents": list(dist.parents),
            "leak": dist.leak,
        }
    raise InvalidArgument(f"cannot export distribution {dist!r}")


def model_to_dict(model: CausalModel) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "kind": "model",
        "id": model.id,
        "purpose": model.purpose,
        "scope": model.scope,
        "status": model.status,
        "version_label": model.version_label,
        "meta": {k: model.meta[k] for k in sorted(model.meta)},
        "nodes": [_node_dict(model.nodes[nid]) for nid in sorted(model.nodes)],
        "arcs": [_arc_dict(model.arcs[key]) for key in sorted(model.arcs)],
        "key_start": list(model.key_start),
        "key_end": list(model.key_end),
        "dictionary": {
            key: _entry_dict(model.dictionary[key]) for key in sorted(model.dictionary)
        },
        "distributions": {
            nid: _dist_dict(model.distributions[nid])
            for nid in sorted(model.distributions)
        },
    }


def _claim_dict(claim: Claim) -> dict:
    return {
        "cause": claim.cause,
        "effect": claim.effect,
        "influence": _influence_dict(claim.influence),
        "knowledge_type": claim.knowledge_type,
        "source_kind": claim.source_kind,
        "source_detail": claim.source_detail,
        "citation": None
        if claim.citation is None
        else {
            "citation_key": claim.citation.citation_key,
            "quote_anchor": claim.citation.quote_anchor,
        },
    }


def claim_to_dict(claim: Claim) -> dict:
    return _claim_dict(claim)


def kb_to_dict(kb: KnowledgeBase) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "kind": "kb",
        "id": kb.id,
        "documentation": kb.documentation,
        "framework": model_to_dict(kb.framework),
        "coverage": {k: list(v) for k, v in sorted(kb.coverage.items())},
        "models": {mid: model_to_dict(kb.models[mid]) for mid in sorted(kb.models)},
        "claims": [_claim_dict(c) for c in kb.claims],
    }


def export_json(target) -> str:
    if isinstance(target, CausalModel):
        doc = model_to_dict(target)
    elif isinstance(target, KnowledgeBase):
        doc = kb_to_dict(target)
    else:
        raise InvalidArgument(f"cannot export {target!r}")
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# -- JSON decoding -----------------------------------------------------------


def _influence_from(data: dict) -> Influence:
    return Influence(data["kind"], data.get("label", ""))


def _node_from(data: dict) -> Node:
    return Node(
        id=data["id"],
        title=data.get("title", ""),
        states=tuple(data.get("states", ("true", "false"))),
        active_state=data.get("active_state", 0),
        category=data.get("category", ""),
        boolean_note=data.get("boolean_note", ""),
        dictionary_key=data.get("dictionary_key", ""),
        ordered=data.get("ordered", False),
    )


def _arc_from(data: dict) -> Arc:
    strength = data.get("strength")
    reverse = data.get("reverse")
    return Arc(
        source=data["source"],
        target=data["target"],
        influence=_influence_from(data.get("influence", {"kind": "positive"})),
        strength=None
        if strength is None
        else Strength(strength["level"], strength.get("value")),
        significant=data.get("significant", True),
        reverse=None
        if reverse is None
        else ReverseNote(reverse.get("significant", True), reverse.get("text", "")),
        note=data.get("note", ""),
        provenance=tuple(data.get("provenance", ())),
    )


def _entry_from(data: dict) -> DictionaryEntry:
    return DictionaryEntry(
        definition=data.get("definition", ""),
        references=tuple(
            Reference(r["citation_key"], r["quote_anchor"], r.get("note", ""))
            for r in data.get("references", ())
        ),
        status=data.get("status", "stub"),
    )


def _dist_from(data: dict):
    kind = data["kind"]
    if kind == "table":
        return Table(tuple(data["parents"]), tuple(tuple(r) for r in data["rows"]))
    if kind == "noisy_or":
        return NoisyOr(pos=data["pos"], neg=data["neg"], leak=data["leak"])
    if kind == "noisy_max":
        return NoisyMax(
            tables={k: tuple(v) for k, v in data["tables"].items()},
            ranking=tuple(data["ranking"]),
            leak=tuple(data["leak"]),
        )
    if kind == "gate":
        return Gate(kind=data["gate"], parents=tuple(data["parents"]),
                    leak=data["leak"])
    raise InvalidArgument(f"unknown distribution kind {kind!r}")


def model_from_dict(data: dict) -> CausalModel:
    return CausalModel(
        id=data["id"],
        purpose=data.get("purpose", ""),
        scope=data.get("scope", ""),
        status=data.get("status", "incomplete_draft"),
        nodes=[_node_from(n) for n in data.get("nodes", ())],
        arcs=[_arc_from(a) for a in data.get("arcs", ())],
        dictionary={
            k: _entry_from(v) for k, v in data.get("dictionary", {}).items()
        },
        key_start=tuple(data.get("key_start", ())),
        key_end=tuple(data.get("key_end", ())),
        distributions={
            k: _dist_from(v) for k, v in data.get("distributions", {}).items()
        },
        version_label=data.get("version_label", ""),
        meta=data.get("meta", {}),
    )


def _claim_from(data: dict) -> Claim:
    citation = data.get("citation")
    return Claim(
        cause=data["cause"],
        effect=data["effect"],
        influence=_influence_from(data.get("influence", {"kind": "positive"})),
        knowledge_type=data.get("knowledge_type", "direct"),
        source_kind=data.get("source_kind", "expert"),
        source_detail=data.get("source_detail", ""),
        citation=None
        if citation is None
        else Citation(citation["citation_key"], citation.get("quote_anchor", "")),
    )


def kb_from_dict(data: dict) -> KnowledgeBase:
    return KnowledgeBase(
        id=data["id"],
        framework=model_from_dict(data["framework"]),
        coverage={k: tuple(v) for k, v in data.get("coverage", {}).items()},
        models={k: model_from_dict(v) for k, v in data.get("models", {}).items()},
        claims=tuple(_claim_from(c) for c in data.get("claims", ())),
        documentation=data.get("documentation", ""),
    )


def import_json(text: str):
    """Inverse of export_json for both document kinds."""
    data = json.loads(text)
    if data.get("schema") != SCHEMA_VERSION:
        raise InvalidArgument(f"unsupported schema {data.get('schema')!r}")
    if data.get("kind") == "model":
        return model_from_dict(data)
    if data.get("kind") == "kb":
        return kb_from_dict(data)
    raise InvalidArgument(f"unknown document kind {data.get('kind')!r}")
