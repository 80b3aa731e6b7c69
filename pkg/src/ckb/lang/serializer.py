"""Canonical text form for models.

The output is deterministic byte-for-byte: nodes in topological order
(lexicographic tie-break), arcs sorted by endpoints, cpds and dictionary
entries sorted by key, 2-space indentation, LF line endings. Parsing the
output reproduces the model exactly, and re-serializing gives identical
bytes, which keeps textual diffs meaningful.
"""

from __future__ import annotations

import re

from ..core import BOOLEAN_STATES, CausalModel, Node, topological_order
from ..errors import InvalidArgument
from ..param import Gate, NoisyMax, NoisyOr, Table

_IDENT_OK = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def _quote(text: str) -> str:
    out = text.replace("\\", "\\\\").replace('"', '\\"')
    out = out.replace("\n", "\\n").replace("\t", "\\t")
    return f'"{out}"'


def _state_token(name: str) -> str:
    return name if _IDENT_OK.match(name) else _quote(name)


def _number(value: float) -> str:
    return repr(float(value))


def _node_line(node: Node) -> str:
    parts = [f"node {node.id}"]
    if node.title:
        parts.append(_quote(node.title))
    attrs = []
    if node.states != BOOLEAN_STATES:
        attrs.append("states=(" + ", ".join(_state_token(s) for s in node.states) + ")")
    if node.active_state != 0:
        attrs.append(f"active={node.active_state}")
    if node.category:
        attrs.append(f"category={_quote(node.category)}")
    if node.boolean_note:
        attrs.append(f"boolean={_quote(node.boolean_note)}")
    if node.dictionary_key:
        attrs.append(f"dict_key={node.dictionary_key}")
    if node.ordered:
        attrs.append("ordered")
    if attrs:
        parts.append("[" + ", ".join(attrs) + "]")
    return " ".join(parts) + ";"


def _strength_token(strength) -> str:
    if strength.level == "explicit":
        return _number(strength.value)
    return strength.level


def _arc_line(arc) -> str:
    attrs = []
    if arc.influence.kind != "positive":
        if arc.influence.kind == "other":
            attrs.append(f"influence=other({_quote(arc.influence.label)})")
        else:
            attrs.append(f"influence={arc.influence.kind}")
    if arc.strength is not None:
        attrs.append(f"strength={_strength_token(arc.strength)}")
    if not arc.significant:
        attrs.append("significant=false")
    if arc.reverse is not None:
        attrs.append(f"reverse={_quote(arc.reverse.text)}")
        if not arc.reverse.significant:
            attrs.append("reverse_significant=false")
    if arc.note:
        attrs.append(f"note={_quote(arc.note)}")
    if arc.provenance:
        attrs.append(
            "provenance=(" + ", ".join(_quote(ref) for ref in arc.provenance) + ")"
        )
    head = f"arc {arc.source} -> {arc.target}"
    if attrs:
        head += " [" + ", ".join(attrs) + "]"
    return head + ";"


def _row_text(row) -> str:
    return "(" + ", ".join(_number(v) for v in row) + ")"


def _cpd_line(node_id: str, dist) -> str:
    if isinstance(dist, Table):
        body = "table(" + ", ".join(_row_text(r) for r in dist.rows) + ")"
    elif isinstance(dist, NoisyOr):
        entries = [f"leak={_number(dist.leak)}"]
        for parent in dist.parents:
            if parent in dist.pos:
                entries.append(f"{parent}={_number(dist.pos[parent])}")
            else:
                entries.append(f"!{parent}={_number(dist.neg[parent])}")
        body = "noisy_or(" + ", ".join(entries) + ")"
    elif isinstance(dist, NoisyMax):
        entries = [f"leak={_row_text(dist.leak)}"]
        for parent in dist.parents:
            entries.append(f"{parent}={_row_text(dist.tables[parent])}")
        entries.append("ranking=(" + ", ".join(dist.ranking) + ")")
        body = "noisy_max(" + ", ".join(entries) + ")"
    elif isinstance(dist, Gate):
        body = f"gate({dist.kind}"
        if dist.leak != 0.0:
            body += f", leak={_number(dist.leak)}"
        body += ")"
    else:
        raise InvalidArgument(f"cannot serialize distribution {dist!r}")
    return f"cpd {node_id} = {body};"


def _dict_block(key: str, entry, indent: str) -> list:
    if "->" in key:
        src, dst = key.split("->", 1)
        head = f"dict {src} -> {dst} {{"
    else:
        head = f"dict {key} {{"
    lines = [indent + head]
    inner = indent + "  "
    if entry.definition:
        lines.append(f"{inner}definition = {_quote(entry.definition)};")
    lines.append(f"{inner}status = {entry.status};")
    for ref in entry.references:
        item = f"{inner}ref {_quote(ref.citation_key)} {_quote(ref.quote_anchor)}"
        if ref.note:
            item += f" {_quote(ref.note)}"
        lines.append(item + ";")
    lines.append(indent + "}")
    return lines


def serialize_model(model: CausalModel) -> str:
    lines = [f"model {model.id} {{", "  meta {"]
    if model.purpose:
        lines.append(f"    purpose = {_quote(model.purpose)};")
    if model.scope:
        lines.append(f"    scope = {_quote(model.scope)};")
    lines.append(f"    status = {model.status};")
    if model.version_label:
        lines.append(f"    version = {_quote(model.version_label)};")
    for key in sorted(model.meta):
        lines.append(f"    {key} = {_quote(model.meta[key])};")
    lines.append("  }")
    for nid in topological_order(model):
        lines.append("  " + _node_line(model.nodes[nid]))
    for key in sorted(model.arcs):
        lines.append("  " + _arc_line(model.arcs[key]))
    if model.key_start:
        lines.append("  key_start " + ", ".join(model.key_start) + ";")
    if model.key_end:
        lines.append("  key_end " + ", ".join(model.key_end) + ";")
    for nid in sorted(model.distributions):
        lines.append("  " + _cpd_line(nid, model.distributions[nid]))
    for key in sorted(model.dictionary):
        lines.extend(_dict_block(key, model.dictionary[key], "  "))
    lines.append("}")
    return "\n".join(lines) + "\n"
