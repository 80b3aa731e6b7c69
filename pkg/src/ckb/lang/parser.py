"""Recursive-descent parser for .ckb model files and .ckbkb manifests.

Parsing is total: malformed input yields diagnostics, never exceptions.
The parser recovers at statement boundaries (semicolons and closing
braces) so one run reports as many problems as it can.

Error codes
    E001  syntax error / invalid value
    E002  duplicate element (node, arc, cpd, dictionary key, model)
    E003  dangling reference (arc endpoint, key variable, cpd/dict target)
    E004  declared arcs form a cycle (message carries the node sequence)
    E005  unknown enumerated keyword (status, influence, strength, ...)
    E006  CPD does not fit its node (parents, arity, values)
    E010  manifest names a file that cannot be loaded
    E011  coverage target is not a framework node
    E012  invalid claim
    E013  model file id differs from the manifest's declared id
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .. import core
from ..core import (
    Arc,
    Citation,
    Claim,
    CausalModel,
    DictionaryEntry,
    ENABLING,
    Influence,
    KnowledgeBase,
    NEGATIVE,
    Node,
    POSITIVE,
    Reference,
    ReverseNote,
    Strength,
    arc_key,
    can_reach,
    explicit_strength,
    other_influence,
    shortest_lex_path,
)
from ..diagnostics import SEVERITY_ERROR, Diagnostic, SourceSpan
from ..errors import CkbError
from ..param import Gate, NoisyMax, NoisyOr, Table
from . import lexer
from .lexer import EOF, IDENT, NUMBER, PUNCT, STRING, Token

_INFLUENCE_WORDS = {"positive": POSITIVE, "negative": NEGATIVE, "enabling": ENABLING}
_BOOL_WORDS = {"true": True, "false": False}


@dataclass(frozen=True)
class ParseResult:
    model: Optional[CausalModel]
    diagnostics: tuple
    spans: dict

    @property
    def ok(self) -> bool:
        return self.model is not None


@dataclass(frozen=True)
class KBParseResult:
    kb: Optional[KnowledgeBase]
    diagnostics: tuple
    spans: dict

    @property
    def ok(self) -> bool:
        return self.kb is not None


class _SyncError(Exception):
    """Internal: abandon the current statement and resynchronize."""


# -- raw parse values ------------------------------------------------------


@dataclass
class _Value:
    kind: str  # ident | number | string | tuple | call
    data: object
    span: SourceSpan


@dataclass
class _Attr:
    name: str
    value: Optional[_Value]
    span: SourceSpan


class _Parser:
    def __init__(self, text: str, path: str):
        self.path = path
        self.tokens, self.diagnostics = lexer.tokenize(text, path)
        self.pos = 0

    # -- token plumbing ----------------------------------------------

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != EOF:
            self.pos += 1
        return tok

    def at(self, kind: str, value: Optional[str] = None) -> bool:
        tok = self.peek()
        return tok.kind == kind and (value is None or tok.value == value)

    def accept(self, kind: str, value: Optional[str] = None) -> Optional[Token]:
        if self.at(kind, value):
            return self.advance()
        return None

    def expect(self, kind: str, value: Optional[str] = None, what: str = "") -> Token:
        if self.at(kind, value):
            return self.advance()
        tok = self.peek()
        want = what or (value if value is not None else kind)
        shown = tok.value if tok.kind != EOF else "end of input"
        self.error("E001", f"expected {want}, found {shown!r}", tok.span(self.path))
        raise _SyncError()

    def error(self, code: str, message: str, span: Optional[SourceSpan]):
        self.diagnostics.append(Diagnostic(code, SEVERITY_ERROR, message, span))

    def span_between(self, first: Token, last: Token) -> SourceSpan:
        return SourceSpan(
            self.path, first.line, first.col, last.end_line, last.end_col
        )

    def sync_statement(self):
        """Skip to just past the next ';', or stop before '}' / EOF."""
        while True:
            tok = self.peek()
            if tok.kind == EOF or (tok.kind == PUNCT and tok.value == "}"):
                return
            self.advance()
            if tok.kind == PUNCT and tok.value == ";":
                return

    # -- value grammar -------------------------------------------------

    _MAX_VALUE_DEPTH = 64  # keeps adversarial nesting off the interpreter stack

    def parse_value(self, depth: int = 0) -> _Value:
        tok = self.peek()
        if depth > self._MAX_VALUE_DEPTH:
            self.error("E001", "value nesting too deep", tok.span(self.path))
            raise _SyncError()
        if tok.kind == STRING:
            self.advance()
            return _Value("string", tok.value, tok.span(self.path))
        if tok.kind == NUMBER:
            self.advance()
            return _Value("number", float(tok.value), tok.span(self.path))
        if tok.kind == IDENT:
            self.advance()
            if self.at(PUNCT, "("):
                self.advance()
                arg = self.expect(STRING, what="a quoted label")
                close = self.expect(PUNCT, ")")
                return _Value(
                    "call", (tok.value, arg.value), self.span_between(tok, close)
                )
            return _Value("ident", tok.value, tok.span(self.path))
        if tok.kind == PUNCT and tok.value == "(":
            self.advance()
            items = []
            if not self.at(PUNCT, ")"):
                items.append(self.parse_value(depth + 1))
                while self.accept(PUNCT, ","):
                    items.append(self.parse_value(depth + 1))
            close = self.expect(PUNCT, ")")
            return _Value("tuple", items, self.span_between(tok, close))
        self.error(
            "E001", f"expected a value, found {tok.value!r}", tok.span(self.path)
        )
        raise _SyncError()

    def parse_attr_block(self) -> list:
        """Bracketed attribute list: [name, name=value, ...]."""
        attrs = []
        if not self.accept(PUNCT, "["):
            return attrs
        if not self.at(PUNCT, "]"):
            while True:
                name = self.expect(IDENT, what="an attribute name")
                value = None
                if self.accept(PUNCT, "="):
                    value = self.parse_value()
                end_span = value.span if value else name.span(self.path)
                attrs.append(
                    _Attr(
                        name.value,
                        value,
                        SourceSpan(
                            self.path,
                            name.line,
                            name.col,
                            end_span.line_end,
                            end_span.col_end,
                        ),
                    )
                )
                if not self.accept(PUNCT, ","):
                    break
        self.expect(PUNCT, "]")
        return attrs


# -- model files -----------------------------------------------------------


@dataclass
class _ModelBody:
    meta: list = field(default_factory=list)  # (key, value_str_or_value, span)
    nodes: list = field(default_factory=list)
    arcs: list = field(default_factory=list)
    key_start: list = field(default_factory=list)  # (id, span)
    key_end: list = field(default_factory=list)
    cpds: list = field(default_factory=list)  # (node id, callee, args, span)
    dicts: list = field(default_factory=list)  # (key, body, span)


def _parse_model_body(p: _Parser) -> _ModelBody:
    body = _ModelBody()
    while not p.at(PUNCT, "}") and not p.at(EOF):
        try:
            _parse_model_statement(p, body)
        except _SyncError:
            p.sync_statement()
    return body


def _parse_model_statement(p: _Parser, body: _ModelBody):
    tok = p.peek()
    if tok.kind != IDENT:
        p.error("E001", f"expected a statement, found {tok.value!r}", tok.span(p.path))
        p.advance()
        raise _SyncError()
    keyword = tok.value
    if keyword == "meta":
        p.advance()
        p.expect(PUNCT, "{")
        while not p.at(PUNCT, "}") and not p.at(EOF):
            try:
                key = p.expect(IDENT, what="a meta key")
                p.expect(PUNCT, "=")
                value = p.parse_value()
                p.expect(PUNCT, ";")
                body.meta.append((key.value, value, key.span(p.path)))
            except _SyncError:
                p.sync_statement()
        p.expect(PUNCT, "}")
        return
    if keyword == "node":
        p.advance()
        name = p.expect(IDENT, what="a node id")
        title = p.accept(STRING)
        attrs = p.parse_attr_block()
        end = p.expect(PUNCT, ";")
        body.nodes.append(
            (name.value, title.value if title else "", attrs, p.span_between(tok, end))
        )
        return
    if keyword == "arc":
        p.advance()
        src = p.expect(IDENT, what="a source node id")
        p.expect(PUNCT, "->")
        dst = p.expect(IDENT, what="a target node id")
        attrs = p.parse_attr_block()
        end = p.expect(PUNCT, ";")
        body.arcs.append((src.value, dst.value, attrs, p.span_between(tok, end)))
        return
    if keyword in ("key_start", "key_end"):
        p.advance()
        ids = [p.expect(IDENT, what="a node id")]
        while p.accept(PUNCT, ","):
            ids.append(p.expect(IDENT, what="a node id"))
        end = p.expect(PUNCT, ";")
        target = body.key_start if keyword == "key_start" else body.key_end
        for ident in ids:
            target.append((ident.value, ident.span(p.path)))
        return
    if keyword == "cpd":
        p.advance()
        name = p.expect(IDENT, what="a node id")
        p.expect(PUNCT, "=")
        callee = p.expect(IDENT, what="a cpd kind")
        p.expect(PUNCT, "(")
        args = []
        if not p.at(PUNCT, ")"):
            while True:
                negated = p.accept(PUNCT, "!") is not None
                if p.at(IDENT) and p.tokens[p.pos + 1].kind == PUNCT \
                        and p.tokens[p.pos + 1].value == "=":
                    key = p.advance()
                    p.advance()  # '='
                    args.append((negated, key.value, p.parse_value()))
                else:
                    args.append((negated, None, p.parse_value()))
                if not p.accept(PUNCT, ","):
                    break
        p.expect(PUNCT, ")")
        end = p.expect(PUNCT, ";")
        body.cpds.append((name.value, callee.value, args, p.span_between(tok, end)))
        return
    if keyword == "dict":
        p.advance()
        first = p.expect(IDENT, what="a node id or arc")
        if p.accept(PUNCT, "->"):
            second = p.expect(IDENT, what="a target node id")
            key = (first.value, second.value)
        else:
            key = first.value
        p.expect(PUNCT, "{")
        entry = {"definition": None, "status": None, "refs": []}
        while not p.at(PUNCT, "}") and not p.at(EOF):
            try:
                word = p.expect(IDENT, what="definition, status or ref")
                if word.value == "definition":
                    p.expect(PUNCT, "=")
                    value = p.expect(STRING, what="a quoted definition")
                    p.expect(PUNCT, ";")
                    entry["definition"] = value.value
                elif word.value == "status":
                    p.expect(PUNCT, "=")
                    value = p.expect(IDENT, what="a dictionary status")
                    p.expect(PUNCT, ";")
                    entry["status"] = (value.value, value.span(p.path))
                elif word.value == "ref":
                    cite = p.expect(STRING, what="a citation key")
                    anchor = p.expect(STRING, what="a quote anchor")
                    note = p.accept(STRING)
                    p.expect(PUNCT, ";")
                    entry["refs"].append(
                        (cite.value, anchor.value, note.value if note else "",
                         cite.span(p.path))
                    )
                else:
                    p.error(
                        "E001",
                        f"unknown dictionary field {word.value!r}",
                        word.span(p.path),
                    )
                    raise _SyncError()
            except _SyncError:
                p.sync_statement()
        end = p.expect(PUNCT, "}")
        body.dicts.append((key, entry, p.span_between(tok, end)))
        return
    p.error("E001", f"unknown statement keyword {keyword!r}", tok.span(p.path))
    p.advance()
    raise _SyncError()


# -- assembly ---------------------------------------------------------------


def _tuple_items(value: _Value):
    if value.kind != "tuple":
        return None
    return value.data


def _as_string(p, value: _Value, what: str) -> Optional[str]:
    if value.kind == "string":
        return value.data
    p.error("E001", f"{what} must be a quoted string", value.span)
    return None


def _as_bool(p, value: _Value, what: str) -> Optional[bool]:
    if value.kind == "ident" and value.data in _BOOL_WORDS:
        return _BOOL_WORDS[value.data]
    p.error("E001", f"{what} must be true or false", value.span)
    return None


def _as_number(p, value: _Value, what: str) -> Optional[float]:
    if value.kind == "number":
        return value.data
    p.error("E001", f"{what} must be a number", value.span)
    return None


def _assemble_node(p: _Parser, name, title, attrs, span) -> Optional[Node]:
    fields = {"id": name, "title": title}
    for attr in attrs:
        if attr.name == "states":
            items = _tuple_items(attr.value) if attr.value else None
            if items is None:
                p.error("E001", "states must be a (…) list", attr.span)
                continue
            states = []
            for item in items:
                if item.kind in ("ident", "string"):
                    states.append(item.data)
                else:
                    p.error("E001", "state names must be idents or strings", item.span)
            fields["states"] = tuple(states)
        elif attr.name == "active":
            if (
                attr.value is None
                or attr.value.kind != "number"
                or not float(attr.value.data).is_integer()
            ):
                p.error("E001", "active must be a state index", attr.span)
                continue
            fields["active_state"] = int(attr.value.data)
        elif attr.name == "category":
            if attr.value is not None:
                text = _as_string(p, attr.value, "category")
                if text is not None:
                    fields["category"] = text
        elif attr.name == "boolean":
            if attr.value is not None:
                text = _as_string(p, attr.value, "boolean note")
                if text is not None:
                    fields["boolean_note"] = text
        elif attr.name == "dict_key":
            if attr.value is None or attr.value.kind != "ident":
                p.error("E001", "dict_key must be a node id", attr.span)
                continue
            fields["dictionary_key"] = attr.value.data
        elif attr.name == "ordered":
            if attr.value is not None:
                p.error("E001", "ordered is a bare flag", attr.span)
                continue
            fields["ordered"] = True
        else:
            p.error("E001", f"unknown node attribute {attr.name!r}", attr.span)
    try:
        return Node(**fields)
    except CkbError as exc:
        p.error("E001", str(exc), span)
        return None


def _parse_influence(p, value: _Value) -> Optional[Influence]:
    if value.kind == "ident":
        if value.data in _INFLUENCE_WORDS:
            return _INFLUENCE_WORDS[value.data]
        p.error("E005", f"unknown influence keyword {value.data!r}", value.span)
        return None
    if value.kind == "call" and value.data[0] == "other":
        try:
            return other_influence(value.data[1])
        except CkbError as exc:
            p.error("E001", str(exc), value.span)
            return None
    p.error("E005", "influence must be positive/negative/enabling/other(…)", value.span)
    return None


def _parse_strength(p, value: _Value) -> Optional[Strength]:
    if value.kind == "ident":
        if value.data in core.STRENGTH_LEVELS:
            return Strength(value.data)
        p.error("E005", f"unknown strength level {value.data!r}", value.span)
        return None
    if value.kind == "number":
        try:
            return explicit_strength(value.data)
        except CkbError as exc:
            p.error("E001", str(exc), value.span)
            return None
    p.error("E005", "strength must be a level keyword or a probability", value.span)
    return None


def _assemble_arc(p: _Parser, src, dst, attrs, span) -> Optional[Arc]:
    fields = {"source": src, "target": dst}
    reverse_text = None
    reverse_significant = True
    for attr in attrs:
        if attr.value is None:
            p.error("E001", f"arc attribute {attr.name!r} needs a value", attr.span)
            continue
        if attr.name == "influence":
            influence = _parse_influence(p, attr.value)
            if influence is not None:
                fields["influence"] = influence
        elif attr.name == "strength":
            strength = _parse_strength(p, attr.value)
            if strength is not None:
                fields["strength"] = strength
        elif attr.name == "significant":
            flag = _as_bool(p, attr.value, "significant")
            if flag is not None:
                fields["significant"] = flag
        elif attr.name == "reverse":
            text = _as_string(p, attr.value, "reverse note")
            if text is not None:
                reverse_text = text
        elif attr.name == "reverse_significant":
            flag = _as_bool(p, attr.value, "reverse_significant")
            if flag is not None:
                reverse_significant = flag
                if reverse_text is None:
                    reverse_text = ""
        elif attr.name == "note":
            text = _as_string(p, attr.value, "note")
            if text is not None:
                fields["note"] = text
        elif attr.name == "provenance":
            items = _tuple_items(attr.value)
            if items is None:
                p.error("E001", "provenance must be a (…) list", attr.span)
                continue
            refs = []
            for item in items:
                if item.kind in ("ident", "string"):
                    refs.append(item.data)
                else:
                    p.error("E001", "claim references must be strings", item.span)
            fields["provenance"] = tuple(refs)
        else:
            p.error("E001", f"unknown arc attribute {attr.name!r}", attr.span)
    if reverse_text is not None:
        fields["reverse"] = ReverseNote(reverse_significant, reverse_text)
    try:
        return Arc(**fields)
    except CkbError as exc:
        p.error("E001", str(exc), span)
        return None


def _row_from_value(p, value: _Value) -> Optional[tuple]:
    items = _tuple_items(value)
    if items is None:
        p.error("E006", "expected a (…) probability row", value.span)
        return None
    row = []
    for item in items:
        if item.kind != "number":
            p.error("E006", "rows hold numbers only", item.span)
            return None
        row.append(item.data)
    return tuple(row)


def _assemble_cpd(p, model_nodes, parents, node_id, callee, args, span):
    node = model_nodes[node_id]
    try:
        if callee == "table":
            rows = []
            for negated, key, value in args:
                if negated or key is not None:
                    p.error("E006", "table takes rows only", span)
                    return None
                row = _row_from_value(p, value)
                if row is None:
                    return None
                rows.append(row)
            expected = 1
            for pid in parents:
                expected *= len(model_nodes[pid].states)
            if len(rows) != expected:
                p.error(
                    "E006",
                    f"table for {node_id!r} needs {expected} rows "
                    f"(one per parent combination), got {len(rows)}",
                    span,
                )
                return None
            if any(len(r) != len(node.states) for r in rows):
                p.error(
                    "E006",
                    f"table rows for {node_id!r} must have {len(node.states)} entries",
                    span,
                )
                return None
            return Table(parents, tuple(rows))
        if callee == "noisy_or":
            if len(node.states) != 2:
                p.error("E006", f"noisy_or needs a binary child, {node_id!r} is not", span)
                return None
            leak = 0.0
            pos, neg = {}, {}
            for negated, key, value in args:
                if key is None:
                    p.error("E006", "noisy_or takes name=probability entries", span)
                    return None
                number = _as_number(p, value, key)
                if number is None:
                    return None
                if key == "leak" and not negated:
                    leak = number
                else:
                    (neg if negated else pos)[key] = number
            got = set(pos) | set(neg)
            if got != set(parents):
                p.error(
                    "E006",
                    f"noisy_or parents {sorted(got)} do not match the graph "
                    f"parents {list(parents)} of {node_id!r}",
                    span,
                )
                return None
            return NoisyOr(pos=pos, neg=neg, leak=leak)
        if callee == "noisy_max":
            if not node.ordered:
                p.error(
                    "E006",
                    f"noisy_max needs ordered states: declare node {node_id!r} "
                    "with the ordered flag",
                    span,
                )
                return None
            leak = None
            ranking = None
            tables = {}
            for negated, key, value in args:
                if negated or key is None:
                    p.error("E006", "noisy_max takes name=(…) entries", span)
                    return None
                if key == "ranking":
                    items = _tuple_items(value)
                    if items is None or any(i.kind != "ident" for i in items):
                        p.error("E006", "ranking must list parent ids", value.span)
                        return None
                    ranking = tuple(i.data for i in items)
                    continue
                row = _row_from_value(p, value)
                if row is None:
                    return None
                if key == "leak":
                    leak = row
                else:
                    tables[key] = row
            if leak is None or len(leak) != len(node.states):
                p.error(
                    "E006",
                    f"noisy_max needs a leak row with {len(node.states)} entries",
                    span,
                )
                return None
            if set(tables) != set(parents):
                p.error(
                    "E006",
                    f"noisy_max parents {sorted(tables)} do not match the graph "
                    f"parents {list(parents)} of {node_id!r}",
                    span,
                )
                return None
            if ranking is None:
                ranking = parents
            return NoisyMax(tables=tables, ranking=ranking, leak=leak)
        if callee == "gate":
            kind = None
            leak = 0.0
            for negated, key, value in args:
                if negated:
                    p.error("E006", "gate entries cannot be negated", span)
                    return None
                if key is None:
                    if value.kind == "ident" and value.data in ("or", "and"):
                        kind = value.data
                    else:
                        p.error("E005", "gate kind must be or/and", value.span)
                        return None
                elif key == "leak":
                    number = _as_number(p, value, "leak")
                    if number is None:
                        return None
                    leak = number
                else:
                    p.error("E006", f"unknown gate argument {key!r}", value.span)
                    return None
            if kind is None:
                p.error("E005", "gate needs a kind: gate(or) or gate(and)", span)
                return None
            if len(node.states) != 2:
                p.error("E006", f"gate needs a binary child, {node_id!r} is not", span)
                return None
            if not parents:
                p.error("E006", f"gate on {node_id!r} needs at least one parent", span)
                return None
            return Gate(kind=kind, parents=parents, leak=leak)
        p.error("E005", f"unknown cpd kind {callee!r}", span)
        return None
    except CkbError as exc:
        p.error("E006", str(exc), span)
        return None


_META_STRINGS = ("purpose", "scope", "version")


def _assemble_model(p: _Parser, model_id: str, body: _ModelBody, spans: dict,
                    prefix: str = "") -> Optional[CausalModel]:
    before = sum(1 for d in p.diagnostics if d.severity == SEVERITY_ERROR)
    fields = {"id": model_id, "meta": {}}
    for key, value, span in body.meta:
        if key in _META_STRINGS:
            text = _as_string(p, value, key)
            if text is not None:
                fields["version_label" if key == "version" else key] = text
        elif key == "status":
            if value.kind == "ident" and value.data in core.STATUSES:
                fields["status"] = value.data
            else:
                p.error("E005", f"unknown status keyword {value.data!r}", value.span)
        else:
            if value.kind in ("ident", "string"):
                fields["meta"][key] = str(value.data)
            elif value.kind == "number":
                fields["meta"][key] = repr(value.data)
            else:
                p.error("E001", f"meta value for {key!r} must be scalar", value.span)

    nodes = {}
    for name, title, attrs, span in body.nodes:
        if name in nodes:
            p.error("E002", f"duplicate node id {name!r}", span)
            continue
        node = _assemble_node(p, name, title, attrs, span)
        if node is not None:
            nodes[name] = node
            spans[f"{prefix}node:{name}"] = span

    arcs = {}
    adj = {nid: [] for nid in nodes}
    for src, dst, attrs, span in body.arcs:
        if src == dst:
            p.error("E001", f"self-arc {src} -> {dst}", span)
            continue
        missing = [x for x in (src, dst) if x not in nodes]
        if missing:
            for nid in missing:
                p.error("E003", f"arc endpoint {nid!r} is not a declared node", span)
            continue
        if (src, dst) in arcs:
            p.error("E002", f"duplicate arc {src} -> {dst}", span)
            continue
        if can_reach(adj, dst, src):
            back = shortest_lex_path(adj, dst, src)
            loop = " -> ".join(back + [back[0]])
            p.error("E004", f"arc {src} -> {dst} creates the cycle {loop}", span)
            continue
        arc = _assemble_arc(p, src, dst, attrs, span)
        if arc is None:
            continue
        arcs[(src, dst)] = arc
        adj[src].append(dst)
        adj[src].sort()
        spans[f"{prefix}arc:{src}->{dst}"] = span

    def resolve_keys(pairs, label):
        out = []
        for nid, span in pairs:
            if nid not in nodes:
                p.error("E003", f"{label} id {nid!r} is not a declared node", span)
            elif nid not in out:
                out.append(nid)
        return tuple(out)

    fields["key_start"] = resolve_keys(body.key_start, "key_start")
    fields["key_end"] = resolve_keys(body.key_end, "key_end")

    parents_of = {nid: [] for nid in nodes}
    for src, dst in arcs:
        parents_of[dst].append(src)

    dictionary = {}
    for key, entry, span in body.dicts:
        if isinstance(key, tuple):
            if key not in arcs:
                p.error("E003", f"dictionary entry for unknown arc {key[0]} -> {key[1]}", span)
                continue
            store_key = arc_key(*key)
        else:
            if key not in nodes:
                p.error("E003", f"dictionary entry for unknown node {key!r}", span)
                continue
            store_key = key
        if store_key in dictionary:
            p.error("E002", f"duplicate dictionary entry for {store_key!r}", span)
            continue
        status = entry["status"][0] if entry["status"] else "stub"
        if status not in core.ENTRY_STATUSES:
            p.error("E005", f"unknown dictionary status {status!r}", entry["status"][1])
            continue
        try:
            references = tuple(
                Reference(cite, anchor, note)
                for cite, anchor, note, _ in entry["refs"]
            )
            dictionary[store_key] = DictionaryEntry(
                definition=entry["definition"] or "",
                references=references,
                status=status,
            )
            spans[f"{prefix}dict:{store_key}"] = span
        except CkbError as exc:
            p.error("E001", str(exc), span)

    distributions = {}
    for node_id, callee, args, span in body.cpds:
        if node_id not in nodes:
            p.error("E003", f"cpd for unknown node {node_id!r}", span)
            continue
        if node_id in distributions:
            p.error("E002", f"duplicate cpd for {node_id!r}", span)
            continue
        parents = tuple(sorted(parents_of[node_id]))
        dist = _assemble_cpd(p, nodes, parents, node_id, callee, args, span)
        if dist is not None:
            distributions[node_id] = dist
            spans[f"{prefix}cpd:{node_id}"] = span

    errors_seen = sum(1 for d in p.diagnostics if d.severity == SEVERITY_ERROR)
    if errors_seen > before:
        return None
    try:
        return CausalModel(
            nodes=nodes,
            arcs=arcs,
            dictionary=dictionary,
            distributions=distributions,
            **fields,
        )
    except CkbError as exc:  # defensive: assembly above should have caught it
        p.error("E001", str(exc), spans.get(f"{prefix}model"))
        return None


def _sorted_diagnostics(diagnostics) -> tuple:
    def key(d: Diagnostic):
        where = (
            (d.span.file, d.span.line_start, d.span.col_start)
            if d.span
            else ("", 0, 0)
        )
        return (*where, d.code, d.message)

    return tuple(sorted(diagnostics, key=key))


def parse_model(text: str, path: str = "<input>") -> ParseResult:
    """Parse one model file. On success every element's span is kept in
    the result's side table (keys like ``node:a``, ``arc:a->b``)."""
    try:
        p = _Parser(text, path)
        spans: dict = {}
        model = None
        try:
            first = p.expect(IDENT, "model", what="a model block")
            name = p.expect(IDENT, what="a model id")
            p.expect(PUNCT, "{")
            body = _parse_model_body(p)
            close = p.expect(PUNCT, "}")
            spans["model"] = p.span_between(first, close)
            extra = p.peek()
            if extra.kind != EOF:
                p.error(
                    "E001",
                    f"unexpected trailing input {extra.value!r}",
                    extra.span(p.path),
                )
            model = _assemble_model(p, name.value, body, spans)
        except _SyncError:
            model = None
        if any(d.severity == SEVERITY_ERROR for d in p.diagnostics):
            model = None
        return ParseResult(model, _sorted_diagnostics(p.diagnostics), spans)
    except RecursionError:  # pragma: no cover - totality backstop
        return ParseResult(
            None,
            (Diagnostic("E001", SEVERITY_ERROR, "input too deeply nested",
                        SourceSpan(path, 1, 1, 1, 1)),),
            {},
        )


# -- knowledge-base manifests ------------------------------------------------


def parse_kb(
    text: str, loader: Callable[[str], str], path: str = "<manifest>"
) -> KBParseResult:
    """Parse a manifest and load every covered model through ``loader``.

    ``loader`` maps the path string of a ``model … from "…"`` statement to
    file contents; failures become E010. An empty manifest is a valid,
    empty knowledge base.
    """
    try:
        return _parse_kb(text, loader, path)
    except RecursionError:  # pragma: no cover - totality backstop
        return KBParseResult(
            None,
            (Diagnostic("E001", SEVERITY_ERROR, "input too deeply nested",
                        SourceSpan(path, 1, 1, 1, 1)),),
            {},
        )


def _parse_kb(text: str, loader: Callable[[str], str], path: str) -> KBParseResult:
    p = _Parser(text, path)
    spans: dict = {}
    kb_id = "kb"
    documentation = ""
    framework: Optional[CausalModel] = None
    coverage: dict = {}
    model_paths: dict = {}
    models: dict = {}
    claims: list = []
    claim_count = 0
    nested: list = []

    if p.at(EOF) and not p.diagnostics:
        return KBParseResult(
            KnowledgeBase(id=kb_id, framework=CausalModel(id="framework")),
            (),
            spans,
        )

    try:
        first = p.expect(IDENT, "kb", what="a kb block")
        kb_id = p.expect(IDENT, what="a knowledge base id").value
        p.expect(PUNCT, "{")
    except _SyncError:
        return KBParseResult(None, _sorted_diagnostics(p.diagnostics), spans)

    while not p.at(PUNCT, "}") and not p.at(EOF):
        try:
            tok = p.peek()
            if tok.kind != IDENT:
                p.error("E001", f"expected a statement, found {tok.value!r}",
                        tok.span(p.path))
                p.advance()
                raise _SyncError()
            if tok.value == "documentation":
                p.advance()
                p.expect(PUNCT, "=")
                value = p.expect(STRING, what="a quoted text")
                p.expect(PUNCT, ";")
                documentation = value.value
            elif tok.value == "framework":
                p.advance()
                p.expect(PUNCT, "{")
                body = _parse_model_body(p)
                close = p.expect(PUNCT, "}")
                spans["framework"] = p.span_between(tok, close)
                framework = _assemble_model(p, "framework", body, spans,
                                            prefix="framework/")
            elif tok.value == "model":
                p.advance()
                mid = p.expect(IDENT, what="a model id")
                p.expect(IDENT, "covers")
                fw_node = p.expect(IDENT, what="a framework node id")
                p.expect(IDENT, "from")
                file_ref = p.expect(STRING, what="a quoted path")
                end = p.expect(PUNCT, ";")
                stmt_span = p.span_between(tok, end)
                spans[f"cover:{mid.value}:{fw_node.value}"] = stmt_span
                coverage.setdefault(fw_node.value, [])
                if mid.value not in coverage[fw_node.value]:
                    coverage[fw_node.value].append(mid.value)
                if mid.value in model_paths:
                    if model_paths[mid.value] != file_ref.value:
                        p.error(
                            "E002",
                            f"model {mid.value!r} already loaded from "
                            f"{model_paths[mid.value]!r}",
                            stmt_span,
                        )
                    continue
                model_paths[mid.value] = file_ref.value
                try:
                    contents = loader(file_ref.value)
                except Exception as exc:
                    p.error(
                        "E010",
                        f"cannot load {file_ref.value!r}: {exc}",
                        stmt_span,
                    )
                    continue
                sub = parse_model(contents, file_ref.value)
                nested.extend(sub.diagnostics)
                if sub.model is None:
                    continue
                if sub.model.id != mid.value:
                    p.error(
                        "E013",
                        f"file {file_ref.value!r} declares model "
                        f"{sub.model.id!r}, manifest expects {mid.value!r}",
                        stmt_span,
                    )
                    continue
                models[mid.value] = sub.model
                for key, value in sub.spans.items():
                    spans[f"{mid.value}/{key}"] = value
            elif tok.value == "claim":
                p.advance()
                cause = p.accept(STRING) or p.expect(IDENT, what="a cause")
                p.expect(PUNCT, "->")
                effect = p.accept(STRING) or p.expect(IDENT, what="an effect")
                attrs = p.parse_attr_block()
                end = p.expect(PUNCT, ";")
                claim = _assemble_claim(p, cause.value, effect.value, attrs,
                                        p.span_between(tok, end))
                if claim is not None:
                    spans[f"claim:{claim_count}"] = p.span_between(tok, end)
                    claims.append(claim)
                    claim_count += 1
            else:
                p.error("E001", f"unknown statement keyword {tok.value!r}",
                        tok.span(p.path))
                p.advance()
                raise _SyncError()
        except _SyncError:
            p.sync_statement()
    try:
        close = p.expect(PUNCT, "}")
        spans["kb"] = p.span_between(first, close)
    except _SyncError:
        pass

    if framework is None:
        framework = CausalModel(id="framework")
    for fw_node in sorted(coverage):
        if fw_node not in framework.nodes:
            p.error(
                "E011",
                f"coverage target {fw_node!r} is not a framework node",
                spans.get(f"cover:{coverage[fw_node][0]}:{fw_node}"),
            )
    diagnostics = list(p.diagnostics) + nested
    kb = None
    if not any(d.severity == SEVERITY_ERROR for d in diagnostics):
        coverage = {
            k: tuple(m for m in v if m in models) for k, v in coverage.items()
        }
        kb = KnowledgeBase(
            id=kb_id,
            framework=framework,
            coverage=coverage,
            models=models,
            claims=tuple(claims),
            documentation=documentation,
        )
    return KBParseResult(kb, _sorted_diagnostics(diagnostics), spans)


def _assemble_claim(p, cause, effect, attrs, span) -> Optional[Claim]:
    fields = {"cause": cause, "effect": effect}
    cite_key = None
    anchor = ""
    for attr in attrs:
        if attr.value is None:
            p.error("E001", f"claim attribute {attr.name!r} needs a value", attr.span)
            continue
        if attr.name == "influence":
            influence = _parse_influence(p, attr.value)
            if influence is not None:
                fields["influence"] = influence
        elif attr.name == "knowledge":
            if attr.value.kind == "ident" and attr.value.data in core.KNOWLEDGE_TYPES:
                fields["knowledge_type"] = attr.value.data
            else:
                p.error("E005", f"unknown knowledge type {attr.value.data!r}",
                        attr.value.span)
        elif attr.name == "source":
            if attr.value.kind == "ident" and attr.value.data in core.SOURCE_KINDS:
                fields["source_kind"] = attr.value.data
            else:
                p.error("E005", f"unknown claim source {attr.value.data!r}",
                        attr.value.span)
        elif attr.name == "detail":
            text = _as_string(p, attr.value, "detail")
            if text is not None:
                fields["source_detail"] = text
        elif attr.name == "cite":
            cite_key = _as_string(p, attr.value, "cite")
        elif attr.name == "anchor":
            anchor = _as_string(p, attr.value, "anchor") or ""
        else:
            p.error("E001", f"unknown claim attribute {attr.name!r}", attr.span)
    if cite_key:
        fields["citation"] = Citation(cite_key, anchor)
    try:
        return Claim(**fields)
    except CkbError as exc:
        p.error("E012", str(exc), span)
        return None
