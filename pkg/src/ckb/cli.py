"""Command-line driver.

Exit codes: 0 clean, 1 warning-level findings under --strict, 2 errors or
failed operations, 3 usage errors. Results go to stdout; the tool's own
errors and usage text go to stderr. Output is deterministic byte for byte
unless --timestamps is requested; ANSI color is used only on a terminal
and never when CKB_NO_COLOR is set.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from pathlib import Path

from . import checks, infer, ops
from .core import CausalModel, KnowledgeBase
from .diagnostics import SEVERITY_ERROR, SEVERITY_WARNING
from .errors import CkbError
from .lang import export, parser, serializer
from .param import StrengthScale, synthesize

_COLORS = {"error": "\x1b[31m", "warning": "\x1b[33m", "info": "\x1b[36m"}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    top = _Parser(prog="ckb", description="causal knowledge base toolkit")
    sub = top.add_subparsers(dest="command", metavar="command")

    def common(p):
        p.add_argument("--format", choices=("human", "json"), default="human")
        p.add_argument("--timestamps", action="store_true",
                       help="prepend a generation timestamp")

    p = sub.add_parser("check", help="run the lint passes")
    p.add_argument("files", nargs="+")
    p.add_argument("--strict", action="store_true",
                   help="exit 1 when warnings are found")
    p.add_argument("--config", action="append", default=[], metavar="KEY=VALUE")
    common(p)

    p = sub.add_parser("stats", help="graph statistics")
    p.add_argument("file")
    common(p)

    p = sub.add_parser("synth", help="qualitative parameterisation")
    p.add_argument("file")
    p.add_argument("--scale", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("-o", "--output")
    common(p)

    p = sub.add_parser("infer", help="posterior marginals by variable elimination")
    p.add_argument("file")
    p.add_argument("--query", required=True, help="comma-separated node ids")
    p.add_argument("--evidence", default="", help="comma-separated node=state")
    common(p)

    p = sub.add_parser("dsep", help="d-separation query")
    p.add_argument("file")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--z", default="")
    common(p)

    p = sub.add_parser("audit", help="monotonicity audit of a parameterised model")
    p.add_argument("file")
    p.add_argument("--strict", action="store_true",
                   help="exit 1 when violations are found")
    common(p)

    p = sub.add_parser("claims", help="claims inferable by transitivity")
    p.add_argument("file")
    common(p)

    p = sub.add_parser("diff", help="structural diff of two models")
    p.add_argument("old")
    p.add_argument("new")
    common(p)

    p = sub.add_parser("expand", help="replace an arc with mediating pathways")
    p.add_argument("file")
    p.add_argument("--arc", required=True, metavar="FROM,TO")
    p.add_argument("--path", action="append", default=[], metavar="M1,M2,…",
                   help="one pathway of mediator ids (repeatable)")
    p.add_argument("--keep-leak", action="store_true")
    p.add_argument("-o", "--output")
    common(p)

    p = sub.add_parser("export", help="export to DOT or JSON")
    p.add_argument("file")
    p.add_argument("--to", required=True, choices=("dot", "json"))
    p.add_argument("-o", "--output")
    common(p)

    return top


def _use_color(stream) -> bool:
    if os.environ.get("CKB_NO_COLOR"):
        return False
    return hasattr(stream, "isatty") and stream.isatty()


def _render_diagnostic(diag, color: bool) -> str:
    text = diag.render()
    if color:
        code = _COLORS.get(diag.severity, "")
        text = text.replace(diag.severity + ":", f"{code}{diag.severity}\x1b[0m:", 1)
    return text


def _load_any(path: str):
    """Parse a .ckb or .ckbkb file: (model-or-kb, diagnostics, spans)."""
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".ckbkb"):
        base = Path(path).parent

        def loader(ref: str) -> str:
            return (base / ref).read_text(encoding="utf-8")

        result = parser.parse_kb(text, loader, path=path)
        return result.kb, result.diagnostics, result.spans
    result = parser.parse_model(text, path=path)
    return result.model, result.diagnostics, result.spans


def _require_model(path: str, stderr) -> CausalModel:
    target, diagnostics, _ = _load_any(path)
    if target is None:
        for diag in diagnostics:
            print(_render_diagnostic(diag, _use_color(stderr)), file=stderr)
        raise CkbError(f"cannot load {path!r}")
    if isinstance(target, KnowledgeBase):
        raise CkbError(f"{path!r} is a knowledge base; this command needs a model")
    return target


def _parse_kv(pairs, what: str) -> dict:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise _UsageError(f"{what} expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _config_from(pairs) -> checks.CheckConfig:
    raw = _parse_kv(pairs, "--config")
    kwargs = {}
    for key, value in raw.items():
        if key in ("disable", "disabled"):
            kwargs["disabled"] = tuple(v for v in value.split(",") if v)
        elif key in ("enable", "enabled"):
            kwargs["enabled"] = tuple(v for v in value.split(",") if v)
        elif key in ("fan_in_threshold", "fan_out_threshold",
                     "dilution_chain_length"):
            kwargs[key] = int(value)
        elif key in ("dilution_product_floor", "title_similarity_threshold"):
            kwargs[key] = float(value)
        else:
            raise _UsageError(f"unknown --config key {key!r}")
    return checks.CheckConfig(**kwargs)


def _scale_from(pairs) -> StrengthScale:
    raw = _parse_kv(pairs, "--scale")
    kwargs = {}
    valid = ("very_weak", "weak", "moderate", "strong", "very_strong",
             "root_prior", "default_leak")
    for key, value in raw.items():
        if key not in valid:
            raise _UsageError(f"unknown --scale key {key!r}")
        kwargs[key] = float(value)
    return StrengthScale(**kwargs)


def _ids(text: str) -> list:
    return [part.strip() for part in text.split(",") if part.strip()]


def _evidence_from(model: CausalModel, text: str) -> dict:
    evidence = {}
    for item in _ids(text):
        if "=" not in item:
            raise _UsageError(f"--evidence expects node=state, got {item!r}")
        nid, state = item.split("=", 1)
        nid, state = nid.strip(), state.strip()
        node = model.nodes.get(nid)
        if node is not None and state in node.states:
            evidence[nid] = node.states.index(state)
        elif state.isdigit():
            evidence[nid] = int(state)
        else:
            raise _UsageError(f"unknown state {state!r} for node {nid!r}")
    return evidence


def _emit(text: str, output, stdout):
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        stdout.write(text)


def _stamp(args, stdout):
    if getattr(args, "timestamps", False) and args.format == "human":
        now = datetime.datetime.now(datetime.timezone.utc).isoformat()
        print(f"# generated {now}", file=stdout)


# -- subcommands -------------------------------------------------------------


def _cmd_check(args, stdout, stderr) -> int:
    config = _config_from(args.config)
    all_diagnostics = []
    for path in args.files:
        target, diagnostics, spans = _load_any(path)
        all_diagnostics.extend(diagnostics)
        if target is not None:
            report = checks.run_checks(target, config, spans)
            all_diagnostics.extend(report.diagnostics)
    _stamp(args, stdout)
    if args.format == "json":
        doc = {
            "diagnostics": [d.to_dict() for d in all_diagnostics],
            "summary": _summary(all_diagnostics),
        }
        print(json.dumps(doc, indent=2, sort_keys=True), file=stdout)
    else:
        color = _use_color(stdout)
        for diag in all_diagnostics:
            print(_render_diagnostic(diag, color), file=stdout)
        errors = sum(1 for d in all_diagnostics if d.severity == SEVERITY_ERROR)
        warnings = sum(1 for d in all_diagnostics if d.severity == SEVERITY_WARNING)
        infos = len(all_diagnostics) - errors - warnings
        print(f"{errors} error(s), {warnings} warning(s), {infos} info(s)",
              file=stdout)
    if any(d.severity == SEVERITY_ERROR for d in all_diagnostics):
        return 2
    if args.strict and any(
        d.severity == SEVERITY_WARNING for d in all_diagnostics
    ):
        return 1
    return 0


def _summary(diagnostics) -> dict:
    out = {}
    for diag in diagnostics:
        out[diag.code] = out.get(diag.code, 0) + 1
    return dict(sorted(out.items()))


def _cmd_stats(args, stdout, stderr) -> int:
    model = _require_model(args.file, stderr)
    stats = ops.graph_stats(model)
    fields = {
        "nodes": stats.n_nodes,
        "arcs": stats.n_arcs,
        "possible_arcs": stats.possible_arcs,
        "log2_possible_digraphs": stats.log2_possible_digraphs,
        "max_fan_in": stats.max_fan_in,
        "max_fan_out": stats.max_fan_out,
        "longest_path": stats.longest_path,
        "isolated": stats.n_isolated,
    }
    _stamp(args, stdout)
    if args.format == "json":
        print(json.dumps(fields, indent=2, sort_keys=True), file=stdout)
    else:
        for key, value in fields.items():
            print(f"{key}: {value}", file=stdout)
    return 0


def _cmd_synth(args, stdout, stderr) -> int:
    model = _require_model(args.file, stderr)
    scale = _scale_from(args.scale)
    result = synthesize(model, scale)
    text = serializer.serialize_model(result.model)
    _stamp(args, stdout)
    if args.format == "json":
        doc = {
            "model": export.model_to_dict(result.model),
            "notes": [d.to_dict() for d in result.notes],
        }
        _emit(json.dumps(doc, indent=2, sort_keys=True) + "\n",
              args.output, stdout)
    else:
        for note in result.notes:
            print(_render_diagnostic(note, _use_color(stderr)), file=stderr)
        _emit(text, args.output, stdout)
    return 0


def _cmd_infer(args, stdout, stderr) -> int:
    model = _require_model(args.file, stderr)
    evidence = _evidence_from(model, args.evidence)
    posterior = infer.eliminate_variables(model, _ids(args.query), evidence)
    _stamp(args, stdout)
    if args.format == "json":
        doc = {
            nid: {model.nodes[nid].states[i]: p for i, p in enumerate(dist)}
            for nid, dist in posterior.items()
        }
        print(json.dumps(doc, indent=2, sort_keys=True), file=stdout)
        return 0
    width = max(len(nid) for nid in posterior)
    swidth = max(
        len(s) for nid in posterior for s in model.nodes[nid].states
    )
    print(f"{'node'.ljust(width)}  {'state'.ljust(swidth)}  probability",
          file=stdout)
    for nid in posterior:
        for i, p in enumerate(posterior[nid]):
            state = model.nodes[nid].states[i]
            print(f"{nid.ljust(width)}  {state.ljust(swidth)}  {p:.6f}",
                  file=stdout)
    return 0


def _cmd_dsep(args, stdout, stderr) -> int:
    model = _require_model(args.file, stderr)
    verdict = infer.d_separated(model, _ids(args.x), _ids(args.y), _ids(args.z))
    _stamp(args, stdout)
    if args.format == "json":
        doc = {
            "separated": verdict.separated,
            "witness": list(verdict.witness) if verdict.witness else None,
        }
        print(json.dumps(doc, indent=2, sort_keys=True), file=stdout)
    else:
        print(f"d-separated: {'true' if verdict.separated else 'false'}",
              file=stdout)
        if verdict.witness:
            print("witness: " + " -- ".join(verdict.witness), file=stdout)
    return 0


def _cmd_audit(args, stdout, stderr) -> int:
    model = _require_model(args.file, stderr)
    report = infer.monotonicity_audit(model)
    _stamp(args, stdout)
    if args.format == "json":
        doc = {
            "violations": [
                {
                    "arc": list(v.arc),
                    "context": [[p, s] for p, s in v.context],
                    "parent_state": v.parent_state,
                    "p_given_active": v.p_given_active,
                    "p_given_inactive": v.p_given_inactive,
                }
                for v in report.violations
            ],
            "unaudited": [
                {"arc": list(arc), "reason": reason}
                for arc, reason in report.unaudited
            ],
        }
        print(json.dumps(doc, indent=2, sort_keys=True), file=stdout)
    else:
        for v in report.violations:
            ctx = ", ".join(f"{p}={s}" for p, s in v.context) or "(no other parents)"
            print(
                f"violation: {v.arc[0]} -> {v.arc[1]} given {ctx}: "
                f"P(active|active)={v.p_given_active:.6f} vs "
                f"P(active|state {v.parent_state})={v.p_given_inactive:.6f}",
                file=stdout,
            )
        for arc, reason in report.unaudited:
            print(f"unaudited: {arc[0]} -> {arc[1]}: {reason}", file=stdout)
        print(
            f"{len(report.violations)} violation(s), "
            f"{len(report.unaudited)} arc(s) unaudited",
            file=stdout,
        )
    if args.strict and report.violations:
        return 1
    return 0


def _cmd_claims(args, stdout, stderr) -> int:
    target, diagnostics, _ = _load_any(args.file)
    if target is None:
        for diag in diagnostics:
            print(_render_diagnostic(diag, _use_color(stderr)), file=stderr)
        return 2
    claims = ops.infer_transitive_claims(target)
    _stamp(args, stdout)
    if args.format == "json":
        doc = [export.claim_to_dict(c) for c in claims]
        print(json.dumps(doc, indent=2, sort_keys=True), file=stdout)
    else:
        for claim in claims:
            influence = claim.influence.kind
            if claim.influence.label:
                influence += f"({claim.influence.label})"
            print(
                f"{claim.cause} -> {claim.effect} [{influence}] "
                f"inferable: {claim.source_detail}",
                file=stdout,
            )
    return 0


def _cmd_diff(args, stdout, stderr) -> int:
    old = _require_model(args.old, stderr)
    new = _require_model(args.new, stderr)
    report = ops.diff(old, new)
    _stamp(args, stdout)
    if args.format == "json":
        doc = {
            name: [list(k) if isinstance(k, tuple) else k for k in getattr(report, name)]
            for name in (
                "added_nodes", "removed_nodes", "modified_nodes",
                "added_arcs", "removed_arcs", "modified_arcs",
                "dictionary_added", "dictionary_removed", "dictionary_modified",
                "distributions_added", "distributions_removed",
                "distributions_modified", "changed_fields",
            )
        }
        print(json.dumps(doc, indent=2, sort_keys=True), file=stdout)
        return 0
    print(f"--- {old.id}", file=stdout)
    print(f"+++ {new.id}", file=stdout)
    for nid in report.added_nodes:
        print(f"+ node {nid}", file=stdout)
    for nid in report.removed_nodes:
        print(f"- node {nid}", file=stdout)
    for nid in report.modified_nodes:
        print(f"~ node {nid}", file=stdout)
    for src, dst in report.added_arcs:
        print(f"+ arc {src} -> {dst}", file=stdout)
    for src, dst in report.removed_arcs:
        print(f"- arc {src} -> {dst}", file=stdout)
    for src, dst in report.modified_arcs:
        print(f"~ arc {src} -> {dst}", file=stdout)
    for key in report.dictionary_added:
        print(f"+ dict {key}", file=stdout)
    for key in report.dictionary_removed:
        print(f"- dict {key}", file=stdout)
    for key in report.dictionary_modified:
        print(f"~ dict {key}", file=stdout)
    for key in report.distributions_added:
        print(f"+ cpd {key}", file=stdout)
    for key in report.distributions_removed:
        print(f"- cpd {key}", file=stdout)
    for key in report.distributions_modified:
        print(f"~ cpd {key}", file=stdout)
    for name in report.changed_fields:
        print(f"~ meta {name}", file=stdout)
    if report.empty:
        print("(no differences)", file=stdout)
    return 0


def _cmd_expand(args, stdout, stderr) -> int:
    model = _require_model(args.file, stderr)
    endpoints = _ids(args.arc)
    if len(endpoints) != 2:
        raise _UsageError("--arc expects FROM,TO")
    pathways = [_ids(p) for p in args.path]
    if not pathways:
        raise _UsageError("need at least one --path")
    result = ops.expand_arc(
        model, endpoints[0], endpoints[1], pathways, keep_leak=args.keep_leak
    )
    _stamp(args, stdout)
    if args.format == "json":
        _emit(export.export_json(result), args.output, stdout)
    else:
        _emit(serializer.serialize_model(result), args.output, stdout)
    return 0


def _cmd_export(args, stdout, stderr) -> int:
    target, diagnostics, _ = _load_any(args.file)
    if target is None:
        for diag in diagnostics:
            print(_render_diagnostic(diag, _use_color(stderr)), file=stderr)
        return 2
    if args.to == "dot":
        if isinstance(target, KnowledgeBase):
            raise CkbError("DOT export works on single models")
        text = export.export_dot(target)
    else:
        text = export.export_json(target)
    _stamp(args, stdout)
    _emit(text, args.output, stdout)
    return 0


_COMMANDS = {
    "check": _cmd_check,
    "stats": _cmd_stats,
    "synth": _cmd_synth,
    "infer": _cmd_infer,
    "dsep": _cmd_dsep,
    "audit": _cmd_audit,
    "claims": _cmd_claims,
    "diff": _cmd_diff,
    "expand": _cmd_expand,
    "export": _cmd_export,
}


def run(argv, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    top = _build_parser()
    try:
        args = top.parse_args(argv)
        if args.command is None:
            raise _UsageError("missing command")
        return _COMMANDS[args.command](args, stdout, stderr)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=stderr)
        top.print_usage(stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=stderr)
        return 2
    except CkbError as exc:
        print(f"error: {exc}", file=stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
