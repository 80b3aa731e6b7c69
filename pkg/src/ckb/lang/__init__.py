"""Textual DSL: parser, canonical serializer, and exporters."""

from ..diagnostics import Diagnostic, SourceSpan
from .export import export_dot, export_json, import_json, kb_to_dict, model_to_dict
from .parser import KBParseResult, ParseResult, parse_model, parse_kb
from .serializer import serialize_model

__all__ = [
    "Diagnostic",
    "SourceSpan",
    "KBParseResult",
    "ParseResult",
    "parse_model",
    "parse_kb",
    "serialize_model",
    "export_dot",
    "export_json",
    "import_json",
    "model_to_dict",
    "kb_to_dict",
]
