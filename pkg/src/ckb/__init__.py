"""Toolkit for building, checking, parameterising and querying causal
knowledge bases made of small causal DAG models."""

from . import checks, cli, core, diagnostics, errors, infer, lang, ops, param

__all__ = [
    "checks",
    "cli",
    "core",
    "diagnostics",
    "errors",
    "infer",
    "lang",
    "ops",
    "param",
]

__version__ = "0.1.0"
