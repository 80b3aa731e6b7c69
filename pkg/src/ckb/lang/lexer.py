"""Tokenizer for .ckb / .ckbkb files.

Total: bad bytes become E001 diagnostics, never exceptions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..diagnostics import SEVERITY_ERROR, Diagnostic, SourceSpan

IDENT = "ident"
NUMBER = "number"
STRING = "string"
PUNCT = "punct"
EOF = "eof"

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER_RE = re.compile(r"\d+(\.\d+)?([eE][+-]?\d+)?")

_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t"}


@dataclass(frozen=True)
class Token:
    kind: str
    value: str
    line: int
    col: int
    end_line: int
    end_col: int

    def span(self, path: str) -> SourceSpan:
        return SourceSpan(path, self.line, self.col, self.end_line, self.end_col)


def tokenize(text: str, path: str):
    """Return (tokens, diagnostics). The token list always ends with EOF."""
    tokens = []
    diagnostics = []
    line, col = 1, 1
    i, n = 0, len(text)

    def error(message, l0, c0, l1, c1):
        diagnostics.append(
            Diagnostic(
                "E001",
                SEVERITY_ERROR,
                message,
                SourceSpan(path, l0, c0, l1, c1),
            )
        )

    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
                col += 1
            continue
        if ch == "-" and text.startswith("->", i):
            tokens.append(Token(PUNCT, "->", line, col, line, col + 2))
            i += 2
            col += 2
            continue
        if ch in "{}()[],;=!":
            tokens.append(Token(PUNCT, ch, line, col, line, col + 1))
            i += 1
            col += 1
            continue
        if ch == '"':
            l0, c0 = line, col
            i += 1
            col += 1
            parts = []
            closed = False
            while i < n:
                ch = text[i]
                if ch == '"':
                    i += 1
                    col += 1
                    closed = True
                    break
                if ch == "\n":
                    break
                if ch == "\\" and i + 1 < n:
                    esc = text[i + 1]
                    if esc in _ESCAPES:
                        parts.append(_ESCAPES[esc])
                        i += 2
                        col += 2
                        continue
                    error(f"unknown escape \\{esc}", line, col, line, col + 2)
                    i += 2
                    col += 2
                    continue
                parts.append(ch)
                i += 1
                col += 1
            if not closed:
                error("unterminated string", l0, c0, line, col)
            tokens.append(Token(STRING, "".join(parts), l0, c0, line, col))
            continue
        m = _IDENT_RE.match(text, i)
        if m:
            value = m.group(0)
            tokens.append(Token(IDENT, value, line, col, line, col + len(value)))
            i = m.end()
            col += len(value)
            continue
        m = _NUMBER_RE.match(text, i)
        if m:
            value = m.group(0)
            tokens.append(Token(NUMBER, value, line, col, line, col + len(value)))
            i = m.end()
            col += len(value)
            continue
        error(f"unexpected character {ch!r}", line, col, line, col + 1)
        i += 1
        col += 1
    tokens.append(Token(EOF, "", line, col, line, col))
    return tokens, diagnostics
