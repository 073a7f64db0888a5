"""Tokenizer for the mini-language.

Pragma lines (leading '#') become single PRAGMA tokens; a trailing backslash
continues a pragma onto the next line. '//' comments run to end of line.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .diagnostics import Diagnostic, CompileError

KEYWORDS = {"void", "i32", "u32", "i64", "u64", "extern", "if", "else", "while", "for", "return"}

# Longest first so the scanner is greedy.
PUNCT = [
    "<<=", ">>=",
    "[[", "]]", "<<", ">>", "<=", ">=", "==", "!=",
    "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=",
    "(", ")", "{", "}", "[", "]", ",", ";",
    "<", ">", "=", "+", "-", "*", "/", "%", "&", "|", "^", "!",
]


@dataclass
class Loc:
    line: int
    col: int
    file: str = "<input>"


@dataclass
class Token:
    kind: str  # IDENT KEYWORD INT STRING PUNCT PRAGMA EOF
    text: str
    loc: Loc = field(compare=False, default_factory=lambda: Loc(0, 0))


def tokenize(text: str, filename: str = "<input>") -> list[Token]:
    tokens: list[Token] = []
    lines = text.split("\n")
    i = 0
    while i < len(lines):
        line = lines[i]
        lineno = i + 1
        stripped = line.lstrip()
        if stripped.startswith("#"):
            col = len(line) - len(stripped) + 1
            body = stripped
            while body.rstrip().endswith("\\") and i + 1 < len(lines):
                body = body.rstrip()[:-1] + " " + lines[i + 1].strip()
                i += 1
            tokens.append(Token("PRAGMA", body.rstrip(), Loc(lineno, col, filename)))
            i += 1
            continue
        _scan_line(line, lineno, filename, tokens)
        i += 1
    tokens.append(Token("EOF", "", Loc(len(lines), 1, filename)))
    return tokens


def _scan_line(line: str, lineno: int, filename: str, out: list[Token]) -> None:
    pos = 0
    n = len(line)
    while pos < n:
        ch = line[pos]
        if ch in " \t\r":
            pos += 1
            continue
        if line.startswith("//", pos):
            return
        loc = Loc(lineno, pos + 1, filename)
        if ch.isalpha() or ch == "_":
            end = pos
            while end < n and (line[end].isalnum() or line[end] == "_"):
                end += 1
            word = line[pos:end]
            kind = "KEYWORD" if word in KEYWORDS else "IDENT"
            out.append(Token(kind, word, loc))
            pos = end
            continue
        if ch.isdigit():
            end = pos
            if line.startswith("0x", pos) or line.startswith("0X", pos):
                end = pos + 2
                while end < n and line[end] in "0123456789abcdefABCDEF":
                    end += 1
            else:
                while end < n and line[end].isdigit():
                    end += 1
            out.append(Token("INT", line[pos:end], loc))
            pos = end
            continue
        if ch == '"':
            end = pos + 1
            while end < n and line[end] != '"':
                end += 1
            if end >= n:
                raise CompileError(Diagnostic("unterminated string literal", filename, lineno, pos + 1))
            out.append(Token("STRING", line[pos + 1:end], loc))
            pos = end + 1
            continue
        for p in PUNCT:
            if line.startswith(p, pos):
                out.append(Token("PUNCT", p, loc))
                pos += len(p)
                break
        else:
            raise CompileError(Diagnostic(f"unexpected character {ch!r}", filename, lineno, pos + 1))
