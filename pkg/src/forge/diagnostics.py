"""Diagnostic records and the error type raised by every compilation stage."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class Diagnostic:
    message: str
    file: str = "<input>"
    line: int = 0
    col: int = 0
    severity: str = "error"

    def render(self) -> str:
        return f"{self.file}:{self.line}:{self.col}: {self.severity}: {self.message}"


class CompileError(Exception):
    """Raised with one or more diagnostics when a stage rejects its input."""

    def __init__(self, diagnostics: list[Diagnostic] | Diagnostic):
        if isinstance(diagnostics, Diagnostic):
            diagnostics = [diagnostics]
        self.diagnostics = diagnostics
        super().__init__("; ".join(d.render() for d in diagnostics))


def err(message: str, loc=None, file: str = "<input>") -> CompileError:
    line = getattr(loc, "line", 0) if loc is not None else 0
    col = getattr(loc, "col", 0) if loc is not None else 0
    f = getattr(loc, "file", file) if loc is not None else file
    return CompileError(Diagnostic(message, file=f, line=line, col=col))
