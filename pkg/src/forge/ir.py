"""Textual intermediate representation.

The format is line oriented and byte stable: one target line, one line per
global, then functions. Scalar locals are named slots, every computed value
is a densely numbered temporary, and control flow is explicit blocks. Two
modules that render to the same bytes are the same program.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field


class IRParseError(Exception):
    def __init__(self, line_no: int, message: str) -> None:
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass
class IRGlobal:
    name: str
    space: str  # "global" | "team_shared"
    ty: str
    count: int
    init: object  # "zero" | "none" | int

    def render(self) -> str:
        return (
            f"global @{self.name} space={self.space} type={self.ty} "
            f"count={self.count} init={self.init}"
        )


@dataclass
class IRSlot:
    name: str
    ty: str
    count: int | None = None  # None: scalar slot; int: private array

    def render(self) -> str:
        if self.count is None:
            return f"  local %{self.name}: {self.ty}"
        return f"  local %{self.name}: [{self.count} x {self.ty}]"


@dataclass
class Instr:
    op: str
    dst: str | None = None
    args: list[str] = field(default_factory=list)

    def render(self) -> str:
        if self.op == "call":
            callee, *rest = self.args
            body = f"call {callee}({', '.join(rest)})"
        elif self.args:
            body = f"{self.op} {', '.join(self.args)}"
        else:
            body = self.op
        if self.dst is not None:
            return f"  %{self.dst} = {body}"
        return f"  {body}"


TERMINATORS = frozenset({"br", "cbr", "ret"})


@dataclass
class IRBlock:
    label: str
    instrs: list[Instr] = field(default_factory=list)


@dataclass
class IRFunc:
    name: str
    params: list[tuple[str, str]]
    ret: str | None
    slots: list[IRSlot] = field(default_factory=list)
    blocks: list[IRBlock] = field(default_factory=list)

    def render(self) -> str:
        params = ", ".join(f"%{n}: {t}" for n, t in self.params)
        ret = self.ret if self.ret is not None else "void"
        lines = [f"func @{self.name}({params}) -> {ret} {{"]
        lines.extend(s.render() for s in self.slots)
        for b in self.blocks:
            lines.append(f"{b.label}:")
            lines.extend(i.render() for i in b.instrs)
        lines.append("}")
        return "\n".join(lines)


@dataclass
class IRModule:
    target: str
    globals: list[IRGlobal] = field(default_factory=list)
    funcs: list[IRFunc] = field(default_factory=list)

    def render(self) -> str:
        parts = [f"target {self.target}"]
        if self.globals:
            parts.append("")
            parts.extend(g.render() for g in self.globals)
        for f in self.funcs:
            parts.append("")
            parts.append(f.render())
        return "\n".join(parts) + "\n"

    def func(self, name: str) -> IRFunc:
        for f in self.funcs:
            if f.name == name:
                return f
        raise KeyError(name)


_GLOBAL_RE = re.compile(
    r"^global @([\w.]+) space=(global|team_shared) type=(\w+) "
    r"count=(\d+) init=(zero|none|-?\d+)$"
)
_FUNC_RE = re.compile(r"^func @([\w.]+)\((.*)\) -> (\w+(?:<\w+>)?|void) \{$")
_PARAM_RE = re.compile(r"^%([\w.]+): (\w+(?:<\w+>)?)$")
_SLOT_RE = re.compile(r"^  local %([\w.]+): (?:\[(\d+) x (\w+)\]|(\w+))$")
_LABEL_RE = re.compile(r"^(bb\d+):$")
_INSTR_RE = re.compile(r"^  (?:%([\w.]+) = )?([\w.]+)(?: (.*))?$")
_CALL_RE = re.compile(r"^(@[\w.]+)\((.*)\)$")
_OPERAND_RE = re.compile(r"^(%[\w.]+|@[\w.]+|bb\d+|-?\d+)$")


def _parse_operands(text: str, line_no: int) -> list[str]:
    if not text:
        return []
    out = []
    for tok in text.split(", "):
        if not _OPERAND_RE.match(tok):
            raise IRParseError(line_no, f"bad operand '{tok}'")
        out.append(tok)
    return out


def parse_ir(text: str) -> IRModule:
    lines = text.splitlines()
    module: IRModule | None = None
    func: IRFunc | None = None
    block: IRBlock | None = None
    for no, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        if raw.startswith("target "):
            if module is not None:
                raise IRParseError(no, "duplicate target line")
            module = IRModule(target=raw[len("target "):].strip())
            continue
        if module is None:
            raise IRParseError(no, "expected a target line first")
        if raw.startswith("global "):
            if func is not None:
                raise IRParseError(no, "global inside a function")
            m = _GLOBAL_RE.match(raw)
            if not m:
                raise IRParseError(no, "malformed global")
            name, space, ty, count, init = m.groups()
            init_v: object = init if init in ("zero", "none") else int(init)
            module.globals.append(IRGlobal(name, space, ty, int(count), init_v))
            continue
        if raw.startswith("func "):
            if func is not None:
                raise IRParseError(no, "nested function")
            m = _FUNC_RE.match(raw)
            if not m:
                raise IRParseError(no, "malformed function header")
            name, params_text, ret = m.groups()
            params: list[tuple[str, str]] = []
            if params_text:
                for p in params_text.split(", "):
                    pm = _PARAM_RE.match(p)
                    if not pm:
                        raise IRParseError(no, f"malformed parameter '{p}'")
                    params.append((pm.group(1), pm.group(2)))
            func = IRFunc(name, params, None if ret == "void" else ret)
            block = None
            continue
        if raw == "}":
            if func is None:
                raise IRParseError(no, "stray '}'")
            if not func.blocks:
                raise IRParseError(no, f"function @{func.name} has no blocks")
            for b in func.blocks:
                if not b.instrs or b.instrs[-1].op not in TERMINATORS:
                    raise IRParseError(no, f"block {b.label} is not terminated")
            module.funcs.append(func)
            func = None
            block = None
            continue
        if func is None:
            raise IRParseError(no, f"unexpected line '{raw}'")
        lm = _LABEL_RE.match(raw)
        if lm:
            block = IRBlock(lm.group(1))
            func.blocks.append(block)
            continue
        sm = _SLOT_RE.match(raw)
        if sm and raw.lstrip().startswith("local "):
            if block is not None:
                raise IRParseError(no, "slot declared after the first block")
            name, count, arr_ty, scalar_ty = sm.groups()
            if count is not None:
                func.slots.append(IRSlot(name, arr_ty, int(count)))
            else:
                func.slots.append(IRSlot(name, scalar_ty))
            continue
        im = _INSTR_RE.match(raw)
        if not im:
            raise IRParseError(no, f"malformed instruction '{raw.strip()}'")
        if block is None:
            raise IRParseError(no, "instruction outside a block")
        dst, op, rest = im.groups()
        if op == "call":
            cm = _CALL_RE.match(rest or "")
            if not cm:
                raise IRParseError(no, "malformed call")
            callee, arg_text = cm.groups()
            args = [callee] + _parse_operands(arg_text, no)
        else:
            args = _parse_operands(rest or "", no)
        block.instrs.append(Instr(op, dst, args))
    if func is not None:
        raise IRParseError(len(lines), f"function @{func.name} is not closed")
    if module is None:
        raise IRParseError(1, "empty module")
    return module


# ---- normalization and diffing ----

_MANGLE_RE = re.compile(r"(@[A-Za-z_][\w]*)\.ompvariant[\w.]*")


def normalize_ir(module: IRModule | str) -> str:
    """Canonical text for cross-target comparison.

    Drops the target line, folds mangled variant names back to their base
    name, orders globals and functions by name, and renumbers temporaries
    densely in order of first definition.
    """
    if isinstance(module, str):
        text = module
        # Normalized text has no target line; add one so it reparses.
        if not any(l.startswith("target ") for l in text.splitlines()):
            text = "target normalized\n\n" + text
        module = parse_ir(text)
    out: list[str] = []
    for g in sorted(module.globals, key=lambda g: g.name):
        out.append(g.render())
    for f in sorted(module.funcs, key=lambda f: _MANGLE_RE.sub(r"\1", "@" + f.name)):
        text = f.render()
        text = _MANGLE_RE.sub(r"\1", text)
        text = _renumber(text)
        if out:
            out.append("")
        out.append(text)
    return "\n".join(out) + "\n"


_TEMP_RE = re.compile(r"%(\d+)\b")


def _renumber(func_text: str) -> str:
    mapping: dict[str, str] = {}

    def sub(m: re.Match) -> str:
        old = m.group(1)
        if old not in mapping:
            mapping[old] = str(len(mapping))
        return "%" + mapping[old]

    return _TEMP_RE.sub(sub, func_text)


@dataclass(frozen=True)
class DiffReport:
    semantically_equal: bool
    differences: tuple[tuple[str, str, str], ...]  # (location, left, right)

    def render(self) -> str:
        if self.semantically_equal:
            return "semantically equal\n"
        out = []
        for location, left, right in self.differences:
            out.append(f"{location}:")
            for line in left.splitlines():
                out.append(f"  - {line}")
            for line in right.splitlines():
                out.append(f"  + {line}")
        return "\n".join(out) + "\n"


def diff_ir(a: IRModule | str, b: IRModule | str) -> DiffReport:
    """Compare two modules after normalization.

    Equal normalized texts mean the modules are semantically equal; anything
    else is reported as aligned excerpt pairs with their line locations.
    """
    if isinstance(a, str):
        a = parse_ir(a)
    if isinstance(b, str):
        b = parse_ir(b)
    if a.target != b.target:
        raise ValueError(f"target mismatch: '{a.target}' vs '{b.target}'")
    na = normalize_ir(a)
    nb = normalize_ir(b)
    if na == nb:
        return DiffReport(True, ())
    import difflib

    la = na.splitlines()
    lb = nb.splitlines()
    diffs: list[tuple[str, str, str]] = []
    matcher = difflib.SequenceMatcher(a=la, b=lb, autojunk=False)
    for tag, i1, i2, j1, j2 in matcher.get_opcodes():
        if tag == "equal":
            continue
        diffs.append((f"line {i1 + 1}",
                      "\n".join(la[i1:i2]), "\n".join(lb[j1:j2])))
    return DiffReport(False, tuple(diffs))
