"""Recursive-descent parser for the mini-language.

parse_module runs the semantic pass as well, so a returned module is fully
validated and type-annotated. Directive regions (declare target, declare
variant) must balance; atomic and target pragmas are statement-level.
"""

from __future__ import annotations

import re

from . import ast
from .ast import (
    Allocator, Assign, AtomicConstruct, AtomicStmt, Binary, Call, Cast, Deref,
    ExprStmt, FunctionDecl, GlobalDecl, If, Index, IntLit, LocalDecl, Name,
    Param, Print, PtrType, Return, ScalarType, SourceModule, StrLit,
    TargetRegion, TargetStmt, Unary, While,
)
from .diagnostics import Diagnostic, CompileError
from .lexer import Loc, Token, tokenize
from .selectors import ContextSelector, Extension

_TYPE_NAMES = {"i32": ScalarType.I32, "u32": ScalarType.U32,
               "i64": ScalarType.I64, "u64": ScalarType.U64}

_ASSIGN_OPS = {"=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>="}


def _fail(msg: str, loc: Loc):
    raise CompileError(Diagnostic(msg, file=loc.file, line=loc.line, col=loc.col))


# ============================================================ pragma scanning

_PRAGMA_TOKEN = re.compile(r"[A-Za-z_][A-Za-z0-9_]*|\d+|[(){}=,]")


class PragmaCursor:
    def __init__(self, text: str, loc: Loc):
        self.words = _PRAGMA_TOKEN.findall(text)
        self.pos = 0
        self.loc = loc

    def peek(self) -> str | None:
        return self.words[self.pos] if self.pos < len(self.words) else None

    def next(self) -> str:
        w = self.peek()
        if w is None:
            _fail("unexpected end of pragma", self.loc)
        self.pos += 1
        return w

    def expect(self, word: str) -> None:
        w = self.next()
        if w != word:
            _fail(f"expected '{word}' in pragma, found '{w}'", self.loc)

    def at_end(self) -> bool:
        return self.pos >= len(self.words)


def parse_selector(text: str, loc: Loc | None = None) -> ContextSelector:
    """Parse the contents of a match(...) clause into a ContextSelector."""
    loc = loc or Loc(0, 0)
    cur = PragmaCursor(text, loc)
    device_arch: tuple[str, ...] | None = None
    extension = Extension.NONE
    seen: set[str] = set()
    while not cur.at_end():
        setname = cur.next()
        if setname in seen:
            _fail(f"duplicate selector set '{setname}'", loc)
        seen.add(setname)
        cur.expect("=")
        cur.expect("{")
        if setname == "device":
            cur.expect("arch")
            cur.expect("(")
            names = []
            while cur.peek() != ")":
                names.append(cur.next())
                if cur.peek() == ",":
                    cur.next()
            cur.next()  # )
            if not names:
                _fail("empty arch list in device selector", loc)
            device_arch = tuple(names)
        elif setname == "implementation":
            cur.expect("extension")
            cur.expect("(")
            ext = cur.next()
            if ext not in ("match_any", "match_none"):
                _fail(f"unknown extension '{ext}'", loc)
            extension = Extension(ext)
            cur.expect(")")
        else:
            _fail(f"unknown selector set '{setname}'", loc)
        cur.expect("}")
        if cur.peek() == ",":
            cur.next()
    if extension is not Extension.NONE and device_arch is None:
        _fail("extension selector requires a device arch set", loc)
    return ContextSelector(device_arch=device_arch, extension=extension)


def _extract_match(text: str, loc: Loc) -> str:
    i = text.find("match")
    if i < 0:
        _fail("declare variant requires a match clause", loc)
    j = text.find("(", i)
    if j < 0:
        _fail("malformed match clause", loc)
    depth = 0
    for k in range(j, len(text)):
        if text[k] == "(":
            depth += 1
        elif text[k] == ")":
            depth -= 1
            if depth == 0:
                return text[j + 1:k]
    _fail("unbalanced parentheses in match clause", loc)
    return ""


# ============================================================ parser proper

class Parser:
    def __init__(self, text: str, filename: str):
        self.tokens = tokenize(text, filename)
        self.pos = 0
        self.filename = filename

    # ---- token helpers

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def next(self) -> Token:
        t = self.tokens[self.pos]
        if t.kind != "EOF":
            self.pos += 1
        return t

    def at(self, kind: str, text: str | None = None) -> bool:
        t = self.peek()
        return t.kind == kind and (text is None or t.text == text)

    def expect(self, kind: str, text: str | None = None) -> Token:
        t = self.peek()
        if not self.at(kind, text):
            want = text if text is not None else kind
            _fail(f"expected '{want}', found '{t.text or t.kind}'", t.loc)
        return self.next()

    # ---- module level

    def parse(self) -> SourceModule:
        module = SourceModule(filename=self.filename)
        span_depth = 0
        variant: ContextSelector | None = None
        variant_loc: Loc | None = None
        while not self.at("EOF"):
            if self.at("PRAGMA"):
                tok = self.next()
                cur = PragmaCursor(tok.text, tok.loc)
                cur.expect("pragma")
                cur.expect("omp")
                head = cur.next()
                if head in ("begin", "declare", "end"):
                    span_depth, variant, variant_loc = self._region_pragma(
                        tok, cur, head, span_depth, variant, variant_loc)
                elif head == "allocate":
                    self._allocate_pragma(tok, module)
                else:
                    _fail(f"unexpected '#pragma omp {head}' at module level", tok.loc)
                continue
            decl = self.parse_declaration(module)
            index = len(module.declarations)
            if variant is not None:
                if not isinstance(decl, FunctionDecl) or decl.body is None:
                    _fail("only function definitions may appear in a declare variant region", decl.loc)
                decl.variant_of = (decl.name, variant)
            module.declarations.append(decl)
            if span_depth > 0:
                module.device_span.add(index)
        if span_depth > 0:
            _fail("unterminated declare target region", self.peek().loc)
        if variant is not None:
            _fail("unterminated declare variant region", variant_loc or self.peek().loc)
        return module

    def _region_pragma(self, tok: Token, cur: PragmaCursor, head: str,
                       span_depth: int, variant, variant_loc):
        rest = cur.next()
        if head == "declare":
            # "#pragma omp declare target" opens a region like "begin declare target"
            if rest == "target":
                span_depth += 1
            elif rest == "variant":
                _fail("declare variant requires 'begin declare variant match(...)'", tok.loc)
            else:
                _fail(f"unknown directive 'declare {rest}'", tok.loc)
        elif head == "begin":
            cur2 = rest
            if cur2 != "declare":
                _fail(f"unknown directive 'begin {cur2}'", tok.loc)
            what = cur.next()
            if what == "target":
                span_depth += 1
            elif what == "variant":
                if variant is not None:
                    _fail("declare variant regions cannot nest", tok.loc)
                sel_text = _extract_match(tok.text, tok.loc)
                variant = parse_selector(sel_text, tok.loc)
                variant_loc = tok.loc
            else:
                _fail(f"unknown directive 'begin declare {what}'", tok.loc)
        else:  # end
            if rest != "declare":
                _fail(f"unknown directive 'end {rest}'", tok.loc)
            what = cur.next()
            if what == "target":
                if variant is not None:
                    _fail("declare target region closed inside declare variant", tok.loc)
                if span_depth == 0:
                    _fail("'end declare target' without matching begin", tok.loc)
                span_depth -= 1
            elif what == "variant":
                if variant is None:
                    _fail("'end declare variant' without matching begin", tok.loc)
                variant = None
                variant_loc = None
            else:
                _fail(f"unknown directive 'end declare {what}'", tok.loc)
        return span_depth, variant, variant_loc

    def _allocate_pragma(self, tok: Token, module: SourceModule) -> None:
        cur = PragmaCursor(tok.text, tok.loc)
        cur.expect("pragma")
        cur.expect("omp")
        cur.expect("allocate")
        cur.expect("(")
        name = cur.next()
        cur.expect(")")
        if cur.at_end():
            _fail("allocate requires an allocator clause", tok.loc)
        cur.expect("allocator")
        cur.expect("(")
        alloc_name = cur.next()
        cur.expect(")")
        try:
            allocator = Allocator(alloc_name)
        except ValueError:
            _fail(f"unknown allocator '{alloc_name}'", tok.loc)
        target = None
        for d in module.declarations:
            if isinstance(d, GlobalDecl) and d.name == name:
                target = d
        if target is None:
            _fail(f"allocate names unknown variable '{name}'", tok.loc)
        if target.allocator is not Allocator.DEFAULT:
            _fail(f"allocator for '{name}' set twice", tok.loc)
        target.allocator = allocator

    # ---- declarations

    def parse_declaration(self, module: SourceModule):
        is_extern = False
        if self.at("KEYWORD", "extern"):
            self.next()
            is_extern = True
        ty_tok = self.expect("KEYWORD")
        if ty_tok.text == "void":
            ret = None
        elif ty_tok.text in _TYPE_NAMES:
            ret = _TYPE_NAMES[ty_tok.text]
        else:
            _fail(f"expected a type, found '{ty_tok.text}'", ty_tok.loc)
        name_tok = self.expect("IDENT")
        if self.at("PUNCT", "("):
            return self._function_rest(name_tok, ret, is_extern)
        if ret is None:
            _fail("variables cannot have void type", name_tok.loc)
        return self._global_rest(name_tok, ret, is_extern)

    def _function_rest(self, name_tok: Token, ret, is_extern: bool) -> FunctionDecl:
        self.expect("PUNCT", "(")
        params: list[Param] = []
        if not self.at("PUNCT", ")"):
            while True:
                pty_tok = self.expect("KEYWORD")
                if pty_tok.text not in _TYPE_NAMES:
                    _fail(f"expected a parameter type, found '{pty_tok.text}'", pty_tok.loc)
                pty: object = _TYPE_NAMES[pty_tok.text]
                if self.at("PUNCT", "*"):
                    self.next()
                    pty = PtrType(pty)
                pname = self.expect("IDENT")
                params.append(Param(pname.text, pty))
                if self.at("PUNCT", ","):
                    self.next()
                    continue
                break
        self.expect("PUNCT", ")")
        if self.at("PUNCT", ";"):
            self.next()
            return FunctionDecl(name_tok.text, params, ret, body=None, loc=name_tok.loc)
        if is_extern:
            _fail("extern function declarations cannot have a body", name_tok.loc)
        body = self.parse_block(None)
        return FunctionDecl(name_tok.text, params, ret, body=body, loc=name_tok.loc)

    def _global_rest(self, name_tok: Token, ty: ScalarType, is_extern: bool) -> GlobalDecl:
        count = None
        init = None
        uninit = False
        if self.at("PUNCT", "["):
            self.next()
            count_tok = self.expect("INT")
            count = int(count_tok.text, 0)
            if count <= 0:
                _fail("array length must be positive", count_tok.loc)
            self.expect("PUNCT", "]")
        if self.at("PUNCT", "[["):
            self.next()
            attr = self.expect("IDENT")
            if attr.text != "loader_uninitialized":
                _fail(f"unknown attribute '{attr.text}'", attr.loc)
            self.expect("PUNCT", "]]")
            uninit = True
        if self.at("PUNCT", "="):
            eq = self.next()
            if count is not None:
                _fail("array initializers are not supported", eq.loc)
            neg = False
            if self.at("PUNCT", "-"):
                self.next()
                neg = True
            val_tok = self.expect("INT")
            init = int(val_tok.text, 0)
            if neg:
                init = -init
        self.expect("PUNCT", ";")
        return GlobalDecl(name_tok.text, ty, count=count, init=init,
                          loader_uninitialized=uninit, is_extern=is_extern,
                          loc=name_tok.loc)

    # ---- statements

    def parse_block(self, module_ref) -> list:
        self.expect("PUNCT", "{")
        stmts: list = []
        while not self.at("PUNCT", "}"):
            if self.at("EOF"):
                _fail("unterminated block", self.peek().loc)
            self._parse_stmt_into(stmts)
        self.next()
        return stmts

    def _parse_stmt_into(self, out: list) -> None:
        t = self.peek()
        if t.kind == "PRAGMA":
            out.append(self._stmt_pragma())
            return
        if t.kind == "PUNCT" and t.text == "{":
            out.extend(self.parse_block(None))
            return
        if t.kind == "KEYWORD":
            if t.text in _TYPE_NAMES:
                out.extend(self._local_decl())
                return
            if t.text == "if":
                out.append(self._if_stmt())
                return
            if t.text == "while":
                out.append(self._while_stmt())
                return
            if t.text == "for":
                out.extend(self._for_stmt())
                return
            if t.text == "return":
                self.next()
                if self.at("PUNCT", ";"):
                    self.next()
                    out.append(Return(None, loc=t.loc))
                else:
                    v = self.parse_expr()
                    self.expect("PUNCT", ";")
                    out.append(Return(v, loc=t.loc))
                return
            _fail(f"unexpected '{t.text}'", t.loc)
        out.append(self._expr_or_assign())

    def _stmt_pragma(self):
        tok = self.next()
        cur = PragmaCursor(tok.text, tok.loc)
        cur.expect("pragma")
        cur.expect("omp")
        head = cur.next()
        if head == "atomic":
            return self._atomic_stmt(tok, cur)
        if head == "target":
            return self._target_stmt(tok, cur)
        _fail(f"unexpected '#pragma omp {head}' inside a function body", tok.loc)

    def _atomic_stmt(self, tok: Token, cur: PragmaCursor) -> AtomicStmt:
        has_capture = False
        has_compare = False
        has_seq_cst = False
        while not cur.at_end():
            w = cur.next()
            if w == "capture":
                if has_capture:
                    _fail("duplicate capture clause", tok.loc)
                has_capture = True
            elif w == "compare":
                if has_compare:
                    _fail("duplicate compare clause", tok.loc)
                has_compare = True
            elif w == "seq_cst":
                if has_seq_cst:
                    _fail("duplicate seq_cst clause", tok.loc)
                has_seq_cst = True
            elif w in ("relaxed", "acquire", "release", "acq_rel"):
                _fail(f"only seq_cst ordering is supported, found '{w}'", tok.loc)
            else:
                _fail(f"unknown atomic clause '{w}'", tok.loc)
        if not has_seq_cst:
            _fail("atomic requires an explicit seq_cst clause", tok.loc)
        block = self.parse_block(None)
        construct = AtomicConstruct(has_capture=has_capture, has_compare=has_compare,
                                    block=block, loc=tok.loc)
        return AtomicStmt(construct, loc=tok.loc)

    def _target_stmt(self, tok: Token, cur: PragmaCursor) -> TargetStmt:
        num_teams = None
        thread_limit = None
        while not cur.at_end():
            w = cur.next()
            if w in ("num_teams", "thread_limit"):
                cur.expect("(")
                v = cur.next()
                if not v.isdigit() or int(v) <= 0:
                    _fail(f"{w} requires a positive integer literal", tok.loc)
                cur.expect(")")
                if w == "num_teams":
                    if num_teams is not None:
                        _fail("duplicate num_teams clause", tok.loc)
                    num_teams = int(v)
                else:
                    if thread_limit is not None:
                        _fail("duplicate thread_limit clause", tok.loc)
                    thread_limit = int(v)
            else:
                _fail(f"unknown target clause '{w}'", tok.loc)
        body = self.parse_block(None)
        region = TargetRegion(region_id=-1, body=body, num_teams=num_teams,
                              thread_limit=thread_limit, loc=tok.loc)
        return TargetStmt(region, loc=tok.loc)

    def _local_decl(self) -> list:
        ty_tok = self.next()
        ty = _TYPE_NAMES[ty_tok.text]
        name_tok = self.expect("IDENT")
        count = None
        if self.at("PUNCT", "["):
            self.next()
            n = self.expect("INT")
            count = int(n.text, 0)
            if count <= 0:
                _fail("array length must be positive", n.loc)
            self.expect("PUNCT", "]")
        decl = LocalDecl(name_tok.text, ty, count=count, loc=name_tok.loc)
        stmts: list = [decl]
        if self.at("PUNCT", "="):
            eq = self.next()
            if count is not None:
                _fail("array initializers are not supported", eq.loc)
            value = self.parse_expr()
            stmts.append(Assign(Name(name_tok.text, loc=name_tok.loc), value, loc=eq.loc))
        self.expect("PUNCT", ";")
        return stmts

    def _if_stmt(self) -> If:
        tok = self.next()
        self.expect("PUNCT", "(")
        cond = self.parse_expr()
        self.expect("PUNCT", ")")
        then_body = self.parse_block(None)
        else_body = None
        if self.at("KEYWORD", "else"):
            self.next()
            if self.at("KEYWORD", "if"):
                else_body = [self._if_stmt()]
            else:
                else_body = self.parse_block(None)
        return If(cond, then_body, else_body, loc=tok.loc)

    def _while_stmt(self) -> While:
        tok = self.next()
        self.expect("PUNCT", "(")
        cond = self.parse_expr()
        self.expect("PUNCT", ")")
        body = self.parse_block(None)
        return While(cond, body, loc=tok.loc)

    def _for_stmt(self) -> list:
        # for (init; cond; step) { body }  desugars to  init; while (cond) { body; step; }
        tok = self.next()
        self.expect("PUNCT", "(")
        init = None
        if not self.at("PUNCT", ";"):
            init = self._simple_assign()
        self.expect("PUNCT", ";")
        cond = None
        if not self.at("PUNCT", ";"):
            cond = self.parse_expr()
        self.expect("PUNCT", ";")
        step = None
        if not self.at("PUNCT", ")"):
            step = self._simple_assign()
        self.expect("PUNCT", ")")
        body = self.parse_block(None)
        if cond is None:
            cond = IntLit(1, loc=tok.loc)
        if step is not None:
            body = body + [step]
        loop = While(cond, body, loc=tok.loc)
        return [init, loop] if init is not None else [loop]

    def _simple_assign(self) -> Assign:
        target = self.parse_unary()
        op_tok = self.peek()
        if not (op_tok.kind == "PUNCT" and op_tok.text in _ASSIGN_OPS):
            _fail("expected an assignment", op_tok.loc)
        self.next()
        value = self.parse_expr()
        return self._make_assign(target, op_tok, value)

    def _make_assign(self, target, op_tok: Token, value) -> Assign:
        if not isinstance(target, ast.LVALUE_NODES):
            _fail("assignment target is not an lvalue", op_tok.loc)
        if op_tok.text != "=":
            binop = op_tok.text[:-1]
            value = Binary(binop, _clone_lvalue(target), value, loc=op_tok.loc)
        return Assign(target, value, loc=op_tok.loc)

    def _expr_or_assign(self):
        start = self.peek()
        e = self.parse_expr()
        t = self.peek()
        if t.kind == "PUNCT" and t.text in _ASSIGN_OPS:
            self.next()
            value = self.parse_expr()
            stmt = self._make_assign(e, t, value)
            self.expect("PUNCT", ";")
            return stmt
        self.expect("PUNCT", ";")
        if isinstance(e, Call):
            if e.callee == "print":
                if len(e.args) != 1:
                    _fail("print takes exactly one argument", e.loc)
                return Print(e.args[0], loc=e.loc)
            return ExprStmt(e, loc=start.loc)
        _fail("expression statement must be a call", start.loc)

    # ---- expressions

    _LEVELS = [["|"], ["^"], ["&"], ["==", "!="], ["<", ">", "<=", ">="],
               ["<<", ">>"], ["+", "-"], ["*", "/", "%"]]

    def parse_expr(self, level: int = 0):
        if level == len(self._LEVELS):
            return self.parse_unary()
        ops = self._LEVELS[level]
        left = self.parse_expr(level + 1)
        while self.at("PUNCT") and self.peek().text in ops:
            op_tok = self.next()
            right = self.parse_expr(level + 1)
            left = Binary(op_tok.text, left, right, loc=op_tok.loc)
        return left

    def parse_unary(self):
        t = self.peek()
        if t.kind == "PUNCT" and t.text == "-":
            self.next()
            operand = self.parse_unary()
            if isinstance(operand, IntLit):
                return IntLit(-operand.value, loc=t.loc)
            return Unary("-", operand, loc=t.loc)
        if t.kind == "PUNCT" and t.text == "!":
            self.next()
            return Unary("!", self.parse_unary(), loc=t.loc)
        if t.kind == "PUNCT" and t.text == "*":
            self.next()
            return Deref(self.parse_postfix(), loc=t.loc)
        return self.parse_postfix()

    def parse_postfix(self):
        e = self.parse_primary()
        if self.at("PUNCT", "["):
            self.next()
            idx = self.parse_expr()
            self.expect("PUNCT", "]")
            e = Index(e, idx, loc=e.loc)
        return e

    def parse_primary(self):
        t = self.peek()
        if t.kind == "INT":
            self.next()
            return IntLit(int(t.text, 0), loc=t.loc)
        if t.kind == "STRING":
            self.next()
            return StrLit(t.text, loc=t.loc)
        if t.kind == "IDENT":
            self.next()
            if self.at("PUNCT", "("):
                self.next()
                args = []
                if not self.at("PUNCT", ")"):
                    while True:
                        args.append(self.parse_expr())
                        if self.at("PUNCT", ","):
                            self.next()
                            continue
                        break
                self.expect("PUNCT", ")")
                return Call(t.text, args, loc=t.loc)
            return Name(t.text, loc=t.loc)
        if t.kind == "PUNCT" and t.text == "(":
            self.next()
            if self.at("KEYWORD") and self.peek().text in _TYPE_NAMES:
                ty_tok = self.next()
                self.expect("PUNCT", ")")
                operand = self.parse_unary()
                return Cast(_TYPE_NAMES[ty_tok.text], operand, loc=t.loc)
            e = self.parse_expr()
            self.expect("PUNCT", ")")
            return e
        _fail(f"unexpected '{t.text or t.kind}' in expression", t.loc)


def _clone_lvalue(e):
    if isinstance(e, Name):
        return Name(e.ident, loc=e.loc)
    if isinstance(e, Deref):
        return Deref(_clone_lvalue(e.ptr) if isinstance(e.ptr, ast.LVALUE_NODES) else e.ptr, loc=e.loc)
    if isinstance(e, Index):
        return Index(e.base, e.index, loc=e.loc)
    return e


def parse_module_raw(text: str, filename: str = "<input>") -> SourceModule:
    """Parse without semantic analysis. Mostly useful in tests."""
    module = Parser(text, filename).parse()
    module.target_regions = _collect_regions(module)
    for i, region in enumerate(module.target_regions):
        region.region_id = i
    return module


def _collect_regions(module: SourceModule) -> list[TargetRegion]:
    regions: list[TargetRegion] = []
    for d in module.declarations:
        if isinstance(d, FunctionDecl) and d.body is not None:
            for s in ast.walk_stmts(d.body):
                if isinstance(s, TargetStmt):
                    regions.append(s.region)
    return regions


def parse_module(text: str, filename: str = "<input>") -> SourceModule:
    """Parse and validate; the result is type-annotated and capture-resolved."""
    from .sema import analyze
    module = parse_module_raw(text, filename)
    analyze(module)
    return module
