"""Source re-emission and AST tree dumps.

render_module produces compilable source whose parse is structurally equal
to the input module, which pins the grammar from both sides in tests.
"""

from __future__ import annotations

from .ast import (
    Assign,
    AtomicIntrinsic,
    AtomicStmt,
    Binary,
    Call,
    Cast,
    Deref,
    Expr,
    ExprStmt,
    FunctionDecl,
    GlobalDecl,
    If,
    Index,
    IntLit,
    LocalDecl,
    Name,
    Print,
    PtrType,
    Return,
    ScalarType,
    SourceModule,
    Stmt,
    StrLit,
    TargetStmt,
    Unary,
    While,
    Allocator,
)

_PREC = {
    "|": 1,
    "^": 2,
    "&": 3,
    "==": 4,
    "!=": 4,
    "<": 5,
    "<=": 5,
    ">": 5,
    ">=": 5,
    "<<": 6,
    ">>": 6,
    "+": 7,
    "-": 7,
    "*": 8,
    "/": 8,
    "%": 8,
}
_UNARY_PREC = 9


def render_type(ty: object) -> str:
    if isinstance(ty, PtrType):
        return f"{ty.elem.value} *"
    assert isinstance(ty, ScalarType)
    return ty.value


def _render_expr(e: Expr, parent_prec: int = 0, right_side: bool = False) -> str:
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, StrLit):
        escaped = e.value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(e, Name):
        return e.ident
    if isinstance(e, Call):
        args = ", ".join(_render_expr(a) for a in e.args)
        return f"{e.callee}({args})"
    if isinstance(e, Deref):
        inner = _render_expr(e.ptr, _UNARY_PREC)
        return f"*{inner}"
    if isinstance(e, Unary):
        inner = _render_expr(e.operand, _UNARY_PREC)
        return f"{e.op}{inner}"
    if isinstance(e, Cast):
        inner = _render_expr(e.operand, _UNARY_PREC)
        return f"({e.to.value}){inner}"
    if isinstance(e, Index):
        base = _render_expr(e.base, _UNARY_PREC)
        return f"{base}[{_render_expr(e.index)}]"
    assert isinstance(e, Binary)
    prec = _PREC[e.op]
    text = "{} {} {}".format(
        _render_expr(e.left, prec),
        e.op,
        _render_expr(e.right, prec, right_side=True),
    )
    # Left associativity: a - (b - c) must keep parentheses on the right.
    if prec < parent_prec or (prec == parent_prec and right_side):
        return f"({text})"
    return text


def _emit_block(stmts: list[Stmt], out: list[str], depth: int) -> None:
    for s in stmts:
        _emit_stmt(s, out, depth)


def _emit_stmt(s: Stmt, out: list[str], depth: int) -> None:
    pad = "  " * depth
    if isinstance(s, LocalDecl):
        if s.count is None:
            out.append(f"{pad}{s.ty.value} {s.name};")
        else:
            out.append(f"{pad}{s.ty.value} {s.name}[{s.count}];")
    elif isinstance(s, Assign):
        out.append(f"{pad}{_render_expr(s.target)} = {_render_expr(s.value)};")
    elif isinstance(s, If):
        out.append(f"{pad}if ({_render_expr(s.cond)}) {{")
        _emit_block(s.then_body, out, depth + 1)
        if s.else_body:
            out.append(f"{pad}}} else {{")
            _emit_block(s.else_body, out, depth + 1)
        out.append(f"{pad}}}")
    elif isinstance(s, While):
        out.append(f"{pad}while ({_render_expr(s.cond)}) {{")
        _emit_block(s.body, out, depth + 1)
        out.append(f"{pad}}}")
    elif isinstance(s, Return):
        if s.value is None:
            out.append(f"{pad}return;")
        else:
            out.append(f"{pad}return {_render_expr(s.value)};")
    elif isinstance(s, ExprStmt):
        out.append(f"{pad}{_render_expr(s.expr)};")
    elif isinstance(s, Print):
        out.append(f"{pad}print({_render_expr(s.value)});")
    elif isinstance(s, AtomicStmt):
        c = s.construct
        clauses = ""
        if c.has_compare:
            clauses += " compare"
        if c.has_capture:
            clauses += " capture"
        out.append(f"#pragma omp atomic{clauses} seq_cst")
        out.append(f"{pad}{{")
        _emit_block(c.block, out, depth + 1)
        out.append(f"{pad}}}")
    elif isinstance(s, AtomicIntrinsic):
        name = "__" + s.kind.name.lower()
        args = [s.x, s.e] + ([s.d] if s.d is not None else [])
        rendered = ", ".join(_render_expr(a) for a in args)
        out.append(f"{pad}{_render_expr(s.v)} = {name}({rendered});")
    elif isinstance(s, TargetStmt):
        r = s.region
        clauses = ""
        if r.num_teams is not None:
            clauses += f" num_teams({r.num_teams})"
        if r.thread_limit is not None:
            clauses += f" thread_limit({r.thread_limit})"
        out.append(f"#pragma omp target{clauses}")
        out.append(f"{pad}{{")
        _emit_block(r.body, out, depth + 1)
        out.append(f"{pad}}}")
    else:
        raise TypeError(f"unprintable statement: {type(s).__name__}")


def _emit_global(g: GlobalDecl, out: list[str]) -> None:
    prefix = "extern " if g.is_extern else ""
    suffix = f"[{g.count}]" if g.count is not None else ""
    attr = " [[loader_uninitialized]]" if g.loader_uninitialized else ""
    init = f" = {g.init}" if g.init is not None else ""
    out.append(f"{prefix}{g.ty.value} {g.name}{suffix}{attr}{init};")
    if g.allocator is not Allocator.DEFAULT:
        out.append(f"#pragma omp allocate({g.name}) allocator({g.allocator.value})")


def _emit_function(f: FunctionDecl, out: list[str]) -> None:
    ret = f.ret.value if f.ret is not None else "void"
    params = ", ".join(
        (f"{p.ty.elem.value} *{p.name}" if isinstance(p.ty, PtrType) else f"{p.ty.value} {p.name}")
        for p in f.params
    )
    header = f"{ret} {f.name}({params})"
    if f.body is None:
        out.append(f"extern {header};")
        return
    out.append(f"{header} {{")
    _emit_block(f.body, out, 1)
    out.append("}")


def render_module(module: SourceModule) -> str:
    out: list[str] = []
    in_span = False
    for idx, decl in enumerate(module.declarations):
        want_span = module.in_device_span(idx)
        if want_span and not in_span:
            out.append("#pragma omp begin declare target")
            in_span = True
        elif in_span and not want_span:
            out.append("#pragma omp end declare target")
            in_span = False
        if isinstance(decl, GlobalDecl):
            _emit_global(decl, out)
        else:
            assert isinstance(decl, FunctionDecl)
            if decl.variant_of is not None:
                base, selector = decl.variant_of
                out.append(
                    f"#pragma omp begin declare variant match({selector.render()})"
                )
                _emit_function(decl, out)
                out.append("#pragma omp end declare variant")
            else:
                _emit_function(decl, out)
        out.append("")
    if in_span:
        out.append("#pragma omp end declare target")
        out.append("")
    return "\n".join(out)


# ---- tree dump ----


def _dump_expr(e: Expr, out: list[str], depth: int) -> None:
    pad = "  " * depth
    if isinstance(e, IntLit):
        out.append(f"{pad}int {e.value}")
    elif isinstance(e, StrLit):
        out.append(f"{pad}str {e.value!r}")
    elif isinstance(e, Name):
        out.append(f"{pad}name {e.ident}")
    elif isinstance(e, Deref):
        out.append(f"{pad}deref")
        _dump_expr(e.ptr, out, depth + 1)
    elif isinstance(e, Index):
        out.append(f"{pad}index")
        _dump_expr(e.base, out, depth + 1)
        _dump_expr(e.index, out, depth + 1)
    elif isinstance(e, Unary):
        out.append(f"{pad}unary {e.op}")
        _dump_expr(e.operand, out, depth + 1)
    elif isinstance(e, Binary):
        out.append(f"{pad}binary {e.op}")
        _dump_expr(e.left, out, depth + 1)
        _dump_expr(e.right, out, depth + 1)
    elif isinstance(e, Cast):
        out.append(f"{pad}cast {e.to.value}")
        _dump_expr(e.operand, out, depth + 1)
    else:
        assert isinstance(e, Call)
        out.append(f"{pad}call {e.callee}")
        for a in e.args:
            _dump_expr(a, out, depth + 1)


def _dump_stmt(s: Stmt, out: list[str], depth: int) -> None:
    pad = "  " * depth
    if isinstance(s, LocalDecl):
        count = f"[{s.count}]" if s.count is not None else ""
        out.append(f"{pad}local {s.ty.value} {s.name}{count}")
    elif isinstance(s, Assign):
        out.append(f"{pad}assign")
        _dump_expr(s.target, out, depth + 1)
        _dump_expr(s.value, out, depth + 1)
    elif isinstance(s, If):
        out.append(f"{pad}if")
        _dump_expr(s.cond, out, depth + 1)
        out.append(f"{pad}then")
        for t in s.then_body:
            _dump_stmt(t, out, depth + 1)
        if s.else_body:
            out.append(f"{pad}else")
            for t in s.else_body:
                _dump_stmt(t, out, depth + 1)
    elif isinstance(s, While):
        out.append(f"{pad}while")
        _dump_expr(s.cond, out, depth + 1)
        for t in s.body:
            _dump_stmt(t, out, depth + 1)
    elif isinstance(s, Return):
        out.append(f"{pad}return")
        if s.value is not None:
            _dump_expr(s.value, out, depth + 1)
    elif isinstance(s, ExprStmt):
        out.append(f"{pad}expr")
        _dump_expr(s.expr, out, depth + 1)
    elif isinstance(s, Print):
        out.append(f"{pad}print")
        _dump_expr(s.value, out, depth + 1)
    elif isinstance(s, AtomicStmt):
        c = s.construct
        flags = []
        if c.has_compare:
            flags.append("compare")
        if c.has_capture:
            flags.append("capture")
        flags.append("seq_cst")
        out.append(f"{pad}atomic {' '.join(flags)}")
        for t in c.block:
            _dump_stmt(t, out, depth + 1)
    elif isinstance(s, AtomicIntrinsic):
        out.append(f"{pad}atomic-op {s.kind.name.lower()}")
        for label, e in (("x", s.x), ("e", s.e), ("v", s.v), ("d", s.d)):
            if e is not None:
                out.append(f"{pad}  {label}:")
                _dump_expr(e, out, depth + 2)
    else:
        assert isinstance(s, TargetStmt)
        r = s.region
        grid = []
        if r.num_teams is not None:
            grid.append(f"num_teams={r.num_teams}")
        if r.thread_limit is not None:
            grid.append(f"thread_limit={r.thread_limit}")
        caps = ", ".join(name for name, _ in r.captured_args)
        head = f"{pad}target region={r.region_id}"
        if grid:
            head += " " + " ".join(grid)
        if caps:
            head += f" captures({caps})"
        out.append(head)
        for t in r.body:
            _dump_stmt(t, out, depth + 1)


def dump_ast(module: SourceModule) -> str:
    out = [f"module {module.filename}"]
    for idx, decl in enumerate(module.declarations):
        span = " device" if module.in_device_span(idx) else ""
        if isinstance(decl, GlobalDecl):
            count = f"[{decl.count}]" if decl.count is not None else ""
            bits = []
            if decl.is_extern:
                bits.append("extern")
            if decl.allocator is not Allocator.DEFAULT:
                bits.append(f"allocator={decl.allocator.value}")
            if decl.loader_uninitialized:
                bits.append("loader_uninitialized")
            if decl.init is not None:
                bits.append(f"init={decl.init}")
            tail = (" " + " ".join(bits)) if bits else ""
            out.append(f"  global{span} {decl.ty.value} {decl.name}{count}{tail}")
        else:
            assert isinstance(decl, FunctionDecl)
            ret = decl.ret.value if decl.ret is not None else "void"
            params = ", ".join(render_type(p.ty) + p.name for p in decl.params)
            variant = ""
            if decl.variant_of is not None:
                base, selector = decl.variant_of
                variant = f" variant-of {base} match({selector.render()})"
            out.append(f"  function{span} {ret} {decl.name}({params}){variant}")
            if decl.body is not None:
                for s in decl.body:
                    _dump_stmt(s, out, 2)
    return "\n".join(out) + "\n"
