"""Lowering passes that run between analysis and code emission.

lower_atomics pattern-matches atomic capture blocks against the fixed set of
representable shapes and replaces each with a single atomic operation node.
specialize resolves declare variants for one target, renames the winners,
and rewires calls.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

from .ast import (
    Allocator,
    Assign,
    AtomicConstruct,
    AtomicIntrinsic,
    AtomicStmt,
    Binary,
    Call,
    Deref,
    Expr,
    FunctionDecl,
    GlobalDecl,
    If,
    SourceModule,
    Stmt,
    TargetStmt,
    While,
    walk_exprs,
)
from .diagnostics import CompileError, Diagnostic
from .intrinsics import IntrinsicKind
from .selectors import TargetDesc, resolve_variant
from .sema import analyze


class NotRepresentable(CompileError):
    """The atomic block does not match any single hardware atomic."""


def _reject(construct: AtomicConstruct, reason: str) -> None:
    loc = construct.loc
    raise NotRepresentable(
        Diagnostic(
            f"atomic block is not representable as one atomic operation: {reason}",
            file=loc.file,
            line=loc.line,
            col=loc.col,
        )
    )


def _contains(haystack: Expr, needle: Expr) -> bool:
    return any(sub == needle for sub in walk_exprs(haystack))


_COMPARE_KINDS = {
    "<": IntrinsicKind.ATOMIC_MAX,
    ">": IntrinsicKind.ATOMIC_MIN,
    "==": IntrinsicKind.ATOMIC_CAS,
}


def lower_atomic(construct: AtomicConstruct) -> AtomicIntrinsic:
    """Map a capture block onto one atomic operation or raise NotRepresentable.

    The recognized blocks, with v the capture target and x the location:
      { v = *x; *x += e; }                -> fetch-add
      { v = *x; *x = e; }                 -> exchange
      { v = *x; if (*x < e) { *x = e; } } -> max (needs compare clause)
      { v = *x; if (*x > e) { *x = e; } } -> min (needs compare clause)
      { v = *x; if (*x == e) { *x = d; } }-> compare-and-swap (needs compare)
    """
    if not construct.has_capture:
        _reject(construct, "a capture clause is required")
    block = construct.block
    if len(block) != 2:
        _reject(construct, "the block must hold exactly a capture and an update")

    head = block[0]
    if not isinstance(head, Assign) or not isinstance(head.value, Deref):
        _reject(construct, "the first statement must capture '*x' into a variable")
    if isinstance(head.target, Deref):
        _reject(construct, "the capture target must not be the location itself")
    v = head.target
    x = head.value.ptr
    star_x = Deref(x)

    tail = block[1]
    if isinstance(tail, Assign):
        if construct.has_compare:
            _reject(construct, "the compare clause needs a conditional update")
        if tail.target != star_x:
            _reject(construct, "the update must write through the captured location")
        value = tail.value
        if isinstance(value, Binary):
            if value.op != "+":
                _reject(construct, f"update operator '{value.op}' has no atomic form")
            if value.left != star_x:
                _reject(construct, "the location must be the left operand of the update")
            e = value.right
            kind = IntrinsicKind.ATOMIC_ADD
        else:
            e = value
            kind = IntrinsicKind.ATOMIC_XCHG
        _check_operand(construct, e, star_x, v)
        return AtomicIntrinsic(kind=kind, x=x, e=e, v=v, loc=construct.loc)

    if isinstance(tail, If):
        if not construct.has_compare:
            _reject(construct, "a conditional update needs the compare clause")
        if tail.else_body:
            _reject(construct, "a conditional update cannot have an else branch")
        cond = tail.cond
        if not isinstance(cond, Binary) or cond.op not in _COMPARE_KINDS:
            op = cond.op if isinstance(cond, Binary) else "?"
            _reject(construct, f"comparison '{op}' has no atomic form")
        if cond.left != star_x:
            _reject(construct, "the location must be the left operand of the comparison")
        e = cond.right
        kind = _COMPARE_KINDS[cond.op]
        if len(tail.then_body) != 1 or not isinstance(tail.then_body[0], Assign):
            _reject(construct, "the conditional branch must hold exactly one store")
        store = tail.then_body[0]
        if store.target != star_x:
            _reject(construct, "the update must write through the captured location")
        _check_operand(construct, e, star_x, v)
        if kind is IntrinsicKind.ATOMIC_CAS:
            d = store.value
            _check_operand(construct, d, star_x, v)
            return AtomicIntrinsic(kind=kind, x=x, e=e, v=v, d=d, loc=construct.loc)
        if store.value != e:
            _reject(construct, "min and max must store the compared value")
        return AtomicIntrinsic(kind=kind, x=x, e=e, v=v, loc=construct.loc)

    _reject(construct, "the second statement must be a store or a conditional store")
    raise AssertionError("unreachable")


def _check_operand(construct: AtomicConstruct, e: Expr, star_x: Expr, v: Expr) -> None:
    if _contains(e, star_x):
        _reject(construct, "the operand must not read the atomic location")
    if _contains(e, v):
        _reject(construct, "the operand must not read the capture variable")


def _lower_block(stmts: list[Stmt]) -> None:
    for i, s in enumerate(stmts):
        if isinstance(s, AtomicStmt):
            stmts[i] = lower_atomic(s.construct)
        elif isinstance(s, If):
            _lower_block(s.then_body)
            if s.else_body:
                _lower_block(s.else_body)
        elif isinstance(s, While):
            _lower_block(s.body)
        elif isinstance(s, TargetStmt):
            _lower_block(s.region.body)


def lower_atomics(module: SourceModule) -> SourceModule:
    """Replace every atomic construct in place; returns the same module."""
    for fn in module.functions():
        if fn.body is not None:
            _lower_block(fn.body)
    return module


# ---- global placement ----


@dataclass(frozen=True)
class Placement:
    """Where a global lives on the device and how its storage starts."""

    space: str  # "global" | "team_shared"
    init: str  # "zero" | "explicit" | "none"


def place_global(g: GlobalDecl) -> Placement:
    """Decide the memory space and initialization class for one global.

    The pteam and cgroup allocators are equivalent: both request per-team
    shared storage. loader_uninitialized leaves the storage unwritten, so it
    cannot be combined with an explicit initializer.
    """
    if g.loader_uninitialized and g.init is not None:
        raise CompileError(
            Diagnostic(
                f"'{g.name}' cannot be loader_uninitialized and initialized",
                file=g.loc.file,
                line=g.loc.line,
                col=g.loc.col,
            )
        )
    space = "global" if g.allocator is Allocator.DEFAULT else "team_shared"
    if g.loader_uninitialized:
        init = "none"
    elif g.init is not None:
        init = "explicit"
    else:
        init = "zero"
    return Placement(space, init)


# ---- variant specialization ----


def mangle_variant(base: str, selector) -> str:
    from .selectors import Extension

    name = f"{base}.ompvariant"
    if selector.device_arch is not None:
        name += "." + "_".join(selector.device_arch)
    if selector.extension is not Extension.NONE:
        name += f".{selector.extension.value}"
    return name


@dataclass
class SpecializedModule:
    """One module with every variant decision applied for one target."""

    target: TargetDesc
    module: SourceModule
    renames: dict[str, str] = field(default_factory=dict)  # base -> mangled


def _rewire_calls(module: SourceModule, renames: dict[str, str]) -> None:
    if not renames:
        return
    for fn in module.functions():
        if fn.body is None:
            continue
        from .ast import walk_stmts, stmt_exprs

        for s in walk_stmts(fn.body):
            for root in stmt_exprs(s):
                for e in walk_exprs(root):
                    if isinstance(e, Call) and e.callee in renames:
                        e.callee = renames[e.callee]


def specialize(module: SourceModule, target: TargetDesc) -> SpecializedModule:
    """Resolve declare variants against one target description.

    The input module is not modified. In the result, each base with a winning
    variant is replaced at its declaration site by the variant body under a
    mangled name, losing variants are dropped, and every call to the base is
    rewired to the mangled name. Bases with no matching variant stay as they
    are, which leaves any compile-time error call inside them live.
    """
    work = copy.deepcopy(module)
    info = getattr(work, "info", None)
    if info is None:
        info = analyze(work)

    winners: dict[str, FunctionDecl] = {}
    renames: dict[str, str] = {}
    for base_name, candidates in info.variants.items():
        chosen = resolve_variant(base_name, candidates, target)
        if chosen is not None:
            winners[base_name] = chosen
            _, selector = chosen.variant_of
            renames[base_name] = mangle_variant(base_name, selector)

    decls: list[object] = []
    span: set[int] = set()
    for idx, d in enumerate(work.declarations):
        if isinstance(d, FunctionDecl) and d.variant_of is not None:
            continue  # variant declarations fold into their base slot
        if isinstance(d, FunctionDecl) and d.name in winners:
            w = winners[d.name]
            d = FunctionDecl(
                name=renames[d.name],
                params=w.params,
                ret=w.ret,
                body=w.body,
                variant_of=None,
                loc=w.loc,
            )
        if isinstance(d, GlobalDecl):
            d.placement = place_global(d)
        if work.in_device_span(idx):
            span.add(len(decls))
        decls.append(d)

    out = SourceModule(
        declarations=decls,
        target_regions=work.target_regions,
        device_span=span,
        filename=work.filename,
    )
    _rewire_calls(out, renames)
    analyze(out)
    return SpecializedModule(target=target, module=out, renames=renames)
