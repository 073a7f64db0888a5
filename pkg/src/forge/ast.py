"""AST node types produced by the parser and consumed by every later stage.

Source locations never participate in equality, so two parses of equivalent
text compare equal node-for-node. AtomicIntrinsic is produced by lowering
only; the parser never builds one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, auto

from .intrinsics import IntrinsicKind
from .lexer import Loc
from .selectors import ContextSelector


class ScalarType(Enum):
    I32 = "i32"
    U32 = "u32"
    I64 = "i64"
    U64 = "u64"

    @property
    def bits(self) -> int:
        return 32 if self in (ScalarType.I32, ScalarType.U32) else 64

    @property
    def size(self) -> int:
        return self.bits // 8

    @property
    def signed(self) -> bool:
        return self in (ScalarType.I32, ScalarType.I64)


@dataclass(frozen=True)
class PtrType:
    elem: ScalarType

    def __str__(self) -> str:
        return f"ptr<{self.elem.value}>"


Type = "ScalarType | PtrType"


def _loc() -> Loc:
    return Loc(0, 0)


# ============================================================ expressions

@dataclass
class Expr:
    pass


@dataclass
class IntLit(Expr):
    value: int
    loc: Loc = field(compare=False, default_factory=_loc)
    ty: ScalarType | None = field(compare=False, default=None)


@dataclass
class StrLit(Expr):
    value: str
    loc: Loc = field(compare=False, default_factory=_loc)
    ty: None = field(compare=False, default=None)


@dataclass
class Name(Expr):
    ident: str
    loc: Loc = field(compare=False, default_factory=_loc)
    ty: object = field(compare=False, default=None)


@dataclass
class Deref(Expr):
    """*p where p is a buffer reference; element 0."""
    ptr: Expr
    loc: Loc = field(compare=False, default_factory=_loc)
    ty: object = field(compare=False, default=None)


@dataclass
class Index(Expr):
    base: Expr
    index: Expr
    loc: Loc = field(compare=False, default_factory=_loc)
    ty: object = field(compare=False, default=None)


@dataclass
class Unary(Expr):
    op: str  # - !
    operand: Expr
    loc: Loc = field(compare=False, default_factory=_loc)
    ty: object = field(compare=False, default=None)


@dataclass
class Binary(Expr):
    op: str
    left: Expr
    right: Expr
    loc: Loc = field(compare=False, default_factory=_loc)
    ty: object = field(compare=False, default=None)


@dataclass
class Cast(Expr):
    to: ScalarType
    operand: Expr
    loc: Loc = field(compare=False, default_factory=_loc)
    ty: object = field(compare=False, default=None)


@dataclass
class Call(Expr):
    callee: str
    args: list[Expr]
    loc: Loc = field(compare=False, default_factory=_loc)
    ty: object = field(compare=False, default=None)
    # Set by sema when callee is a recognized builtin.
    intrinsic: IntrinsicKind | None = field(compare=False, default=None)


# ============================================================ statements

@dataclass
class Stmt:
    pass


@dataclass
class LocalDecl(Stmt):
    name: str
    ty: ScalarType
    count: int | None = None  # None: scalar slot; int: private array
    loc: Loc = field(compare=False, default_factory=_loc)


@dataclass
class Assign(Stmt):
    target: Expr  # Name | Deref | Index
    value: Expr
    loc: Loc = field(compare=False, default_factory=_loc)


@dataclass
class If(Stmt):
    cond: Expr
    then_body: list[Stmt]
    else_body: list[Stmt] | None = None
    loc: Loc = field(compare=False, default_factory=_loc)


@dataclass
class While(Stmt):
    cond: Expr
    body: list[Stmt]
    loc: Loc = field(compare=False, default_factory=_loc)


@dataclass
class Return(Stmt):
    value: Expr | None = None
    loc: Loc = field(compare=False, default_factory=_loc)


@dataclass
class ExprStmt(Stmt):
    expr: Expr
    loc: Loc = field(compare=False, default_factory=_loc)


@dataclass
class Print(Stmt):
    value: Expr
    loc: Loc = field(compare=False, default_factory=_loc)


@dataclass
class AtomicConstruct:
    """Parsed `#pragma omp atomic ...` plus its statement block.

    Ordering is always seq_cst; the parser rejects anything else. The block
    is validated against the canonical shapes by lowering, not here.
    """
    has_capture: bool
    has_compare: bool
    block: list[Stmt]
    loc: Loc = field(compare=False, default_factory=_loc)


@dataclass
class AtomicStmt(Stmt):
    construct: AtomicConstruct
    loc: Loc = field(compare=False, default_factory=_loc)


@dataclass
class AtomicIntrinsic(Stmt):
    """Lowered atomic operation: a single intrinsic with optional capture.

    kind is one of the ATOMIC_* intrinsic kinds; x is the memory operand
    lvalue, e the operand expression, d the replacement for CAS, v the
    capture destination (old value of x).
    """
    kind: IntrinsicKind
    x: Expr
    e: Expr
    v: Expr
    d: Expr | None = None
    loc: Loc = field(compare=False, default_factory=_loc)


@dataclass
class TargetRegion:
    region_id: int
    body: list[Stmt]
    num_teams: int | None = None
    thread_limit: int | None = None
    # (name, type) in first-occurrence order; filled by sema.
    captured_args: list[tuple[str, object]] = field(default_factory=list)
    loc: Loc = field(compare=False, default_factory=_loc)


@dataclass
class TargetStmt(Stmt):
    region: TargetRegion
    loc: Loc = field(compare=False, default_factory=_loc)


# ============================================================ declarations

class Allocator(Enum):
    DEFAULT = "default"
    PTEAM = "omp_pteam_mem_alloc"
    CGROUP = "omp_cgroup_mem_alloc"


@dataclass
class Param:
    name: str
    ty: object  # ScalarType | PtrType


@dataclass
class GlobalDecl:
    name: str
    ty: ScalarType
    count: int | None = None  # None: scalar; int: array of scalars
    init: int | None = None  # explicit scalar initializer
    allocator: Allocator = Allocator.DEFAULT
    loader_uninitialized: bool = False
    is_extern: bool = False
    loc: Loc = field(compare=False, default_factory=_loc)
    placement: object = field(compare=False, default=None)

    @property
    def size(self) -> int:
        return self.ty.size * (self.count if self.count is not None else 1)


@dataclass
class FunctionDecl:
    name: str
    params: list[Param]
    ret: ScalarType | None  # None is void
    body: list[Stmt] | None = None  # None for extern declarations
    # (base name, selector) when this declaration sits in a variant region.
    variant_of: tuple[str, ContextSelector] | None = None
    loc: Loc = field(compare=False, default_factory=_loc)

    @property
    def signature(self) -> tuple:
        return (tuple(p.ty for p in self.params), self.ret)


@dataclass
class SourceModule:
    declarations: list[object] = field(default_factory=list)  # GlobalDecl | FunctionDecl
    target_regions: list[TargetRegion] = field(default_factory=list)
    device_span: set[int] = field(default_factory=set)  # declaration indices
    filename: str = field(compare=False, default="<input>")

    def in_device_span(self, index: int) -> bool:
        return index in self.device_span

    def functions(self) -> list[FunctionDecl]:
        return [d for d in self.declarations if isinstance(d, FunctionDecl)]

    def globals(self) -> list[GlobalDecl]:
        return [d for d in self.declarations if isinstance(d, GlobalDecl)]


LVALUE_NODES = (Name, Deref, Index)


def walk_stmts(stmts: list[Stmt]):
    """Yield every statement in nesting order, including atomic block bodies."""
    for s in stmts:
        yield s
        if isinstance(s, If):
            yield from walk_stmts(s.then_body)
            if s.else_body:
                yield from walk_stmts(s.else_body)
        elif isinstance(s, While):
            yield from walk_stmts(s.body)
        elif isinstance(s, AtomicStmt):
            yield from walk_stmts(s.construct.block)
        elif isinstance(s, TargetStmt):
            yield from walk_stmts(s.region.body)


def walk_exprs(e: Expr):
    yield e
    if isinstance(e, Deref):
        yield from walk_exprs(e.ptr)
    elif isinstance(e, Index):
        yield from walk_exprs(e.base)
        yield from walk_exprs(e.index)
    elif isinstance(e, Unary):
        yield from walk_exprs(e.operand)
    elif isinstance(e, Binary):
        yield from walk_exprs(e.left)
        yield from walk_exprs(e.right)
    elif isinstance(e, Cast):
        yield from walk_exprs(e.operand)
    elif isinstance(e, Call):
        for a in e.args:
            yield from walk_exprs(a)


def stmt_exprs(s: Stmt):
    if isinstance(s, Assign):
        yield s.target
        yield s.value
    elif isinstance(s, If):
        yield s.cond
    elif isinstance(s, While):
        yield s.cond
    elif isinstance(s, Return) and s.value is not None:
        yield s.value
    elif isinstance(s, ExprStmt):
        yield s.expr
    elif isinstance(s, Print):
        yield s.value
    elif isinstance(s, AtomicIntrinsic):
        yield s.x
        yield s.e
        yield s.v
        if s.d is not None:
            yield s.d
