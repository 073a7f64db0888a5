"""Code emission: AST to textual IR, plus linking against the device runtime.

Scalar locals become named slots and every expression result becomes a fresh
numbered temporary, so two functions with the same statement shape emit the
same instruction sequence no matter which surface form produced them.
"""

from __future__ import annotations

from functools import lru_cache

from . import ast
from .ast import (
    Assign,
    AtomicIntrinsic,
    Binary,
    Call,
    Cast,
    Deref,
    ExprStmt,
    FunctionDecl,
    GlobalDecl,
    If,
    Index,
    IntLit,
    LocalDecl,
    Name,
    PtrType,
    Return,
    ScalarType,
    SourceModule,
    StrLit,
    TargetRegion,
    Unary,
    While,
)
from .diagnostics import CompileError, Diagnostic
from .intrinsics import ATOMIC_KINDS, IntrinsicKind
from .ir import (
    DiffReport,
    Instr,
    IRBlock,
    IRFunc,
    IRGlobal,
    IRModule,
    IRSlot,
    TERMINATORS,
    diff_ir,
    normalize_ir,
)
from .lowering import SpecializedModule, lower_atomics, place_global, specialize
from .selectors import TargetDesc


class MissingIntrinsic(CompileError):
    """A compile-time error call survived variant resolution to emission."""


KERNEL_PREFIX = "__omp_offload_"


def kernel_name(region_id: int) -> str:
    return f"{KERNEL_PREFIX}{region_id}"


def _ty_str(ty: object) -> str:
    if isinstance(ty, PtrType):
        return f"ptr<{ty.elem.value}>"
    assert isinstance(ty, ScalarType)
    return ty.value


# Generic atomics are type parametric; the increment is fixed at u32.
_TYPED_ATOMICS = frozenset(ATOMIC_KINDS) - {IntrinsicKind.ATOMIC_INC}

_BIN_OPS = {
    "+": "add",
    "-": "sub",
    "*": "mul",
    "&": "and",
    "|": "or",
    "^": "xor",
    "<<": "shl",
}
_CMP_CCS = {"==": "eq", "!=": "ne", "<": "lt", "<=": "le", ">": "gt", ">=": "ge"}


class _Emitter:
    def __init__(self, spec_module: SourceModule, target: TargetDesc,
                 fn_name: str, params: list[tuple[str, object]],
                 ret: ScalarType | None):
        self.module = spec_module
        self.target = target
        self.func = IRFunc(
            name=fn_name,
            params=[(n, _ty_str(t)) for n, t in params],
            ret=ret.value if ret is not None else None,
        )
        self.ret = ret
        self.param_tys = dict(params)
        self.slot_tys: dict[str, tuple[ScalarType, int | None]] = {}
        self.n_temps = 0
        self.n_blocks = 0
        self.block = self._new_block()

    # ---- plumbing

    def _new_block(self) -> IRBlock:
        b = IRBlock(f"bb{self.n_blocks}")
        self.n_blocks += 1
        self.func.blocks.append(b)
        return b

    def _temp(self) -> str:
        t = str(self.n_temps)
        self.n_temps += 1
        return t

    def _ins(self, op: str, args: list[str], dst: bool = False) -> str | None:
        d = self._temp() if dst else None
        self.block.instrs.append(Instr(op, d, args))
        return f"%{d}" if dst else None

    def _terminated(self) -> bool:
        return bool(self.block.instrs) and self.block.instrs[-1].op in TERMINATORS

    def _fail(self, msg: str, node) -> None:
        loc = getattr(node, "loc", None)
        raise CompileError(Diagnostic(
            msg,
            file=getattr(loc, "file", "<input>"),
            line=getattr(loc, "line", 0),
            col=getattr(loc, "col", 0),
        ))

    # ---- declarations

    def collect_slots(self, stmts: list) -> None:
        for s in ast.walk_stmts(stmts):
            if isinstance(s, LocalDecl):
                self.slot_tys[s.name] = (s.ty, s.count)
                self.func.slots.append(IRSlot(s.name, s.ty.value, s.count))

    # ---- expressions

    def emit_expr(self, e) -> str:
        if isinstance(e, IntLit):
            return self._ins(f"const.{e.ty.value}", [str(e.value)], dst=True)
        if isinstance(e, Name):
            return self._emit_name_load(e)
        if isinstance(e, Deref):
            p = self.emit_expr(e.ptr)
            return self._ins(f"ld.{e.ty.value}", [p], dst=True)
        if isinstance(e, Index):
            addr = self._emit_elem_addr(e)
            return self._ins(f"ld.{e.ty.value}", [addr], dst=True)
        if isinstance(e, Unary):
            if e.op == "-":
                v = self.emit_expr(e.operand)
                return self._ins(f"neg.{e.ty.value}", [v], dst=True)
            v = self.emit_expr(e.operand)
            zero = self._ins(f"const.{e.operand.ty.value}", ["0"], dst=True)
            return self._ins(f"cmp.eq.{e.operand.ty.value}", [v, zero], dst=True)
        if isinstance(e, Binary):
            return self._emit_binary(e)
        if isinstance(e, Cast):
            v = self.emit_expr(e.operand)
            src = e.operand.ty
            if src == e.to:
                return v
            return self._ins(f"cast.{src.value}.{e.to.value}", [v], dst=True)
        if isinstance(e, Call):
            return self._emit_call(e)
        if isinstance(e, StrLit):
            self._fail("string literal outside error()", e)
        self._fail(f"unsupported expression {type(e).__name__}", e)

    def _emit_name_load(self, e: Name) -> str:
        kind = e.binding
        if kind in ("param", "capture"):
            return f"%{e.ident}"
        if kind == "local":
            ty, count = self.slot_tys[e.ident]
            if count is not None:
                return self._ins("addr.slot", [f"%{e.ident}"], dst=True)
            return self._ins("ld.slot", [f"%{e.ident}"], dst=True)
        assert kind == "global", f"unbound name {e.ident}"
        g = self.module.info.globals[e.ident]
        addr = self._ins("addr.gv", [f"@{e.ident}"], dst=True)
        if g.count is not None:
            return addr
        return self._ins(f"ld.{g.ty.value}", [addr], dst=True)

    def _emit_elem_addr(self, e: Index) -> str:
        base = self.emit_expr(e.base)
        idx = self.emit_expr(e.index)
        return self._ins(f"elem.addr.{e.ty.value}", [base, idx], dst=True)

    def _emit_addr(self, lv) -> str:
        if isinstance(lv, Name):
            if lv.binding == "local":
                return self._ins("addr.slot", [f"%{lv.ident}"], dst=True)
            assert lv.binding == "global"
            return self._ins("addr.gv", [f"@{lv.ident}"], dst=True)
        assert isinstance(lv, Index)
        return self._emit_elem_addr(lv)

    def _emit_binary(self, e: Binary) -> str:
        left = self.emit_expr(e.left)
        right = self.emit_expr(e.right)
        if e.op in _CMP_CCS:
            oty = e.operand_ty
            cc = _CMP_CCS[e.op]
            if cc not in ("eq", "ne"):
                cc = ("s" if oty.signed else "u") + cc
            return self._ins(f"cmp.{cc}.{oty.value}", [left, right], dst=True)
        ty = e.ty
        if e.op in _BIN_OPS:
            return self._ins(f"{_BIN_OPS[e.op]}.{ty.value}", [left, right], dst=True)
        if e.op == "/":
            op = "sdiv" if ty.signed else "udiv"
        elif e.op == "%":
            op = "srem" if ty.signed else "urem"
        elif e.op == ">>":
            op = "ashr" if ty.signed else "lshr"
        else:
            self._fail(f"unknown operator '{e.op}'", e)
        return self._ins(f"{op}.{ty.value}", [left, right], dst=True)

    # ---- calls and atomics

    def _intrinsic_op(self, kind: IntrinsicKind, elem: ScalarType | None, node) -> str:
        name = self.target.intrinsic_table.get(kind)
        if name is None:
            self._missing(kind, node)
        if kind in _TYPED_ATOMICS:
            assert elem is not None
            return f"{name}.{elem.value}"
        return name

    def _missing(self, kind: IntrinsicKind, node) -> None:
        if isinstance(node, Call) and kind is IntrinsicKind.ERROR:
            msg = node.args[0].value
            raise MissingIntrinsic(Diagnostic(
                f"no {self.target.arch} implementation: \"{msg}\"",
                file=node.loc.file, line=node.loc.line, col=node.loc.col))
        raise MissingIntrinsic(Diagnostic(
            f"intrinsic {kind.name} has no {self.target.arch} lowering",
            file=getattr(node.loc, "file", "<input>"),
            line=getattr(node.loc, "line", 0),
            col=getattr(node.loc, "col", 0)))

    def _emit_call(self, e: Call) -> str | None:
        kind = e.intrinsic
        if kind is None:
            args = [self.emit_expr(a) for a in e.args]
            has_result = e.ty is not None
            return self._ins("call", [f"@{e.callee}"] + args, dst=has_result)
        if kind is IntrinsicKind.ERROR:
            self._missing(kind, e)
        if kind in ATOMIC_KINDS:
            args = [self.emit_expr(a) for a in e.args]
            elem = e.ty
            op = self._intrinsic_op(kind, elem, e)
            return self._ins(op, args, dst=True)
        if kind is IntrinsicKind.TRAP:
            code = self.emit_expr(e.args[0])
            self._ins(self._intrinsic_op(kind, None, e), [code])
            return None
        if kind in (IntrinsicKind.THREADFENCE, IntrinsicKind.BARRIER):
            self._ins(self._intrinsic_op(kind, None, e), [])
            return None
        # Remaining kinds are the zero-argument queries.
        return self._ins(self._intrinsic_op(kind, None, e), [], dst=True)

    # ---- statements

    def emit_stmts(self, stmts: list) -> None:
        for s in stmts:
            if self._terminated():
                self._fail("unreachable statement after return", s)
            self.emit_stmt(s)

    def emit_stmt(self, s) -> None:
        if isinstance(s, LocalDecl):
            return  # slots are collected up front
        if isinstance(s, Assign):
            value = self.emit_expr(s.value)
            self._store(s.target, value)
            return
        if isinstance(s, If):
            self._emit_if(s)
            return
        if isinstance(s, While):
            self._emit_while(s)
            return
        if isinstance(s, Return):
            if s.value is None:
                self._ins("ret", [])
            else:
                v = self.emit_expr(s.value)
                self._ins("ret", [v])
            return
        if isinstance(s, ExprStmt):
            self._emit_call(s.expr)
            return
        if isinstance(s, AtomicIntrinsic):
            self._emit_atomic(s)
            return
        self._fail(f"statement {type(s).__name__} cannot appear on a device", s)

    def _store(self, lv, value: str) -> None:
        if isinstance(lv, Name):
            if lv.binding == "local":
                self._ins("st.slot", [f"%{lv.ident}", value])
                return
            assert lv.binding == "global"
            g = self.module.info.globals[lv.ident]
            addr = self._ins("addr.gv", [f"@{lv.ident}"], dst=True)
            self._ins(f"st.{g.ty.value}", [addr, value])
            return
        if isinstance(lv, Deref):
            p = self.emit_expr(lv.ptr)
            self._ins(f"st.{lv.ty.value}", [p, value])
            return
        assert isinstance(lv, Index)
        addr = self._emit_elem_addr(lv)
        self._ins(f"st.{lv.ty.value}", [addr, value])

    def _emit_atomic(self, s: AtomicIntrinsic) -> None:
        p = self.emit_expr(s.x)
        e = self.emit_expr(s.e)
        args = [p, e]
        if s.d is not None:
            args.append(self.emit_expr(s.d))
        elem = s.x.ty.elem
        op = self._intrinsic_op(s.kind, elem, s)
        old = self._ins(op, args, dst=True)
        self._store(s.v, old)

    def _emit_if(self, s: If) -> None:
        cond = self.emit_expr(s.cond)
        then_b = self._new_block()
        else_b = self._new_block() if s.else_body else None
        join = self._new_block()
        self._ins("cbr", [cond, then_b.label, else_b.label if else_b else join.label])
        self.block = then_b
        self.emit_stmts(s.then_body)
        if not self._terminated():
            self._ins("br", [join.label])
        if else_b is not None:
            self.block = else_b
            self.emit_stmts(s.else_body)
            if not self._terminated():
                self._ins("br", [join.label])
        self.block = join

    def _emit_while(self, s: While) -> None:
        head = self._new_block()
        self._ins("br", [head.label])
        self.block = head
        cond = self.emit_expr(s.cond)
        body_b = self._new_block()
        exit_b = self._new_block()
        self._ins("cbr", [cond, body_b.label, exit_b.label])
        self.block = body_b
        self.emit_stmts(s.body)
        if not self._terminated():
            self._ins("br", [head.label])
        self.block = exit_b

    # ---- finalize

    def finish(self, node) -> IRFunc:
        if not self._terminated():
            if self.block.instrs or self._is_referenced(self.block.label):
                if self.ret is not None:
                    self._fail("non-void function can fall off the end", node)
                self._ins("ret", [])
            else:
                self.func.blocks.remove(self.block)
        if not self.func.blocks:
            self.block = self._new_block()
            if self.ret is not None:
                self._fail("non-void function can fall off the end", node)
            self._ins("ret", [])
        return self.func

    def _is_referenced(self, label: str) -> bool:
        for b in self.func.blocks:
            for i in b.instrs:
                if i.op in ("br", "cbr") and label in i.args:
                    return True
        return False


def emit_function(spec: SpecializedModule, fn: FunctionDecl) -> IRFunc:
    em = _Emitter(spec.module, spec.target, fn.name,
                  [(p.name, p.ty) for p in fn.params], fn.ret)
    em.collect_slots(fn.body)
    em.emit_stmts(fn.body)
    return em.finish(fn)


def emit_kernel(spec: SpecializedModule, region: TargetRegion) -> IRFunc:
    em = _Emitter(spec.module, spec.target, kernel_name(region.region_id),
                  list(region.captured_args), None)
    em.collect_slots(region.body)
    em.emit_stmts(region.body)
    return em.finish(region)


def _global_ir(g: GlobalDecl) -> IRGlobal:
    p = g.placement if g.placement is not None else place_global(g)
    if p.init == "none":
        init: object = "none"
    elif p.init == "explicit":
        init = g.init
    else:
        init = "zero"
    return IRGlobal(g.name, p.space, g.ty.value, g.count or 1, init)


def emit_device_ir(spec: SpecializedModule, target: TargetDesc | None = None) -> IRModule:
    """Emit every device-span declaration plus one kernel per target region."""
    if target is not None and target.arch != spec.target.arch:
        raise CompileError(Diagnostic(
            f"module was specialized for '{spec.target.arch}', "
            f"not '{target.arch}'"))
    mod = spec.module
    out = IRModule(target=spec.target.arch)
    for idx, d in enumerate(mod.declarations):
        if not mod.in_device_span(idx):
            continue
        if isinstance(d, GlobalDecl):
            if not d.is_extern:
                out.globals.append(_global_ir(d))
        elif d.body is not None:
            out.funcs.append(emit_function(spec, d))
    for region in mod.target_regions:
        out.funcs.append(emit_kernel(spec, region))
    return out


# ---- runtime linking ----


def _base_name(name: str) -> str:
    marker = ".ompvariant"
    return name.split(marker, 1)[0] if marker in name else name


@lru_cache(maxsize=None)
def _runtime_ir(arch: str) -> IRModule:
    from .devicert import runtime_module
    from .selectors import TARGETS

    mod = lower_atomics(runtime_module())
    spec = specialize(mod, TARGETS[arch])
    return emit_device_ir(spec)


def link_runtime(user: IRModule, target: TargetDesc) -> IRModule:
    """Combine a user image with the device runtime for the same target.

    User symbols must not shadow runtime symbols; only runtime functions that
    the user image actually reaches are kept, and runtime globals survive
    only while some kept function still references them. The merged image
    must fit its static team-shared budget.
    """
    from .devicert import runtime_symbols

    rt = _runtime_ir(target.arch)
    taken = runtime_symbols()
    for f in user.funcs:
        if _base_name(f.name) in taken:
            raise CompileError(Diagnostic(
                f"'{_base_name(f.name)}' redefines a device runtime symbol"))
    for g in user.globals:
        if g.name in taken:
            raise CompileError(Diagnostic(
                f"'{g.name}' redefines a device runtime symbol"))

    # Calls in the user image name runtime entry points by their base name;
    # where variant resolution renamed the runtime definition, follow it.
    rt_renames = {
        _base_name(f.name): f.name for f in rt.funcs if ".ompvariant" in f.name
    }
    for f in user.funcs:
        for b in f.blocks:
            for i in b.instrs:
                if i.op == "call":
                    callee = i.args[0][1:]
                    if callee in rt_renames:
                        i.args[0] = "@" + rt_renames[callee]

    rt_funcs = {f.name: f for f in rt.funcs}
    kept: dict[str, IRFunc] = {}
    work = list(user.funcs)
    while work:
        f = work.pop()
        for b in f.blocks:
            for i in b.instrs:
                if i.op != "call":
                    continue
                callee = i.args[0][1:]
                rf = rt_funcs.get(callee)
                if rf is not None and callee not in kept:
                    kept[callee] = rf
                    work.append(rf)

    funcs = list(user.funcs) + [f for f in rt.funcs if f.name in kept]
    referenced: set[str] = set()
    for f in funcs:
        for b in f.blocks:
            for i in b.instrs:
                for a in i.args:
                    if a.startswith("@"):
                        referenced.add(a[1:])
    globals_ = list(user.globals) + [g for g in rt.globals if g.name in referenced]

    shared = sum(_aligned_size(g) for g in globals_ if g.space == "team_shared")
    if shared > target.shared_space_capacity:
        raise CompileError(Diagnostic(
            f"team-shared data needs {shared} bytes; {target.arch} provides "
            f"{target.shared_space_capacity}"))

    linked = IRModule(target=target.arch, globals=globals_, funcs=funcs)
    _check_unresolved(linked)
    return linked


_SCALAR_SIZES = {"i32": 4, "u32": 4, "i64": 8, "u64": 8}


def _aligned_size(g: IRGlobal) -> int:
    raw = _SCALAR_SIZES[g.ty] * g.count
    return (raw + 7) // 8 * 8


def _check_unresolved(module: IRModule) -> None:
    defined = {f.name for f in module.funcs}
    for f in module.funcs:
        for b in f.blocks:
            for i in b.instrs:
                if i.op == "call" and i.args[0][1:] not in defined:
                    raise CompileError(Diagnostic(
                        f"unresolved call to '{i.args[0][1:]}' in '{f.name}'"))


def compile_device_image(module: SourceModule, arch: str) -> IRModule:
    """Full device pipeline for one architecture: specialize, emit, link."""
    from .selectors import TARGETS

    target = TARGETS[arch]
    spec = specialize(module, target)
    user = emit_device_ir(spec)
    return link_runtime(user, target)


def emit_host_program(module: SourceModule, entry: str = "main"):
    """Host half of the dual compilation pass; see the host module."""
    from .host import emit_host_program as _emit

    return _emit(module, entry=entry)


def runtime_ir(arch: str) -> IRModule:
    """The device runtime specialized and emitted for one architecture."""
    return _runtime_ir(arch)
