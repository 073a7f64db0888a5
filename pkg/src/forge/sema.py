"""Semantic analysis: name resolution, type annotation, capture collection.

Integer literals adapt to the type their context expects (defaulting to i32);
all other operands of a binary operation must agree exactly. Buffer names
type as pointers and may only flow into call arguments, index bases, and
dereferences. Region captures are collected in first-occurrence order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import ast
from .ast import (
    Allocator, Assign, AtomicStmt, Binary, Call, Cast, Deref, ExprStmt,
    FunctionDecl, GlobalDecl, If, Index, IntLit, LocalDecl, Name, Param,
    Print, PtrType, Return, ScalarType, SourceModule, StrLit, TargetRegion,
    TargetStmt, Unary, While,
)
from .diagnostics import Diagnostic, CompileError
from .intrinsics import SURFACE_BUILTINS, IntrinsicKind


def _fail(msg: str, node) -> None:
    loc = getattr(node, "loc", None)
    raise CompileError(Diagnostic(msg,
                                  file=getattr(loc, "file", "<input>"),
                                  line=getattr(loc, "line", 0),
                                  col=getattr(loc, "col", 0)))


_ARITH = {"+", "-", "*", "/", "%", "&", "|", "^"}
_SHIFT = {"<<", ">>"}
_CMP = {"<", ">", "<=", ">=", "==", "!="}

# (param types, return). "T" marks the polymorphic element type of arg 0.
_BUILTIN_SIGS: dict[IntrinsicKind, tuple[tuple, object]] = {
    IntrinsicKind.ATOMIC_ADD: (("ptrT", "T"), "T"),
    IntrinsicKind.ATOMIC_MAX: (("ptrT", "T"), "T"),
    IntrinsicKind.ATOMIC_MIN: (("ptrT", "T"), "T"),
    IntrinsicKind.ATOMIC_XCHG: (("ptrT", "T"), "T"),
    IntrinsicKind.ATOMIC_CAS: (("ptrT", "T", "T"), "T"),
    IntrinsicKind.ATOMIC_INC: ((PtrType(ScalarType.U32), ScalarType.U32), ScalarType.U32),
    IntrinsicKind.THREADFENCE: ((), None),
    IntrinsicKind.BARRIER: ((), None),
    IntrinsicKind.TRAP: ((ScalarType.U32,), None),
    IntrinsicKind.THREAD_ID: ((), ScalarType.U32),
    IntrinsicKind.TEAM_ID: ((), ScalarType.U32),
    IntrinsicKind.NUM_THREADS: ((), ScalarType.U32),
    IntrinsicKind.NUM_TEAMS: ((), ScalarType.U32),
}


@dataclass
class ModuleInfo:
    """Symbol tables attached to a module by analyze()."""
    globals: dict[str, GlobalDecl] = field(default_factory=dict)
    bases: dict[str, FunctionDecl] = field(default_factory=dict)
    variants: dict[str, list[FunctionDecl]] = field(default_factory=dict)
    device_decls: set[str] = field(default_factory=set)


class _Scope:
    """Lexical scope for one function body or one target region."""

    def __init__(self, sema: "_Sema", fn: FunctionDecl | None,
                 region: TargetRegion | None = None, parent: "_Scope | None" = None):
        self.sema = sema
        self.fn = fn
        self.region = region
        self.parent = parent
        self.vars: dict[str, tuple] = {}  # name -> ("param"|"local", ty, count|None)
        if fn is not None:
            for p in fn.params:
                self.vars[p.name] = ("param", p.ty, None)

    def declare_local(self, d: LocalDecl) -> None:
        if d.name in self.vars:
            _fail(f"redeclaration of '{d.name}'", d)
        self.vars[d.name] = ("local", d.ty, d.count)

    def lookup(self, name: str):
        if name in self.vars:
            return self.vars[name]
        if self.region is not None and self.parent is not None:
            outer = self.parent.vars.get(name)
            if outer is not None:
                _, ty, count = outer
                if isinstance(ty, PtrType):
                    cap_ty: object = ty
                elif count is not None:
                    cap_ty = PtrType(ty)
                else:
                    cap_ty = ty
                if all(cname != name for cname, _ in self.region.captured_args):
                    self.region.captured_args.append((name, cap_ty))
                return ("capture", cap_ty, None)
        g = self.sema.info.globals.get(name)
        if g is not None:
            if self.region is not None or self.in_device_code():
                if not g.is_device:
                    _fail(f"host variable '{name}' is not visible in device code",
                          self._probe)
            return ("global", g.ty, g.count)
        return None

    def in_device_code(self) -> bool:
        return self.fn is not None and self.sema.device_fns.get(id(self.fn), False)


class _Sema:
    def __init__(self, module: SourceModule):
        self.module = module
        self.info = ModuleInfo()
        self.device_fns: dict[int, bool] = {}

    # ---- declaration tables

    def collect(self) -> None:
        seen_fn_defs: set[str] = set()
        for i, d in enumerate(self.module.declarations):
            is_device = self.module.in_device_span(i)
            if isinstance(d, GlobalDecl):
                self._collect_global(d, is_device)
            else:
                self._collect_function(d, is_device, seen_fn_defs)
        for name, cands in self.info.variants.items():
            base = self.info.bases.get(name)
            if base is None:
                _fail(f"declare variant for '{name}' has no base declaration", cands[0])
            for c in cands:
                if c.signature != base.signature:
                    _fail(f"variant signature for '{name}' differs from its base", c)

    def _collect_global(self, d: GlobalDecl, is_device: bool) -> None:
        if d.name in self.info.globals or d.name in self.info.bases:
            _fail(f"redeclaration of '{d.name}'", d)
        d.is_device = is_device
        if d.loader_uninitialized and d.init is not None:
            _fail(f"'{d.name}' cannot combine loader_uninitialized with an initializer", d)
        if d.loader_uninitialized and not is_device:
            _fail("loader_uninitialized requires a declare target span", d)
        if d.allocator is not Allocator.DEFAULT and not is_device:
            _fail(f"allocator on '{d.name}' outside a declare target span", d)
        if d.is_extern and d.init is not None:
            _fail(f"extern '{d.name}' cannot have an initializer", d)
        self.info.globals[d.name] = d
        if is_device:
            self.info.device_decls.add(d.name)

    def _collect_function(self, d: FunctionDecl, is_device: bool, seen_defs: set[str]) -> None:
        if d.name in self.info.globals:
            _fail(f"redeclaration of '{d.name}'", d)
        if d.name in SURFACE_BUILTINS or d.name == "print":
            _fail(f"'{d.name}' is a reserved builtin name", d)
        self.device_fns[id(d)] = is_device
        if d.variant_of is not None:
            self.info.variants.setdefault(d.name, []).append(d)
            if is_device:
                self.info.device_decls.add(d.name)
            return
        prior = self.info.bases.get(d.name)
        if prior is not None:
            if prior.signature != d.signature:
                _fail(f"conflicting declarations of '{d.name}'", d)
            if d.body is not None:
                if d.name in seen_defs:
                    _fail(f"redefinition of '{d.name}'", d)
                self.info.bases[d.name] = d
                seen_defs.add(d.name)
        else:
            self.info.bases[d.name] = d
            if d.body is not None:
                seen_defs.add(d.name)
        if is_device:
            self.info.device_decls.add(d.name)

    # ---- function bodies

    def check_functions(self) -> None:
        for d in self.module.declarations:
            if isinstance(d, FunctionDecl) and d.body is not None:
                self._check_body(d)
        main = self.info.bases.get("main")
        if main is not None and (main.params or main.ret is not None):
            _fail("main must be declared as 'void main()'", main)

    def _check_body(self, fn: FunctionDecl) -> None:
        scope = _Scope(self, fn)
        is_device = self.device_fns.get(id(fn), False)
        self._check_stmts(fn.body, scope, fn, in_region=False, is_device=is_device)

    def _check_stmts(self, stmts: list, scope: _Scope, fn: FunctionDecl,
                     in_region: bool, is_device: bool) -> None:
        for s in stmts:
            self._check_stmt(s, scope, fn, in_region, is_device)

    def _check_stmt(self, s, scope: _Scope, fn: FunctionDecl,
                    in_region: bool, is_device: bool) -> None:
        if isinstance(s, LocalDecl):
            scope.declare_local(s)
        elif isinstance(s, Assign):
            tty = self._lvalue_type(s.target, scope, for_write=True)
            self._infer(s.value, tty if isinstance(tty, ScalarType) else None, scope)
            if isinstance(tty, PtrType):
                _fail("cannot assign to a buffer", s)
        elif isinstance(s, If):
            t = self._infer(s.cond, None, scope)
            if not isinstance(t, ScalarType):
                _fail("condition must be a scalar", s)
            self._check_stmts(s.then_body, scope, fn, in_region, is_device)
            if s.else_body:
                self._check_stmts(s.else_body, scope, fn, in_region, is_device)
        elif isinstance(s, While):
            t = self._infer(s.cond, None, scope)
            if not isinstance(t, ScalarType):
                _fail("condition must be a scalar", s)
            self._check_stmts(s.body, scope, fn, in_region, is_device)
        elif isinstance(s, Return):
            if in_region:
                _fail("return is not allowed inside a target region", s)
            if fn.ret is None:
                if s.value is not None:
                    _fail("void function cannot return a value", s)
            else:
                if s.value is None:
                    _fail("non-void function must return a value", s)
                self._infer(s.value, fn.ret, scope)
        elif isinstance(s, ExprStmt):
            if not isinstance(s.expr, Call):
                _fail("expression statement must be a call", s)
            self._infer(s.expr, None, scope, allow_void=True)
        elif isinstance(s, Print):
            if is_device or in_region:
                _fail("print is host-only", s)
            t = self._infer(s.value, None, scope)
            if not isinstance(t, ScalarType):
                _fail("print takes a scalar", s)
        elif isinstance(s, AtomicStmt):
            self._check_stmts(s.construct.block, scope, fn, in_region, is_device)
        elif isinstance(s, TargetStmt):
            if is_device:
                _fail("target regions are not allowed in device functions", s)
            if in_region:
                _fail("target regions cannot nest", s)
            region_scope = _Scope(self, None, region=s.region, parent=scope)
            region_scope._probe = s
            self._check_stmts(s.region.body, region_scope, fn,
                              in_region=True, is_device=True)
        elif isinstance(s, ast.AtomicIntrinsic):
            pass  # produced by lowering; already typed
        else:
            _fail(f"unsupported statement {type(s).__name__}", s)

    # ---- lvalues and expressions

    def _lvalue_type(self, e, scope: _Scope, for_write: bool):
        scope._probe = e
        if isinstance(e, Name):
            b = scope.lookup(e.ident)
            if b is None:
                _fail(f"unknown variable '{e.ident}'", e)
            kind, ty, count = b
            if for_write:
                if kind == "param":
                    _fail(f"parameters are read-only ('{e.ident}')", e)
                if kind == "capture":
                    _fail(f"captured scalars are read-only inside target regions ('{e.ident}')", e)
                if kind == "global" and self.info.globals[e.ident].is_extern:
                    pass  # extern globals are writable; definition lives elsewhere
            if count is not None:
                ty = PtrType(ty)
            e.ty = ty
            e.binding = kind
            return ty
        if isinstance(e, Deref):
            pt = self._infer(e.ptr, None, scope)
            if not isinstance(pt, PtrType):
                _fail("cannot dereference a non-buffer", e)
            e.ty = pt.elem
            return pt.elem
        if isinstance(e, Index):
            bt = self._infer(e.base, None, scope)
            if not isinstance(bt, PtrType):
                _fail("cannot index a non-buffer", e)
            it = self._infer(e.index, None, scope)
            if not isinstance(it, ScalarType):
                _fail("index must be a scalar", e)
            e.ty = bt.elem
            return bt.elem
        _fail("not an lvalue", e)

    def _infer(self, e, expected, scope: _Scope, allow_void: bool = False):
        scope._probe = e
        if isinstance(e, IntLit):
            ty = expected if isinstance(expected, ScalarType) else ScalarType.I32
            lo = -(1 << (ty.bits - 1)) if ty.signed else 0
            hi = (1 << (ty.bits - 1)) - 1 if ty.signed else (1 << ty.bits) - 1
            if not (lo <= e.value <= hi):
                _fail(f"literal {e.value} does not fit in {ty.value}", e)
            e.ty = ty
            return ty
        if isinstance(e, StrLit):
            _fail("string literals are only allowed as the argument of error()", e)
        if isinstance(e, (Name, Deref, Index)):
            return self._lvalue_type(e, scope, for_write=False)
        if isinstance(e, Unary):
            if e.op == "-":
                t = self._infer(e.operand, expected, scope)
                if not isinstance(t, ScalarType):
                    _fail("unary '-' needs a scalar", e)
                e.ty = t
                return t
            t = self._infer(e.operand, None, scope)
            if not isinstance(t, ScalarType):
                _fail("unary '!' needs a scalar", e)
            e.ty = ScalarType.U32
            return e.ty
        if isinstance(e, Binary):
            return self._infer_binary(e, expected, scope)
        if isinstance(e, Cast):
            t = self._infer(e.operand, None, scope)
            if not isinstance(t, ScalarType):
                _fail("cannot cast a buffer", e)
            e.ty = e.to
            return e.to
        if isinstance(e, Call):
            return self._infer_call(e, scope, allow_void)
        _fail(f"unsupported expression {type(e).__name__}", e)

    def _infer_binary(self, e: Binary, expected, scope: _Scope):
        if e.op in _CMP:
            lt, rt = self._pair(e.left, e.right, None, scope)
            e.operand_ty = lt
            e.ty = ScalarType.U32
            return e.ty
        if e.op in _SHIFT:
            lt = self._infer(e.left, expected, scope)
            if not isinstance(lt, ScalarType):
                _fail("shift needs scalar operands", e)
            rt = self._infer(e.right, lt, scope)
            if not isinstance(rt, ScalarType):
                _fail("shift count must be a scalar", e)
            e.ty = lt
            return lt
        if e.op in _ARITH:
            lt, rt = self._pair(e.left, e.right, expected, scope)
            e.ty = lt
            return lt
        _fail(f"unknown operator '{e.op}'", e)

    def _pair(self, left, right, expected, scope: _Scope):
        # Let a literal side adopt the other side's type.
        if isinstance(left, IntLit) and not isinstance(right, IntLit):
            rt = self._infer(right, expected, scope)
            lt = self._infer(left, rt if isinstance(rt, ScalarType) else None, scope)
        else:
            lt = self._infer(left, expected, scope)
            rt = self._infer(right, lt if isinstance(lt, ScalarType) else None, scope)
        if not isinstance(lt, ScalarType) or not isinstance(rt, ScalarType):
            _fail("operands must be scalars", left)
        if lt != rt:
            _fail(f"operand types differ: {lt.value} vs {rt.value}", left)
        return lt, rt

    def _infer_call(self, e: Call, scope: _Scope, allow_void: bool):
        if e.callee == "error":
            if len(e.args) != 1 or not isinstance(e.args[0], StrLit):
                _fail("error() takes exactly one string literal", e)
            e.intrinsic = IntrinsicKind.ERROR
            e.ty = None
            return None
        kind = SURFACE_BUILTINS.get(e.callee)
        if kind is not None:
            return self._infer_builtin(e, kind, scope, allow_void)
        sig = self._function_signature(e)
        if sig is None:
            _fail(f"unknown function '{e.callee}'", e)
        params, ret = sig
        if len(e.args) != len(params):
            _fail(f"'{e.callee}' expects {len(params)} arguments, got {len(e.args)}", e)
        for arg, pty in zip(e.args, params):
            at = self._infer(arg, pty if isinstance(pty, ScalarType) else None, scope)
            if isinstance(pty, PtrType):
                if at != pty:
                    _fail(f"argument to '{e.callee}' must be a {pty} buffer", arg)
            else:
                if at != pty:
                    _fail(f"argument type mismatch in call to '{e.callee}'", arg)
        if ret is None and not allow_void:
            _fail(f"void call '{e.callee}' used as a value", e)
        e.ty = ret
        return ret

    def _function_signature(self, e: Call):
        fn = self.info.bases.get(e.callee)
        if fn is not None:
            return ([p.ty for p in fn.params], fn.ret)
        from .devicert import RUNTIME_API
        api = RUNTIME_API.get(e.callee)
        if api is not None:
            return api
        return None

    def _infer_builtin(self, e: Call, kind: IntrinsicKind, scope: _Scope, allow_void: bool):
        e.intrinsic = kind
        params, ret = _BUILTIN_SIGS[kind]
        if len(e.args) != len(params):
            _fail(f"'{e.callee}' expects {len(params)} arguments, got {len(e.args)}", e)
        elem: ScalarType | None = None
        for arg, pty in zip(e.args, params):
            if pty == "ptrT":
                at = self._infer(arg, None, scope)
                if not isinstance(at, PtrType):
                    _fail(f"first argument of '{e.callee}' must be a buffer", arg)
                elem = at.elem
            elif pty == "T":
                at = self._infer(arg, elem, scope)
                if at != elem:
                    _fail(f"operand type must match the buffer element type in '{e.callee}'", arg)
            else:
                at = self._infer(arg, pty if isinstance(pty, ScalarType) else None, scope)
                if at != pty:
                    _fail(f"argument type mismatch in call to '{e.callee}'", arg)
        if ret == "T":
            e.ty = elem
            return elem
        if ret is None and not allow_void:
            _fail(f"void call '{e.callee}' used as a value", e)
        e.ty = ret
        return ret


def analyze(module: SourceModule) -> ModuleInfo:
    sema = _Sema(module)
    sema.collect()
    sema.check_functions()
    module.info = sema.info
    return sema.info
