"""Host program execution and the offload runtime.

emit_host_program turns a parsed module into a HostProgram: the entry
statements, one TargetCall per offload region (kernel id, argument
descriptors, and a sequential fallback function), and the table of named
host buffers. tgt_target is the launch shim: it either runs a region on
the virtual device, with buffers copied over and back, or reports failure
so the caller runs the fallback. run_bundle ties both to the on-disk
container format.

The fallback executes one simulated thread at a time to completion, in
thread order within each team, with atomics as plain read-modify-writes
and barriers as no-ops. That is a valid reference semantics only for
kernels whose result does not depend on the interleaving, which is what
the equivalence suite enforces. A region that trapped on the device
aborts the program instead of falling back, so a device bug cannot hide
behind silently recomputed host results.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, replace

from . import devicert
from .ast import (
    Allocator,
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
    Print,
    PtrType,
    Return,
    ScalarType,
    SourceModule,
    TargetRegion,
    TargetStmt,
    Unary,
    While,
    walk_stmts,
)
from .codegen import compile_device_image, kernel_name
from .diagnostics import CompileError
from .intrinsics import ATOMIC_KINDS, IntrinsicKind
from .ir import IRModule, IRParseError, parse_ir
from .lowering import lower_atomics, specialize
from .selectors import DEVICE_ARCHS, TARGETS, TargetDesc
from .vgpu import TRAP_CODES, GridConfig, TrapKind, VirtualGPU

_RUNNABLE_ARCH = "vgpu"


class HostTrap(Exception):
    """A runtime fault that aborts the program with exit status 2."""

    def __init__(self, kind: str, detail: str) -> None:
        super().__init__(f"{kind}: {detail}")
        self.kind = kind
        self.detail = detail


class _Return(Exception):
    def __init__(self, value) -> None:
        super().__init__("return")
        self.value = value


@dataclass
class HostRunResult:
    stdout: str
    stderr: str
    exit_status: int
    buffers: dict[str, list[int]]
    offloads: list[tuple[int, int]]
    device_traces: list[str] = field(default_factory=list)
    device_instructions: list[tuple[int, int]] = field(default_factory=list)


@dataclass(frozen=True)
class ArgDescriptor:
    """Shape of one kernel argument: a named buffer or a scalar value."""

    name: str
    kind: str  # "buffer" | "scalar"
    elem: ScalarType
    count: int | None = None  # element count when statically known

    @property
    def size(self) -> int | None:
        if self.count is None:
            return None
        return self.count * self.elem.size


@dataclass(frozen=True)
class TargetCall:
    """One offload site: which kernel to launch and how to feed it.

    values stays None in the program description; bind() attaches the
    concrete argument values (bytearray or HostBuffer per buffer slot,
    int per scalar slot) right before the call goes to tgt_target.
    """

    region_id: int
    kernel_id: str
    args: tuple[ArgDescriptor, ...]
    fallback: object  # callable(values, num_teams, threads_per_team)
    grid: tuple[int | None, int | None] = (None, None)
    values: tuple | None = None

    def bind(self, values) -> "TargetCall":
        vals = tuple(values)
        if len(vals) != len(self.args):
            raise ValueError(
                f"kernel {self.kernel_id} takes {len(self.args)} arguments, "
                f"got {len(vals)}"
            )
        return replace(self, values=vals)


@dataclass
class RunOptions:
    device: str = "vgpu"
    grid: tuple[int, int] | None = None  # default geometry for bare regions
    force_fail: bool = False
    sched_seed: int = 0
    check_uninit: bool = False
    collect_trace: bool = False
    entry: str | None = None  # None: use the entry recorded in the bundle


class HostBuffer:
    """Backing store for one array or one addressable scalar."""

    __slots__ = ("elem", "data", "label", "is_slot")

    def __init__(self, elem: ScalarType, count: int, label: str,
                 fill: int = 0, is_slot: bool = False) -> None:
        self.elem = elem
        self.data = [fill] * count
        self.label = label
        self.is_slot = is_slot

    @classmethod
    def from_bytes(cls, elem: ScalarType, raw: bytes, label: str) -> "HostBuffer":
        buf = cls(elem, len(raw) // elem.size, label)
        w = elem.size
        buf.data = [int.from_bytes(raw[i * w:(i + 1) * w], "little")
                    for i in range(len(raw) // w)]
        return buf

    def to_bytes(self) -> bytes:
        w = self.elem.size
        m = devicert.mask(w * 8)
        return b"".join((v & m).to_bytes(w, "little") for v in self.data)


@dataclass(frozen=True)
class HostPtr:
    buf: HostBuffer
    idx: int
    lo: int
    hi: int

    def describe(self) -> str:
        return f"{self.buf.label}[{self.lo}:{self.hi}]"


@dataclass
class _DeviceCtx:
    """Per-thread identity while a fallback region body is running."""

    team: int
    tid: int
    teams: int
    threads: int
    arena: devicert.Arena
    store: dict[str, HostBuffer]


def _poison(ty: ScalarType) -> int:
    return int.from_bytes(b"\xaa" * ty.size, "little")


def _fresh_global(g: GlobalDecl) -> HostBuffer:
    count = g.count or 1
    if g.loader_uninitialized:
        fill = _poison(g.ty)
    else:
        fill = (g.init or 0) & devicert.mask(g.ty.bits)
    return HostBuffer(g.ty, count, f"@{g.name}", fill, is_slot=g.count is None)


# ---- the launch shim


def _pack_arg(desc: ArgDescriptor, v) -> bytes:
    if isinstance(v, (bytes, bytearray)):
        return bytes(v)
    if isinstance(v, HostBuffer):
        v = HostPtr(v, 0, 0, len(v.data))
    if isinstance(v, HostPtr):
        w = v.buf.elem.size
        m = devicert.mask(w * 8)
        return b"".join((x & m).to_bytes(w, "little")
                        for x in v.buf.data[v.idx:v.hi])
    raise TypeError(f"buffer argument '{desc.name}' needs bytes or a HostBuffer")


def _write_back(v, raw: bytes) -> None:
    if isinstance(v, bytearray):
        v[:] = raw
        return
    if isinstance(v, HostBuffer):
        v = HostPtr(v, 0, 0, len(v.data))
    w = v.buf.elem.size
    for i in range(len(raw) // w):
        v.buf.data[v.idx + i] = int.from_bytes(raw[i * w:(i + 1) * w], "little")


def _image_for(bundle, arch: str) -> IRModule | None:
    from .bundler import Bundle

    if bundle is None:
        return None
    if isinstance(bundle, dict):
        img = bundle.get(arch)
    else:
        if isinstance(bundle, (bytes, bytearray)):
            bundle = Bundle.from_bytes(bytes(bundle))
        img = None
        for name, payload in bundle.images:
            if name == arch:
                img = payload
                break
    if img is None:
        return None
    if isinstance(img, IRModule):
        return img
    return parse_ir(bytes(img).decode("utf-8"))


def tgt_target(call: TargetCall, bundle, device="vgpu", force_fail: bool = False,
               *, grid: tuple[int, int] | None = None, sched_seed: int = 0,
               check_uninit: bool = False, collect_trace: bool = False,
               out: dict | None = None) -> int:
    """Dispatch one offload: 0 ran on the device, 1 launch failed, 2 trapped.

    On 0 the buffer arguments hold the device results. On any nonzero
    status the caller's buffers are untouched; status 1 means the caller
    must run the fallback, status 2 means the program must abort (out
    carries the trap under "trap"). bundle may be a Bundle, raw bundle
    bytes, or a dict of already parsed images keyed by target name.
    """
    if call.values is None:
        raise ValueError("TargetCall is not bound to argument values")
    arch = device.arch if isinstance(device, TargetDesc) else str(device)
    if force_fail or arch != _RUNNABLE_ARCH:
        return 1
    image = _image_for(bundle, arch)
    if image is None:
        return 1

    packed: list[object] = []
    for desc, v in zip(call.args, call.values):
        if desc.kind == "scalar":
            packed.append(int(v) & devicert.mask(desc.elem.bits))
        else:
            packed.append(bytearray(_pack_arg(desc, v)))

    teams, threads = grid if grid is not None else (call.grid[0] or 1, call.grid[1] or 1)
    dev = VirtualGPU(image, check_uninit=check_uninit, collect_trace=collect_trace)
    res = dev.launch(call.kernel_id, GridConfig(teams, threads, sched_seed), packed)
    if out is not None:
        out["trace"] = res.trace
        out["result"] = res
    if res.status == "trap":
        if out is not None:
            out["trap"] = (res.trap.value, res.trap_detail)
        return 2
    for desc, v, pk in zip(call.args, call.values, packed):
        if desc.kind == "buffer":
            _write_back(v, bytes(pk))
    return 0


# ---- the host program


class HostProgram:
    """The host half of a compiled module, ready to interpret.

    statements is the entry function body; target_calls describes every
    offload region in the module; buffers names the host-visible arrays
    with their byte sizes.
    """

    def __init__(self, module: SourceModule, entry: str = "main") -> None:
        work = copy.deepcopy(module)
        lower_atomics(work)
        self.mod = specialize(work, TARGETS["host"]).module
        self.entry = entry

        fn = self.mod.info.bases.get(entry)
        self.statements: list = list(fn.body) if fn is not None and fn.body else []
        self.target_calls: list[TargetCall] = self._collect_calls()
        self._calls_by_id = {c.region_id: c for c in self.target_calls}
        self.buffers: dict[str, int] = self._collect_buffers(fn)

        # Run state; reset by run(), present so fallback closures work alone.
        self.out: list[str] = []
        self.offloads: list[tuple[int, int]] = []
        self.device_traces: list[str] = []
        self.device_instructions: list[tuple[int, int]] = []
        self.globals: dict[str, HostBuffer] = {}
        self._cur_ctx: _DeviceCtx | None = None
        self._host_arena = devicert.Arena()
        self._images: dict[str, IRModule] = {}
        self._device = _RUNNABLE_ARCH
        self._sched_seed = 0
        self._force_fail = False
        self._check_uninit = False
        self._collect_trace = False
        self._grid = (1, 1)

    # ---- program description

    def _collect_calls(self) -> list[TargetCall]:
        calls: list[TargetCall] = []
        for fn in self.mod.functions():
            if fn.body is None:
                continue
            counts: dict[str, int | None] = {}
            for p in fn.params:
                if isinstance(p.ty, PtrType):
                    counts[p.name] = None
            for s in walk_stmts(fn.body):
                if isinstance(s, LocalDecl) and s.count is not None:
                    counts[s.name] = s.count
            for s in walk_stmts(fn.body):
                if isinstance(s, TargetStmt):
                    calls.append(self._make_call(s.region, counts))
        calls.sort(key=lambda c: c.region_id)
        return calls

    def _make_call(self, region: TargetRegion, counts: dict[str, int | None]) -> TargetCall:
        descs = []
        for name, ty in region.captured_args:
            if isinstance(ty, PtrType):
                descs.append(ArgDescriptor(name, "buffer", ty.elem, counts.get(name)))
            else:
                descs.append(ArgDescriptor(name, "scalar", ty, None))

        def fallback(values, num_teams: int = 1, threads_per_team: int = 1,
                     _region=region) -> None:
            self._run_fallback(_region, list(values), num_teams, threads_per_team)

        return TargetCall(
            region_id=region.region_id,
            kernel_id=kernel_name(region.region_id),
            args=tuple(descs),
            fallback=fallback,
            grid=(region.num_teams, region.thread_limit),
        )

    def _collect_buffers(self, fn: FunctionDecl | None) -> dict[str, int]:
        out: dict[str, int] = {}
        for g in self.mod.info.globals.values():
            if not g.is_extern and not g.is_device and g.count is not None:
                out[g.name] = g.size
        if fn is not None and fn.body:
            for s in walk_stmts(fn.body):
                if isinstance(s, LocalDecl) and s.count is not None:
                    out[s.name] = s.count * s.ty.size
        return out

    # ---- program entry

    def run(self, images: dict[str, IRModule] | None = None, *,
            device: str = "vgpu", sched_seed: int = 0,
            force_offload_fail: bool = False, check_uninit: bool = False,
            grid: tuple[int, int] = (1, 1),
            collect_trace: bool = False) -> HostRunResult:
        self.out = []
        self.offloads = []
        self.device_traces = []
        self.device_instructions = []
        self.globals = {}
        self._cur_ctx = None
        self._host_arena = devicert.Arena()
        self._images = dict(images or {})
        self._device = device
        self._sched_seed = sched_seed
        self._force_fail = force_offload_fail
        self._check_uninit = check_uninit
        self._collect_trace = collect_trace
        self._grid = grid
        for g in self.mod.info.globals.values():
            if not g.is_extern:
                self.globals[g.name] = _fresh_global(g)

        fn = self.mod.info.bases.get(self.entry)
        if fn is None or fn.body is None:
            return HostRunResult("", f"error: program has no entry function "
                                     f"'{self.entry}'\n", 1, {}, [], [])
        if fn.params:
            return HostRunResult("", f"error: entry function '{self.entry}' "
                                     f"takes no arguments\n", 1, {}, [], [])

        env: dict[str, object] = {}
        stderr = ""
        status = 0
        try:
            self._exec_block(fn.body, env)
        except _Return:
            pass
        except HostTrap as t:
            stderr = f"trap: {t.kind}: {t.detail}\n"
            status = 2
        buffers = self._snapshot_buffers(env)
        return HostRunResult("".join(self.out), stderr, status, buffers,
                             self.offloads, self.device_traces,
                             self.device_instructions)

    def _snapshot_buffers(self, env: dict[str, object]) -> dict[str, list[int]]:
        out: dict[str, list[int]] = {}
        for name in self.buffers:
            v = env.get(name)
            if isinstance(v, HostBuffer):
                out[name] = list(v.data)
                continue
            buf = self.globals.get(name)
            if buf is not None and not buf.is_slot:
                out[name] = list(buf.data)
        return out

    # ---- statements

    def _exec_block(self, stmts: list, env: dict[str, object]) -> None:
        for s in stmts:
            self._exec(s, env)

    def _exec(self, s, env: dict[str, object]) -> None:
        if isinstance(s, LocalDecl):
            if s.count is None:
                env[s.name] = _poison(s.ty)
            else:
                env[s.name] = HostBuffer(s.ty, s.count, f"%{s.name}", _poison(s.ty))
        elif isinstance(s, Assign):
            v = self._eval(s.value, env)
            self._store_lvalue(s.target, v, env)
        elif isinstance(s, If):
            if self._eval(s.cond, env) != 0:
                self._exec_block(s.then_body, env)
            elif s.else_body:
                self._exec_block(s.else_body, env)
        elif isinstance(s, While):
            while self._eval(s.cond, env) != 0:
                self._exec_block(s.body, env)
        elif isinstance(s, Return):
            v = None if s.value is None else self._eval(s.value, env)
            raise _Return(v)
        elif isinstance(s, ExprStmt):
            self._eval(s.expr, env, allow_void=True)
        elif isinstance(s, Print):
            v = self._eval(s.value, env)
            ty = s.value.ty
            if isinstance(ty, ScalarType) and ty.signed:
                v = devicert.to_signed(v, ty.bits)
            self.out.append(f"{v}\n")
        elif isinstance(s, AtomicIntrinsic):
            self._exec_atomic(s, env)
        elif isinstance(s, TargetStmt):
            self._exec_target(s, env)
        else:
            raise HostTrap(TrapKind.ABORT.value,
                           f"cannot execute {type(s).__name__} on the host")

    def _exec_atomic(self, s: AtomicIntrinsic, env: dict[str, object]) -> None:
        ptr = self._eval(s.x, env)
        e = self._eval(s.e, env)
        d = None if s.d is None else self._eval(s.d, env)
        old = self._atomic_step(s.kind, ptr, e, d, s)
        if s.v is not None:
            self._store_lvalue(s.v, old, env)

    # ---- offload regions

    def _exec_target(self, s: TargetStmt, env: dict[str, object]) -> None:
        region = s.region
        call = self._calls_by_id[region.region_id]
        teams = region.num_teams or self._grid[0]
        threads = region.thread_limit or self._grid[1]

        values: list[object] = []
        for name, ty in region.captured_args:
            v = env[name]
            if isinstance(ty, PtrType):
                if isinstance(v, HostBuffer):
                    v = HostPtr(v, 0, 0, len(v.data))
                values.append(v)
            else:
                values.append(int(v) & devicert.mask(ty.bits))

        sink: dict = {}
        status = tgt_target(call.bind(values), self._images, self._device,
                            self._force_fail, grid=(teams, threads),
                            sched_seed=self._sched_seed,
                            check_uninit=self._check_uninit,
                            collect_trace=self._collect_trace, out=sink)
        if self._collect_trace:
            self.device_traces.extend(sink.get("trace", []))
        res = sink.get("result")
        if res is not None:
            self.device_instructions.append((region.region_id,
                                             res.instruction_count))
        self.offloads.append((region.region_id, status))
        if status == 2:
            kind, detail = sink["trap"]
            raise HostTrap(kind, detail)
        if status == 1:
            self._run_fallback(region, values, teams, threads)

    def _run_fallback(self, region: TargetRegion, values: list,
                      teams: int, threads: int) -> None:
        bound: list[object] = []
        writeback: list[tuple[bytearray, HostBuffer]] = []
        for desc, v in zip(region.captured_args, values):
            name, ty = desc
            if isinstance(ty, PtrType):
                if isinstance(v, (bytes, bytearray)):
                    buf = HostBuffer.from_bytes(ty.elem, bytes(v), f"%{name}")
                    if isinstance(v, bytearray):
                        writeback.append((v, buf))
                    bound.append(HostPtr(buf, 0, 0, len(buf.data)))
                elif isinstance(v, HostBuffer):
                    bound.append(HostPtr(v, 0, 0, len(v.data)))
                else:
                    bound.append(v)
            else:
                bound.append(int(v) & devicert.mask(ty.bits))

        # Device-span globals get a fresh store per region so the fallback
        # observes the same cold state a device launch would.
        shared_store: dict[str, HostBuffer] = {}
        team_local: list[GlobalDecl] = []
        for g in self.mod.info.globals.values():
            if not g.is_device or g.is_extern:
                continue
            if g.allocator is Allocator.DEFAULT:
                shared_store[g.name] = _fresh_global(g)
            else:
                team_local.append(g)

        for team in range(teams):
            store = dict(shared_store)
            for g in team_local:
                store[g.name] = _fresh_global(g)
            arena = devicert.Arena()
            for tid in range(threads):
                ctx = _DeviceCtx(team, tid, teams, threads, arena, store)
                env = {name: v
                       for (name, _), v in zip(region.captured_args, bound)}
                self._cur_ctx = ctx
                try:
                    self._exec_block(region.body, env)
                except _Return:
                    pass
                finally:
                    self._cur_ctx = None

        for raw, buf in writeback:
            raw[:] = buf.to_bytes()

    # ---- expressions

    def _eval(self, e, env: dict[str, object], allow_void: bool = False):
        if isinstance(e, IntLit):
            assert isinstance(e.ty, ScalarType)
            return e.value & devicert.mask(e.ty.bits)
        if isinstance(e, Name):
            return self._read_name(e, env)
        if isinstance(e, Deref):
            return self._load_ptr(self._eval(e.ptr, env), e)
        if isinstance(e, Index):
            return self._load_ptr(self._elem_addr(e, env), e)
        if isinstance(e, Unary):
            v = self._eval(e.operand, env)
            if e.op == "-":
                assert isinstance(e.ty, ScalarType)
                return (-v) & devicert.mask(e.ty.bits)
            return 1 if v == 0 else 0
        if isinstance(e, Binary):
            return self._eval_binary(e, env)
        if isinstance(e, Cast):
            v = self._eval(e.operand, env)
            src = e.operand.ty
            if src == e.to:
                return v
            as_int = devicert.to_signed(v, src.bits) if src.signed else v
            return as_int & devicert.mask(e.to.bits)
        if isinstance(e, Call):
            return self._eval_call(e, env, allow_void)
        raise HostTrap(TrapKind.ABORT.value,
                       f"cannot evaluate {type(e).__name__} on the host")

    def _read_name(self, e: Name, env: dict[str, object]):
        if e.ident in env:
            v = env[e.ident]
            if isinstance(v, HostBuffer):
                return HostPtr(v, 0, 0, len(v.data))
            return v
        v = self._global_store(e.ident)
        if v.is_slot:
            return v.data[0]
        return HostPtr(v, 0, 0, len(v.data))

    def _global_store(self, name: str) -> HostBuffer:
        ctx = self._cur_ctx
        if ctx is not None and name in ctx.store:
            return ctx.store[name]
        buf = self.globals.get(name)
        if buf is None:
            raise HostTrap(TrapKind.ABORT.value, f"no storage for '{name}'")
        return buf

    def _eval_binary(self, e: Binary, env: dict[str, object]):
        a = self._eval(e.left, env)
        b = self._eval(e.right, env)
        if e.op in ("==", "!=", "<", "<=", ">", ">="):
            ty = e.operand_ty
            if ty.signed:
                a = devicert.to_signed(a, ty.bits)
                b = devicert.to_signed(b, ty.bits)
            table = {
                "==": a == b, "!=": a != b,
                "<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b,
            }
            return 1 if table[e.op] else 0
        ty = e.ty
        assert isinstance(ty, ScalarType)
        return self._arith(e.op, ty, a, b)

    def _arith(self, op: str, ty: ScalarType, a: int, b: int) -> int:
        bits = ty.bits
        m = devicert.mask(bits)
        if op == "+":
            return (a + b) & m
        if op == "-":
            return (a - b) & m
        if op == "*":
            return (a * b) & m
        if op == "&":
            return a & b
        if op == "|":
            return a | b
        if op == "^":
            return a ^ b
        if op == "<<":
            return (a << (b % bits)) & m
        if op == ">>":
            if ty.signed:
                return (devicert.to_signed(a, bits) >> (b % bits)) & m
            return a >> (b % bits)
        if op in ("/", "%"):
            if b == 0:
                names = {("/", False): "udiv", ("/", True): "sdiv",
                         ("%", False): "urem", ("%", True): "srem"}
                raise HostTrap(TrapKind.DIVIDE_BY_ZERO.value,
                               f"{names[(op, ty.signed)]}.{ty.value} by zero")
            if not ty.signed:
                return a // b if op == "/" else a % b
            sa = devicert.to_signed(a, bits)
            sb = devicert.to_signed(b, bits)
            q = abs(sa) // abs(sb)
            if (sa < 0) != (sb < 0):
                q = -q
            if op == "/":
                return q & m
            return (sa - q * sb) & m
        raise HostTrap(TrapKind.ABORT.value, f"unknown operator '{op}'")

    # ---- lvalues and memory

    def _store_lvalue(self, lv, value: int, env: dict[str, object]) -> None:
        if isinstance(lv, Name):
            if lv.ident in env:
                store = env[lv.ident]
                if isinstance(store, HostBuffer):
                    raise HostTrap(TrapKind.ABORT.value,
                                   f"cannot assign to buffer '{lv.ident}'")
                assert isinstance(lv.ty, ScalarType)
                env[lv.ident] = value & devicert.mask(lv.ty.bits)
                return
            store = self._global_store(lv.ident)
            store.data[0] = value & devicert.mask(store.elem.bits)
            return
        if isinstance(lv, Deref):
            self._store_ptr(self._eval(lv.ptr, env), value, lv)
            return
        if isinstance(lv, Index):
            self._store_ptr(self._elem_addr(lv, env), value, lv)
            return
        raise HostTrap(TrapKind.ABORT.value,
                       f"cannot assign to {type(lv).__name__}")

    def _elem_addr(self, e: Index, env: dict[str, object]) -> HostPtr:
        base = self._eval(e.base, env)
        idx = self._eval(e.index, env)
        return self._elem_addr_raw(base, idx, e)

    def _elem_addr_raw(self, base, idx: int, node) -> HostPtr:
        if not isinstance(base, HostPtr):
            raise HostTrap(TrapKind.ABORT.value, "indexing a non-buffer value")
        at = base.idx + idx
        if at < base.lo or at >= base.hi:
            raise HostTrap(TrapKind.OUT_OF_BOUNDS.value,
                           f"element {idx} escapes {base.describe()}")
        return HostPtr(base.buf, at, base.lo, base.hi)

    def _load_ptr(self, p, node) -> int:
        if not isinstance(p, HostPtr):
            raise HostTrap(TrapKind.ABORT.value, "dereferencing a non-pointer value")
        if p.idx < p.lo or p.idx >= p.hi:
            raise HostTrap(TrapKind.OUT_OF_BOUNDS.value,
                           f"read escapes {p.describe()}")
        return p.buf.data[p.idx]

    def _store_ptr(self, p, value: int, node) -> None:
        if not isinstance(p, HostPtr):
            raise HostTrap(TrapKind.ABORT.value, "dereferencing a non-pointer value")
        if p.idx < p.lo or p.idx >= p.hi:
            raise HostTrap(TrapKind.OUT_OF_BOUNDS.value,
                           f"write escapes {p.describe()}")
        p.buf.data[p.idx] = value & devicert.mask(p.buf.elem.bits)

    # ---- calls

    def _eval_call(self, e: Call, env: dict[str, object], allow_void: bool):
        if e.intrinsic is not None:
            return self._eval_intrinsic(e, env)
        fn = self.mod.info.bases.get(e.callee)
        if fn is not None and fn.body is not None:
            args = [self._eval(a, env) for a in e.args]
            return self._call_function(fn, args)
        if e.callee in devicert.RUNTIME_API:
            return self._eval_runtime(e, env)
        raise HostTrap(TrapKind.ABORT.value,
                       f"call to undefined function '{e.callee}'")

    def _call_function(self, fn: FunctionDecl, args: list):
        env: dict[str, object] = {}
        for p, v in zip(fn.params, args):
            if isinstance(p.ty, PtrType):
                env[p.name] = v
            else:
                env[p.name] = int(v) & devicert.mask(p.ty.bits)
        try:
            self._exec_block(fn.body, env)
        except _Return as r:
            return r.value
        if fn.ret is not None:
            raise HostTrap(TrapKind.ABORT.value,
                           f"'{fn.name}' fell off the end without a return")
        return None

    def _ctx_query(self, kind: IntrinsicKind) -> int:
        ctx = self._cur_ctx
        if kind is IntrinsicKind.THREAD_ID:
            return ctx.tid if ctx else 0
        if kind is IntrinsicKind.TEAM_ID:
            return ctx.team if ctx else 0
        if kind is IntrinsicKind.NUM_THREADS:
            return ctx.threads if ctx else 1
        return ctx.teams if ctx else 1

    def _eval_intrinsic(self, e: Call, env: dict[str, object]):
        kind = e.intrinsic
        if kind in ATOMIC_KINDS:
            ptr = self._eval(e.args[0], env)
            x = self._eval(e.args[1], env)
            d = None
            if kind is IntrinsicKind.ATOMIC_CAS:
                d = self._eval(e.args[2], env)
            return self._atomic_step(kind, ptr, x, d, e)
        if kind is IntrinsicKind.THREADFENCE:
            return None
        if kind is IntrinsicKind.BARRIER:
            return None  # threads run to completion one at a time
        if kind is IntrinsicKind.TRAP:
            code = self._eval(e.args[0], env)
            tk = TRAP_CODES.get(code, TrapKind.ABORT)
            raise HostTrap(tk.value, f"trap code {code}")
        if kind is IntrinsicKind.ERROR:
            raise HostTrap(TrapKind.ABORT.value, e.args[0].value)
        return self._ctx_query(kind)

    def _atomic_step(self, kind: IntrinsicKind, ptr, operand: int,
                     desired, node) -> int:
        old = self._load_ptr(ptr, node)
        ty = ptr.buf.elem
        m = devicert.mask(ty.bits)
        if kind is IntrinsicKind.ATOMIC_ADD:
            new = (old + operand) & m
        elif kind is IntrinsicKind.ATOMIC_XCHG:
            new = operand
        elif kind is IntrinsicKind.ATOMIC_MAX:
            if ty.signed:
                new = operand if devicert.to_signed(old, ty.bits) < devicert.to_signed(operand, ty.bits) else old
            else:
                new = operand if old < operand else old
        elif kind is IntrinsicKind.ATOMIC_MIN:
            if ty.signed:
                new = operand if devicert.to_signed(old, ty.bits) > devicert.to_signed(operand, ty.bits) else old
            else:
                new = operand if old > operand else old
        elif kind is IntrinsicKind.ATOMIC_CAS:
            new, _ = devicert.step_cas(old, operand, desired)
            new &= m
        elif kind is IntrinsicKind.ATOMIC_INC:
            new, _ = devicert.step_inc(old, operand)
        else:
            raise HostTrap(TrapKind.ABORT.value, f"unknown atomic '{kind.name}'")
        self._store_ptr(ptr, new, node)
        return old

    def _eval_runtime(self, e: Call, env: dict[str, object]):
        name = e.callee
        args = [self._eval(a, env) for a in e.args]
        ctx = self._cur_ctx

        if name == "omp_thread_id":
            return ctx.tid if ctx else 0
        if name == "omp_team_id":
            return ctx.team if ctx else 0
        if name == "omp_num_threads":
            return ctx.threads if ctx else 1
        if name == "omp_num_teams":
            return ctx.teams if ctx else 1

        if name in ("__kmpc_alloc_shared", "__kmpc_free_shared"):
            tid = ctx.tid if ctx else 0
            if tid != 0:
                raise HostTrap(TrapKind.NON_UNIFORM_ALLOC.value, "trap code 3")
            arena = ctx.arena if ctx else self._host_arena
            try:
                if name == "__kmpc_alloc_shared":
                    return arena.alloc(args[0])
                arena.free(args[0], args[1])
                return None
            except devicert.ArenaError as err:
                tk = TRAP_CODES.get(err.code, TrapKind.ABORT)
                raise HostTrap(tk.value, f"trap code {err.code}") from None

        if name == "__kmpc_flush":
            return None
        if name == "__kmpc_barrier":
            return None  # threads run to completion one at a time

        if name == "for_static_init":
            lb = devicert.to_signed(args[0], 64)
            ub = devicert.to_signed(args[1], 64)
            tid = devicert.to_signed(args[2], 64)
            n = devicert.to_signed(args[3], 64)
            my_lb, my_ub = devicert.static_bounds(lb, ub, tid, n)
            bounds = args[4]
            self._store_ptr(self._elem_addr_raw(bounds, 0, e),
                            my_lb & devicert.mask(64), e)
            self._store_ptr(self._elem_addr_raw(bounds, 1, e),
                            my_ub & devicert.mask(64), e)
            return None

        steps = {
            "atomic_add": IntrinsicKind.ATOMIC_ADD,
            "atomic_max": IntrinsicKind.ATOMIC_MAX,
            "atomic_min": IntrinsicKind.ATOMIC_MIN,
            "atomic_exchange": IntrinsicKind.ATOMIC_XCHG,
            "atomic_cas": IntrinsicKind.ATOMIC_CAS,
            "atomic_inc": IntrinsicKind.ATOMIC_INC,
        }
        kind = steps.get(name)
        if kind is not None:
            d = args[2] if len(args) > 2 else None
            return self._atomic_step(kind, args[0], args[1], d, e)
        raise HostTrap(TrapKind.ABORT.value, f"unhandled runtime call '{name}'")


# ---- entry points


def emit_host_program(module: SourceModule, entry: str = "main") -> HostProgram:
    """Compile the host half: entry statements, TargetCalls, buffer table."""
    return HostProgram(module, entry=entry)


def compile_images(module: SourceModule, archs) -> dict[str, IRModule]:
    """Device images for every requested architecture, from a lowered module."""
    return {arch: compile_device_image(module, arch) for arch in archs}


def run_bundle(data, opts: RunOptions | None = None) -> HostRunResult:
    """Load a bundle and interpret its host program.

    data may be bundle bytes or an already parsed Bundle. Every offload
    region goes through tgt_target against the bundled images.
    """
    from .bundler import Bundle, BundleError, HOST_ENTRY

    opts = opts or RunOptions()
    try:
        b = data if isinstance(data, Bundle) else Bundle.from_bytes(bytes(data))
    except BundleError as err:
        return HostRunResult("", f"error: {err}\n", 1, {}, [], [])

    try:
        payload = json.loads(b.host.decode("utf-8"))
        source = payload["source"]
        entry = opts.entry or payload.get("entry", "main")
        filename = payload.get("filename", "<bundle>")
    except (ValueError, KeyError, UnicodeDecodeError):
        return HostRunResult("", f"error: malformed '{HOST_ENTRY}' payload in "
                                 f"bundle\n", 1, {}, [], [])

    from .parser import parse_module

    try:
        module = parse_module(source, filename)
        prog = HostProgram(module, entry=entry)
        images: dict[str, IRModule] = {}
        if opts.device == _RUNNABLE_ARCH:
            for name, img in b.images:
                if name == opts.device:
                    images[name] = parse_ir(img.decode("utf-8"))
    except CompileError as err:
        return HostRunResult("", f"{err}\n", 1, {}, [], [])
    except IRParseError as err:
        return HostRunResult("", f"error: bad device image in bundle: {err}\n",
                             1, {}, [], [])

    return prog.run(images, device=opts.device, sched_seed=opts.sched_seed,
                    force_offload_fail=opts.force_fail,
                    check_uninit=opts.check_uninit,
                    grid=opts.grid or (1, 1),
                    collect_trace=opts.collect_trace)


def run_source(source: str, *, filename: str = "<input>", device: str = "vgpu",
               sched_seed: int = 0, force_offload_fail: bool = False,
               check_uninit: bool = False, grid: tuple[int, int] = (1, 1),
               collect_trace: bool = False, entry: str = "main") -> HostRunResult:
    """Parse, compile for the selected device, and run in one step."""
    from .parser import parse_module

    module = parse_module(source, filename)
    images: dict[str, IRModule] = {}
    if device in DEVICE_ARCHS:
        lowered = lower_atomics(copy.deepcopy(module))
        images[device] = compile_device_image(lowered, device)
    prog = HostProgram(module, entry=entry)
    return prog.run(images, device=device, sched_seed=sched_seed,
                    force_offload_fail=force_offload_fail,
                    check_uninit=check_uninit, grid=grid,
                    collect_trace=collect_trace)
