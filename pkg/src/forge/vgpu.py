"""Virtual device: a deterministic interpreter for vgpu images.

Execution interleaves threads with a seeded round-robin scheduler whose
quantum is drawn per turn, so one seed fixes the whole schedule. Every
memory access is bounds-checked against the allocation it points into,
atomics execute in one scheduler step, and sequential consistency follows
from the single interpreter loop.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum

from . import devicert
from .devicert import step_inc
from .ir import Instr, IRFunc, IRModule

GLOBAL_ALIGN = 8
POISON_BYTE = 0xAA
DEFAULT_SHARED_CAPACITY = 131072

_SIZES = {"i32": 4, "u32": 4, "i64": 8, "u64": 8}
_SIGNED = {"i32", "i64"}


class TrapKind(Enum):
    SHARED_OVERFLOW = "SharedOverflow"
    NON_LIFO_FREE = "NonLIFOFree"
    NON_UNIFORM_ALLOC = "NonUniformAlloc"
    UNINITIALIZED_READ = "UninitializedRead"
    OUT_OF_BOUNDS = "OutOfBounds"
    DEADLOCK = "Deadlock"
    DIVIDE_BY_ZERO = "DivideByZero"
    ABORT = "Abort"


TRAP_CODES = {
    1: TrapKind.SHARED_OVERFLOW,
    2: TrapKind.NON_LIFO_FREE,
    3: TrapKind.NON_UNIFORM_ALLOC,
}


class InterpreterError(Exception):
    """Internal inconsistency: the image broke the IR contract."""


@dataclass
class GridConfig:
    num_teams: int = 1
    threads_per_team: int = 1
    sched_seed: int = 0

    def __post_init__(self) -> None:
        if not (1 <= self.num_teams <= 1024):
            raise ValueError("num_teams must lie in 1..1024")
        if not (1 <= self.threads_per_team <= 1024):
            raise ValueError("threads_per_team must lie in 1..1024")
        self.sched_seed &= (1 << 64) - 1


class Space:
    """One addressable allocation arena with an optional init shadow."""

    __slots__ = ("label", "data", "shadow")

    def __init__(self, label: str, size: int, *, poison: bool, shadow: bool):
        self.label = label
        self.data = bytearray([POISON_BYTE] * size if poison else bytes(size))
        self.shadow = bytearray(size) if shadow else None

    def mark_init(self, off: int, size: int) -> None:
        if self.shadow is not None:
            self.shadow[off:off + size] = b"\x01" * size


@dataclass(frozen=True)
class Ptr:
    """A pointer value: an offset into one space, bounded by its allocation."""

    space: Space
    off: int
    lo: int
    hi: int

    def describe(self) -> str:
        return f"{self.space.label}+{self.off}"


class Trap(Exception):
    def __init__(self, kind: TrapKind, detail: str) -> None:
        super().__init__(f"{kind.value}: {detail}")
        self.kind = kind
        self.detail = detail


@dataclass
class ExecResult:
    status: str  # "ok" | "trap"
    trap: TrapKind | None
    trap_detail: str
    returns: list[list[object]]
    globals: dict[str, object]
    global_offsets: dict[str, int]
    arg_offsets: list[int | None]
    instruction_count: int
    memory: bytes
    trace: list[str] = field(compare=False, default_factory=list)


class _Frame:
    __slots__ = ("func", "blocks", "block", "ip", "env", "slots", "pending_dst")

    def __init__(self, func: IRFunc, args: list[object]):
        self.func = func
        self.blocks = {b.label: b for b in func.blocks}
        self.block = func.blocks[0]
        self.ip = 0
        self.env: dict[str, object] = {
            name: value for (name, _), value in zip(func.params, args)
        }
        self.slots: dict[str, Space] = {}
        for s in func.slots:
            size = _SIZES[s.ty] * (s.count if s.count is not None else 1)
            self.slots[s.name] = Space(f"slot:{s.name}", size, poison=True, shadow=False)
        self.pending_dst: str | None = None


RUNNING, WAITING, FINISHED = "running", "waiting", "finished"


class _Thread:
    __slots__ = ("team", "tid", "stack", "state", "retval")

    def __init__(self, team: int, tid: int, frame: _Frame):
        self.team = team
        self.tid = tid
        self.stack = [frame]
        self.state = RUNNING
        self.retval: object = None


def _align(n: int) -> int:
    return (n + GLOBAL_ALIGN - 1) // GLOBAL_ALIGN * GLOBAL_ALIGN


_to_signed = devicert.to_signed
_mask = devicert.mask


class VirtualGPU:
    """One launch context. Build a fresh instance per kernel launch."""

    def __init__(self, image: IRModule, *, check_uninit: bool = False,
                 collect_trace: bool = False,
                 shared_capacity: int = DEFAULT_SHARED_CAPACITY):
        if image.target != "vgpu":
            raise InterpreterError(f"image targets '{image.target}', not vgpu")
        self.image = image
        self.funcs = {f.name: f for f in image.funcs}
        self.check_uninit = check_uninit
        self.collect_trace = collect_trace
        self.shared_capacity = shared_capacity
        self.trace: list[str] = []
        self.count = 0

    # ---- memory layout

    def _layout(self, args: list[object]) -> None:
        shadow = self.check_uninit
        size = 0
        self.global_offsets: dict[str, int] = {}
        uninit_spans: list[tuple[int, int]] = []
        init_words: list[tuple[int, int, int]] = []
        shared_layout: list[tuple[str, int]] = []
        shared_size = 0
        for g in self.image.globals:
            extent = _SIZES[g.ty] * g.count
            if g.space == "team_shared":
                shared_size = _align(shared_size)
                shared_layout.append((g.name, shared_size))
                shared_size += extent
                continue
            size = _align(size)
            self.global_offsets[g.name] = size
            if g.init == "none":
                uninit_spans.append((size, extent))
            elif g.init != "zero":
                init_words.append((size, int(g.init), _SIZES[g.ty]))
            size += extent
        if shared_size > self.shared_capacity:
            raise Trap(TrapKind.SHARED_OVERFLOW,
                       f"static team-shared data needs {shared_size} bytes, "
                       f"capacity is {self.shared_capacity}")

        self.arg_offsets: list[int | None] = []
        arg_spans: list[tuple[int, bytes]] = []
        for a in args:
            if isinstance(a, (bytes, bytearray)):
                size = _align(size)
                self.arg_offsets.append(size)
                arg_spans.append((size, bytes(a)))
                size += len(a)
            else:
                self.arg_offsets.append(None)

        self.mem = Space("global", size, poison=False, shadow=shadow)
        for off, extent in uninit_spans:
            self.mem.data[off:off + extent] = bytes([POISON_BYTE]) * extent
        if shadow:
            self.mem.shadow[:] = b"\x01" * size
            for off, extent in uninit_spans:
                self.mem.shadow[off:off + extent] = bytes(extent)
        for off, value, width in init_words:
            self.mem.data[off:off + width] = value.to_bytes(width, "little")
        for off, payload in arg_spans:
            self.mem.data[off:off + len(payload)] = payload

        self.shared_layout = shared_layout
        self.shared_size = shared_size
        self.shared_uninit = [
            (name, off) for (name, off) in shared_layout
            if self._global_init(name) == "none"
        ]

    def _global_init(self, name: str) -> object:
        for g in self.image.globals:
            if g.name == name:
                return g.init
        raise KeyError(name)

    def _build_shared(self, team: int) -> Space:
        sp = Space(f"shared:{team}", self.shared_size, poison=True,
                   shadow=self.check_uninit)
        uninit = {name for name, _ in self.shared_uninit}
        for g in self.image.globals:
            if g.space != "team_shared":
                continue
            off = dict(self.shared_layout)[g.name]
            extent = _SIZES[g.ty] * g.count
            if g.name in uninit:
                continue
            sp.data[off:off + extent] = bytes(extent)
            if g.init != "zero" and g.init != "none":
                sp.data[off:off + _SIZES[g.ty]] = int(g.init).to_bytes(
                    _SIZES[g.ty], "little")
            sp.mark_init(off, extent)
        return sp

    # ---- launch

    def launch(self, entry: str, grid: GridConfig, args: list[object]) -> ExecResult:
        func = self.funcs.get(entry)
        if func is None:
            raise InterpreterError(f"no function '{entry}' in the image")
        if len(args) != len(func.params):
            raise InterpreterError(
                f"'{entry}' takes {len(func.params)} arguments, got {len(args)}")
        self.grid = grid

        trap: Trap | None = None
        try:
            self._layout(args)

            call_args: list[object] = []
            for a, off, (pname, pty) in zip(args, self.arg_offsets, func.params):
                if isinstance(a, (bytes, bytearray)):
                    if not pty.startswith("ptr<"):
                        raise InterpreterError(f"parameter {pname} is not a buffer")
                    call_args.append(Ptr(self.mem, off, off, off + len(a)))
                else:
                    if pty.startswith("ptr<"):
                        raise InterpreterError(f"parameter {pname} needs a buffer")
                    call_args.append(int(a) & _mask(_SIZES[pty] * 8))

            self.shared = [self._build_shared(t) for t in range(grid.num_teams)]
            self.threads = [
                _Thread(team, tid, _Frame(func, list(call_args)))
                for team in range(grid.num_teams)
                for tid in range(grid.threads_per_team)
            ]

            rng = random.Random(grid.sched_seed)
            rr = 0
            n = len(self.threads)
            while True:
                runnable = {i for i, t in enumerate(self.threads) if t.state == RUNNING}
                if not runnable:
                    if all(t.state == FINISHED for t in self.threads):
                        break
                    blocked = [
                        f"team {t.team} thread {t.tid}"
                        for t in self.threads if t.state == WAITING
                    ]
                    raise Trap(TrapKind.DEADLOCK,
                               "barrier can never release: " + "; ".join(blocked))
                pick = next(i for i in ((rr + k) % n for k in range(n)) if i in runnable)
                rr = (pick + 1) % n
                quantum = rng.randint(1, 8)
                t = self.threads[pick]
                for _ in range(quantum):
                    if t.state != RUNNING:
                        break
                    self._step(t)
        except Trap as tr:
            trap = tr

        returns: list[list[object]] = [
            [None] * grid.threads_per_team for _ in range(grid.num_teams)
        ]
        for t in getattr(self, "threads", []):
            returns[t.team][t.tid] = t.retval

        mem = getattr(self, "mem", None)
        arg_offsets = getattr(self, "arg_offsets", [None] * len(args))
        global_offsets = getattr(self, "global_offsets", {})
        globals_out: dict[str, object] = {}
        if mem is not None:
            for a, off in zip(args, arg_offsets):
                if isinstance(a, bytearray) and off is not None:
                    a[:] = mem.data[off:off + len(a)]
            for g in self.image.globals:
                if g.space != "global":
                    continue
                off = global_offsets[g.name]
                width = _SIZES[g.ty]
                vals = [
                    int.from_bytes(mem.data[off + i * width:off + (i + 1) * width],
                                   "little")
                    for i in range(g.count)
                ]
                globals_out[g.name] = vals[0] if g.count == 1 else vals

        return ExecResult(
            status="trap" if trap else "ok",
            trap=trap.kind if trap else None,
            trap_detail=trap.detail if trap else "",
            returns=returns,
            globals=globals_out,
            global_offsets=dict(global_offsets),
            arg_offsets=list(arg_offsets),
            instruction_count=self.count,
            memory=bytes(mem.data) if mem is not None else b"",
            trace=self.trace,
        )

    # ---- execution

    def _emit_trace(self, t: _Thread, kind: str, detail: str) -> None:
        if self.collect_trace:
            self.trace.append(f"{self.count} {t.team} {t.tid} {kind} {detail}")

    def _value(self, frame: _Frame, tok: str) -> object:
        v = frame.env.get(tok[1:])
        if v is None:
            raise InterpreterError(f"operand {tok} has no value in @{frame.func.name}")
        return v

    def _load(self, ptr: Ptr, width: int, what: str) -> int:
        if ptr.off < ptr.lo or ptr.off + width > ptr.hi:
            raise Trap(TrapKind.OUT_OF_BOUNDS,
                       f"{what} of {width} bytes at {ptr.describe()}")
        if self.check_uninit and ptr.space.shadow is not None:
            span = ptr.space.shadow[ptr.off:ptr.off + width]
            if not all(span):
                raise Trap(TrapKind.UNINITIALIZED_READ,
                           f"{what} at {ptr.describe()} reads {POISON_BYTE:#x} poison")
        return int.from_bytes(ptr.space.data[ptr.off:ptr.off + width], "little")

    def _store(self, ptr: Ptr, width: int, value: int, what: str) -> None:
        if ptr.off < ptr.lo or ptr.off + width > ptr.hi:
            raise Trap(TrapKind.OUT_OF_BOUNDS,
                       f"{what} of {width} bytes at {ptr.describe()}")
        ptr.space.data[ptr.off:ptr.off + width] = (value & _mask(width * 8)).to_bytes(
            width, "little")
        ptr.space.mark_init(ptr.off, width)

    def _finish_thread(self, t: _Thread, value: object) -> None:
        t.state = FINISHED
        t.retval = value

    def _step(self, t: _Thread) -> None:
        frame = t.stack[-1]
        if frame.ip >= len(frame.block.instrs):
            raise InterpreterError(
                f"fell off block {frame.block.label} in @{frame.func.name}")
        ins = frame.block.instrs[frame.ip]
        self.count += 1
        op = ins.op
        parts = op.split(".")
        env = frame.env

        def put(value: object) -> None:
            if ins.dst is not None:
                env[ins.dst] = value

        def val(i: int) -> object:
            return self._value(frame, ins.args[i])

        advance = True

        if op.startswith("const."):
            put(int(ins.args[0]) & _mask(_SIZES[parts[1]] * 8))
        elif parts[0] in _ALU and len(parts) == 2:
            put(self._alu(parts[0], parts[1], val(0), val(1) if len(ins.args) > 1 else 0))
        elif parts[0] == "cmp":
            put(self._cmp(parts[1], parts[2], val(0), val(1)))
        elif parts[0] == "cast":
            put(self._cast(parts[1], parts[2], val(0)))
        elif op == "ld.slot":
            name = ins.args[0][1:]
            sp = frame.slots[name]
            width = len(sp.data)
            put(int.from_bytes(sp.data, "little") & _mask(width * 8))
        elif op == "st.slot":
            name = ins.args[0][1:]
            sp = frame.slots[name]
            v = val(1)
            sp.data[:] = (v & _mask(len(sp.data) * 8)).to_bytes(len(sp.data), "little")
        elif op == "addr.slot":
            name = ins.args[0][1:]
            sp = frame.slots[name]
            put(Ptr(sp, 0, 0, len(sp.data)))
        elif op == "addr.gv":
            put(self._addr_gv(t, ins.args[0][1:]))
        elif parts[0] == "elem" and parts[1] == "addr":
            base = val(0)
            idx = val(1)
            width = _SIZES[parts[2]]
            if not isinstance(base, Ptr):
                raise InterpreterError("elem.addr needs a pointer operand")
            off = base.off + idx * width
            if off < base.lo or off + width > base.hi:
                raise Trap(TrapKind.OUT_OF_BOUNDS,
                           f"element {idx} escapes {base.space.label}"
                           f"[{base.lo}:{base.hi}]")
            put(Ptr(base.space, off, base.lo, base.hi))
        elif parts[0] == "ld" and len(parts) == 2:
            ptr = val(0)
            width = _SIZES[parts[1]]
            v = self._load(ptr, width, "load")
            self._emit_trace(t, op, f"{ptr.describe()} -> {v}")
            put(v)
        elif parts[0] == "st" and len(parts) == 2:
            ptr = val(0)
            width = _SIZES[parts[1]]
            v = val(1)
            self._store(ptr, width, v, "store")
            self._emit_trace(t, op, f"{ptr.describe()} <- {v}")
        elif op == "call":
            callee = ins.args[0][1:]
            f = self.funcs.get(callee)
            if f is None:
                raise InterpreterError(f"call to unknown function '{callee}'")
            call_args = [self._value(frame, a) for a in ins.args[1:]]
            self._emit_trace(t, "call", callee)
            frame.pending_dst = ins.dst
            t.stack.append(_Frame(f, call_args))
            advance = False
        elif op == "ret":
            value = self._value(frame, ins.args[0]) if ins.args else None
            t.stack.pop()
            if not t.stack:
                self._emit_trace(t, "ret", f"thread done value={value}")
                self._finish_thread(t, value)
            else:
                parent = t.stack[-1]
                if parent.pending_dst is not None:
                    if value is None:
                        raise InterpreterError("void return used as a value")
                    parent.env[parent.pending_dst] = value
                    parent.pending_dst = None
                parent.ip += 1
            advance = False
        elif op == "br":
            frame.block = frame.blocks[ins.args[0]]
            frame.ip = 0
            advance = False
        elif op == "cbr":
            cond = val(0)
            frame.block = frame.blocks[ins.args[1] if cond else ins.args[2]]
            frame.ip = 0
            advance = False
        elif op.startswith("atomic.") or op == "vgpu.atomic.inc":
            self._atomic(t, ins, put, val)
        elif op == "vgpu.fence":
            self._emit_trace(t, op, "")
        elif op == "vgpu.barrier":
            frame.ip += 1
            t.state = WAITING
            self._emit_trace(t, op, "enter")
            self._maybe_release(t.team)
            advance = False
        elif op == "vgpu.trap":
            code = val(0)
            kind = TRAP_CODES.get(code, TrapKind.ABORT)
            raise Trap(kind, f"device trap code {code} in @{frame.func.name} "
                             f"(team {t.team} thread {t.tid})")
        elif op == "vgpu.thread.id":
            put(t.tid)
        elif op == "vgpu.team.id":
            put(t.team)
        elif op == "vgpu.num.threads":
            put(self.grid.threads_per_team)
        elif op == "vgpu.num.teams":
            put(self.grid.num_teams)
        else:
            raise InterpreterError(f"vgpu cannot execute opcode '{op}'")

        if advance:
            frame.ip += 1

    # ---- op helpers

    def _addr_gv(self, t: _Thread, name: str) -> Ptr:
        for g in self.image.globals:
            if g.name == name:
                extent = _SIZES[g.ty] * g.count
                if g.space == "team_shared":
                    off = dict(self.shared_layout)[name]
                    return Ptr(self.shared[t.team], off, off, off + extent)
                off = self.global_offsets[name]
                return Ptr(self.mem, off, off, off + extent)
        raise InterpreterError(f"unknown global '@{name}'")

    def _alu(self, op: str, ty: str, a: object, b: object) -> int:
        bits = _SIZES[ty] * 8
        m = _mask(bits)
        if op == "neg":
            return (-a) & m
        if op == "add":
            return (a + b) & m
        if op == "sub":
            return (a - b) & m
        if op == "mul":
            return (a * b) & m
        if op == "and":
            return a & b
        if op == "or":
            return a | b
        if op == "xor":
            return a ^ b
        if op == "shl":
            return (a << (b % bits)) & m
        if op == "lshr":
            return a >> (b % bits)
        if op == "ashr":
            return (_to_signed(a, bits) >> (b % bits)) & m
        if op in ("udiv", "urem", "sdiv", "srem"):
            if b == 0:
                raise Trap(TrapKind.DIVIDE_BY_ZERO, f"{op}.{ty} by zero")
            if op == "udiv":
                return a // b
            if op == "urem":
                return a % b
            sa, sb = _to_signed(a, bits), _to_signed(b, bits)
            q = abs(sa) // abs(sb)
            if (sa < 0) != (sb < 0):
                q = -q
            if op == "sdiv":
                return q & m
            return (sa - q * sb) & m
        raise InterpreterError(f"unknown ALU op '{op}'")

    def _cmp(self, cc: str, ty: str, a: int, b: int) -> int:
        bits = _SIZES[ty] * 8
        if cc.startswith("s"):
            a, b = _to_signed(a, bits), _to_signed(b, bits)
            cc = cc[1:]
        elif cc.startswith("u"):
            cc = cc[1:]
        table = {
            "eq": a == b, "ne": a != b,
            "lt": a < b, "le": a <= b, "gt": a > b, "ge": a >= b,
        }
        return 1 if table[cc] else 0

    def _cast(self, src: str, dst: str, v: int) -> int:
        src_bits = _SIZES[src] * 8
        dst_bits = _SIZES[dst] * 8
        as_int = _to_signed(v, src_bits) if src in _SIGNED else v
        return as_int & _mask(dst_bits)

    def _atomic(self, t: _Thread, ins: Instr, put, val) -> None:
        op = ins.op
        if op == "vgpu.atomic.inc":
            ptr = val(0)
            bound = val(1)
            old = self._load(ptr, 4, "atomic load")
            new, _ = step_inc(old, bound)
            self._store(ptr, 4, new, "atomic store")
            self._emit_trace(t, op, f"{ptr.describe()} old={old} new={new}")
            put(old)
            return
        parts = op.split(".")  # atomic.<kind>.seq_cst.<ty>
        kind, ty = parts[1], parts[3]
        width = _SIZES[ty]
        bits = width * 8
        ptr = val(0)
        e = val(1)
        old = self._load(ptr, width, "atomic load")
        if kind == "add":
            new = (old + e) & _mask(bits)
        elif kind == "xchg":
            new = e
        elif kind == "max":
            if ty in _SIGNED:
                new = e if _to_signed(old, bits) < _to_signed(e, bits) else old
            else:
                new = e if old < e else old
        elif kind == "min":
            if ty in _SIGNED:
                new = e if _to_signed(old, bits) > _to_signed(e, bits) else old
            else:
                new = e if old > e else old
        elif kind == "cas":
            d = val(2)
            new = d if old == e else old
        else:
            raise InterpreterError(f"unknown atomic '{op}'")
        self._store(ptr, width, new, "atomic store")
        self._emit_trace(t, op, f"{ptr.describe()} old={old} new={new}")
        put(old)

    def _maybe_release(self, team: int) -> None:
        members = [t for t in self.threads if t.team == team]
        if all(m.state == WAITING for m in members):
            for m in members:
                m.state = RUNNING


_ALU = frozenset({
    "add", "sub", "mul", "and", "or", "xor", "shl",
    "udiv", "sdiv", "urem", "srem", "lshr", "ashr", "neg",
})


def run_image(image: IRModule, entry: str, grid: GridConfig, args: list[object],
              *, check_uninit: bool = False,
              collect_trace: bool = False,
              shared_capacity: int = DEFAULT_SHARED_CAPACITY) -> ExecResult:
    gpu = VirtualGPU(image, check_uninit=check_uninit,
                     collect_trace=collect_trace, shared_capacity=shared_capacity)
    return gpu.launch(entry, grid, args)
