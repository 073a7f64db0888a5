"""Device runtime: embedded source, public API signatures, and reference
semantics shared by the host fallback path and the device interpreter."""

from __future__ import annotations

import importlib.resources
from functools import lru_cache

from .ast import PtrType, ScalarType, SourceModule

U32_MASK = 0xFFFFFFFF


def mask(bits: int) -> int:
    return (1 << bits) - 1


def to_signed(v: int, bits: int) -> int:
    return v - (1 << bits) if v >= (1 << (bits - 1)) else v

#: Functions the runtime exports to user code. Sema resolves calls to these
#: names when a module does not define them itself; the host interpreter
#: executes them with sequential semantics inside fallback regions.
RUNTIME_API: dict[str, tuple[tuple[object, ...], object]] = {
    "omp_thread_id": ((), ScalarType.U32),
    "omp_team_id": ((), ScalarType.U32),
    "omp_num_threads": ((), ScalarType.U32),
    "omp_num_teams": ((), ScalarType.U32),
    "__kmpc_alloc_shared": ((ScalarType.U64,), ScalarType.U64),
    "__kmpc_free_shared": ((ScalarType.U64, ScalarType.U64), None),
    "__kmpc_flush": ((ScalarType.U64,), None),
    "__kmpc_barrier": ((ScalarType.U64,), None),
    "atomic_add": ((PtrType(ScalarType.U32), ScalarType.U32), ScalarType.U32),
    "atomic_max": ((PtrType(ScalarType.U32), ScalarType.U32), ScalarType.U32),
    "atomic_min": ((PtrType(ScalarType.U32), ScalarType.U32), ScalarType.U32),
    "atomic_exchange": ((PtrType(ScalarType.U32), ScalarType.U32), ScalarType.U32),
    "atomic_cas": (
        (PtrType(ScalarType.U32), ScalarType.U32, ScalarType.U32),
        ScalarType.U32,
    ),
    "atomic_inc": ((PtrType(ScalarType.U32), ScalarType.U32), ScalarType.U32),
    "for_static_init": (
        (
            ScalarType.I64,
            ScalarType.I64,
            ScalarType.I64,
            ScalarType.I64,
            PtrType(ScalarType.I64),
        ),
        None,
    ),
}

ARENA_CAPACITY = 65536
ARENA_ALIGN = 8


def runtime_source() -> str:
    return (
        importlib.resources.files("forge").joinpath("runtime.mc").read_text("utf-8")
    )


@lru_cache(maxsize=1)
def runtime_module() -> SourceModule:
    from .parser import parse_module

    return parse_module(runtime_source(), filename="<runtime>")


@lru_cache(maxsize=1)
def runtime_symbols() -> frozenset[str]:
    """Base names the runtime links in; user modules may not redefine them."""
    mod = runtime_module()
    names = {g.name for g in mod.globals()}
    names.update(f.name for f in mod.functions() if f.variant_of is None)
    return frozenset(names)


# ---- reference semantics ----
Step = tuple[int, int]


def step_add(x: int, e: int) -> Step:
    """Returns (new value, captured old value); arithmetic wraps at 32 bits."""
    return ((x + e) & U32_MASK, x)


def step_max(x: int, e: int) -> Step:
    return (e if x < e else x, x)


def step_min(x: int, e: int) -> Step:
    return (e if x > e else x, x)


def step_exchange(x: int, e: int) -> Step:
    return (e, x)


def step_cas(x: int, e: int, d: int) -> Step:
    return (d if x == e else x, x)


def step_inc(x: int, e: int) -> Step:
    """Wrapping increment: reset to zero once the value reaches the bound."""
    return (0 if x >= e else (x + 1) & U32_MASK, x)


def static_bounds(lb: int, ub: int, tid: int, nthreads: int) -> tuple[int, int]:
    """Block partition of inclusive [lb, ub]; a pair with my_lb > ub is empty."""
    chunk = (ub - lb + 1 + nthreads - 1) // nthreads
    my_lb = lb + tid * chunk
    my_ub = min(my_lb + chunk - 1, ub)
    return (my_lb, my_ub)


class ArenaError(Exception):
    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code


class Arena:
    """Sequential analog of the team-shared bump allocator. The host fallback
    uses one arena per simulated team; trap codes match the device runtime."""

    def __init__(self, capacity: int = ARENA_CAPACITY) -> None:
        self.capacity = capacity
        self.cursor = 0

    @staticmethod
    def _aligned(bytes_: int) -> int:
        return (bytes_ + ARENA_ALIGN - 1) // ARENA_ALIGN * ARENA_ALIGN

    def alloc(self, bytes_: int) -> int:
        need = self._aligned(bytes_)
        if bytes_ > self.capacity or self.cursor + need > self.capacity:
            raise ArenaError(1, "shared arena overflow")
        off = self.cursor
        self.cursor += need
        return off

    def free(self, off: int, bytes_: int) -> None:
        need = self._aligned(bytes_)
        if off + need != self.cursor:
            raise ArenaError(2, "non-LIFO shared free")
        self.cursor = off
