"""Context selectors, target descriptors, and variant resolution.

A selector's device set lists architecture names. With no extension, every
listed name must equal the target arch (so a two-name list can never match a
single target). match_any turns the list into membership; match_none is its
set complement. An absent device set matches vacuously.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .diagnostics import Diagnostic, CompileError
from .intrinsics import IntrinsicKind


class Extension(Enum):
    NONE = "none"
    MATCH_ANY = "match_any"
    MATCH_NONE = "match_none"


@dataclass(frozen=True)
class ContextSelector:
    """Invariant: extension other than NONE requires a device arch set."""

    device_arch: tuple[str, ...] | None = None
    extension: Extension = Extension.NONE

    def render(self) -> str:
        parts = []
        if self.device_arch is not None:
            parts.append("device={arch(%s)}" % ",".join(self.device_arch))
        if self.extension is not Extension.NONE:
            parts.append("implementation={extension(%s)}" % self.extension.value)
        return ", ".join(parts)


_GENERIC_ATOMICS = {
    IntrinsicKind.ATOMIC_ADD: "atomic.add.seq_cst",
    IntrinsicKind.ATOMIC_MAX: "atomic.max.seq_cst",
    IntrinsicKind.ATOMIC_MIN: "atomic.min.seq_cst",
    IntrinsicKind.ATOMIC_XCHG: "atomic.xchg.seq_cst",
    IntrinsicKind.ATOMIC_CAS: "atomic.cas.seq_cst",
}


def _table(**names: str) -> dict[IntrinsicKind, str]:
    t = dict(_GENERIC_ATOMICS)
    for key, value in names.items():
        t[IntrinsicKind[key]] = value
    return t


@dataclass(frozen=True)
class TargetDesc:
    arch: str
    intrinsic_table: dict[IntrinsicKind, str] = field(hash=False)
    shared_space_capacity: int = 131072


TARGETS: dict[str, TargetDesc] = {
    "amdgcn": TargetDesc("amdgcn", _table(
        ATOMIC_INC="__builtin_amdgcn_atomic_inc32",
        THREADFENCE="__builtin_amdgcn_fence",
        BARRIER="__builtin_amdgcn_s_barrier",
        TRAP="__builtin_amdgcn_trap",
        THREAD_ID="__builtin_amdgcn_workitem_id",
        TEAM_ID="__builtin_amdgcn_workgroup_id",
        NUM_THREADS="__builtin_amdgcn_workgroup_size",
        NUM_TEAMS="__builtin_amdgcn_num_workgroups",
    )),
    "nvptx": TargetDesc("nvptx", _table(
        ATOMIC_INC="__nvvm_atom_inc_gen_ui",
        THREADFENCE="__nvvm_membar_gl",
        BARRIER="__nvvm_barrier0",
        TRAP="__nvvm_trap",
        THREAD_ID="__nvvm_read_ptx_sreg_tid",
        TEAM_ID="__nvvm_read_ptx_sreg_ctaid",
        NUM_THREADS="__nvvm_read_ptx_sreg_ntid",
        NUM_TEAMS="__nvvm_read_ptx_sreg_nctaid",
    )),
    "nvptx64": TargetDesc("nvptx64", _table(
        ATOMIC_INC="__nvvm_atom_inc_gen_ui",
        THREADFENCE="__nvvm_membar_gl",
        BARRIER="__nvvm_barrier0",
        TRAP="__nvvm_trap",
        THREAD_ID="__nvvm_read_ptx_sreg_tid",
        TEAM_ID="__nvvm_read_ptx_sreg_ctaid",
        NUM_THREADS="__nvvm_read_ptx_sreg_ntid",
        NUM_TEAMS="__nvvm_read_ptx_sreg_nctaid",
    )),
    "vgpu": TargetDesc("vgpu", _table(
        ATOMIC_INC="vgpu.atomic.inc",
        THREADFENCE="vgpu.fence",
        BARRIER="vgpu.barrier",
        TRAP="vgpu.trap",
        THREAD_ID="vgpu.thread.id",
        TEAM_ID="vgpu.team.id",
        NUM_THREADS="vgpu.num.threads",
        NUM_TEAMS="vgpu.num.teams",
    )),
    "host": TargetDesc("host", _table(
        ATOMIC_INC="host.atomic.inc",
        THREADFENCE="host.fence",
        BARRIER="host.barrier",
        TRAP="host.trap",
        THREAD_ID="host.thread.id",
        TEAM_ID="host.team.id",
        NUM_THREADS="host.num.threads",
        NUM_TEAMS="host.num.teams",
    ), shared_space_capacity=0),
}

DEVICE_ARCHS = ("amdgcn", "nvptx", "nvptx64", "vgpu")

# Opcodes that count as memory fences when scanning emitted IR.
FENCE_OPCODES = frozenset(
    t.intrinsic_table[IntrinsicKind.THREADFENCE] for t in TARGETS.values()
)


def selector_matches(sel: ContextSelector, target: TargetDesc) -> bool:
    if sel.device_arch is None:
        return True
    if sel.extension is Extension.MATCH_ANY:
        return target.arch in sel.device_arch
    if sel.extension is Extension.MATCH_NONE:
        return target.arch not in sel.device_arch
    return all(a == target.arch for a in sel.device_arch)


def selector_score(sel: ContextSelector, target: TargetDesc) -> int | None:
    """Score of a matching selector (selector sets present), None on no match.

    The device set counts 1; the extension set modifies matching but adds 0.
    """
    if not selector_matches(sel, target):
        return None
    return 0 if sel.device_arch is None else 1


class AmbiguousVariant(CompileError):
    pass


def resolve_variant(base_name: str, candidates: list, target: TargetDesc) -> object:
    """Pick the variant declaration for `target`, or None to keep the base.

    `candidates` are FunctionDecls whose variant_of names `base_name`. Two or
    more matches at the top score are a hard error, not a preference.
    """
    scored = []
    for cand in candidates:
        s = selector_score(cand.variant_of[1], target)
        if s is not None:
            scored.append((s, cand))
    if not scored:
        return None
    best = max(s for s, _ in scored)
    top = [c for s, c in scored if s == best]
    if len(top) > 1:
        raise AmbiguousVariant(Diagnostic(
            f"ambiguous declare variant resolution for '{base_name}' on {target.arch}: "
            f"{len(top)} candidates match at score {best}",
            line=getattr(top[0].loc, "line", 0), col=getattr(top[0].loc, "col", 0),
            file=getattr(top[0].loc, "file", "<input>")))
    return top[0]
