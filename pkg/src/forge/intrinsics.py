"""Intrinsic kinds and the builtin surface names the frontend recognizes.

Kinds are target-independent; each target maps a kind to an instruction name
(see selectors.TARGETS). ERROR deliberately has no entry anywhere, so a call
to error(...) surfaces as a missing-intrinsic diagnostic if it survives
specialization and reaches codegen.
"""

from __future__ import annotations

from enum import Enum, auto


class IntrinsicKind(Enum):
    ATOMIC_ADD = auto()
    ATOMIC_MAX = auto()
    ATOMIC_MIN = auto()
    ATOMIC_XCHG = auto()
    ATOMIC_CAS = auto()
    ATOMIC_INC = auto()
    THREADFENCE = auto()
    BARRIER = auto()
    TRAP = auto()
    THREAD_ID = auto()
    TEAM_ID = auto()
    NUM_THREADS = auto()
    NUM_TEAMS = auto()
    ERROR = auto()


ATOMIC_KINDS = frozenset({
    IntrinsicKind.ATOMIC_ADD, IntrinsicKind.ATOMIC_MAX, IntrinsicKind.ATOMIC_MIN,
    IntrinsicKind.ATOMIC_XCHG, IntrinsicKind.ATOMIC_CAS, IntrinsicKind.ATOMIC_INC,
})

# Surface builtin name -> kind. Target-specific names are ordinarily written
# inside matching declare variant regions; nothing stops other uses, the call
# simply lowers through the current target's table.
SURFACE_BUILTINS: dict[str, IntrinsicKind] = {
    "__atomic_add": IntrinsicKind.ATOMIC_ADD,
    "__atomic_max": IntrinsicKind.ATOMIC_MAX,
    "__atomic_min": IntrinsicKind.ATOMIC_MIN,
    "__atomic_xchg": IntrinsicKind.ATOMIC_XCHG,
    "__atomic_cas": IntrinsicKind.ATOMIC_CAS,
    "__atomic_inc": IntrinsicKind.ATOMIC_INC,
    "__trap": IntrinsicKind.TRAP,
    "error": IntrinsicKind.ERROR,

    "__vgpu_atomic_inc": IntrinsicKind.ATOMIC_INC,
    "__vgpu_threadfence": IntrinsicKind.THREADFENCE,
    "__vgpu_barrier": IntrinsicKind.BARRIER,
    "__vgpu_thread_id": IntrinsicKind.THREAD_ID,
    "__vgpu_team_id": IntrinsicKind.TEAM_ID,
    "__vgpu_num_threads": IntrinsicKind.NUM_THREADS,
    "__vgpu_num_teams": IntrinsicKind.NUM_TEAMS,

    "__builtin_amdgcn_atomic_inc32": IntrinsicKind.ATOMIC_INC,
    "__builtin_amdgcn_fence": IntrinsicKind.THREADFENCE,
    "__builtin_amdgcn_s_barrier": IntrinsicKind.BARRIER,
    "__builtin_amdgcn_workitem_id": IntrinsicKind.THREAD_ID,
    "__builtin_amdgcn_workgroup_id": IntrinsicKind.TEAM_ID,
    "__builtin_amdgcn_workgroup_size": IntrinsicKind.NUM_THREADS,
    "__builtin_amdgcn_num_workgroups": IntrinsicKind.NUM_TEAMS,

    "__nvvm_atom_inc_gen_ui": IntrinsicKind.ATOMIC_INC,
    "__nvvm_membar_gl": IntrinsicKind.THREADFENCE,
    "__nvvm_barrier0": IntrinsicKind.BARRIER,
    "__nvvm_read_ptx_sreg_tid": IntrinsicKind.THREAD_ID,
    "__nvvm_read_ptx_sreg_ctaid": IntrinsicKind.TEAM_ID,
    "__nvvm_read_ptx_sreg_ntid": IntrinsicKind.NUM_THREADS,
    "__nvvm_read_ptx_sreg_nctaid": IntrinsicKind.NUM_TEAMS,
}
