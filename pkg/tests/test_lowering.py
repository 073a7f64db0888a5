"""Atomic construct recognition, placement rules, and specialization.

The canonical shapes and every mutant below are written as real source
so the whole front half of the pipeline is exercised, not just the
matcher. A mutant is a canonical block with one edit; all of them must
be rejected, never silently mapped to a different atomic.
"""

from __future__ import annotations

import pytest

from forge.ast import AtomicStmt, GlobalDecl, walk_stmts
from forge.diagnostics import CompileError
from forge.intrinsics import IntrinsicKind
from forge.lowering import (
    NotRepresentable,
    Placement,
    lower_atomic,
    lower_atomics,
    place_global,
    specialize,
)
from forge.parser import parse_module
from forge.printer import render_module
from forge.selectors import FENCE_OPCODES, TARGETS
from forge.codegen import emit_device_ir


def atomic_fn(clauses: str, block: str) -> str:
    return f"""\
#pragma omp begin declare target
void f(u32 *x, u32 *y, u32 e, u32 d) {{
  u32 v;
  u32 w;
  #pragma omp atomic {clauses} seq_cst
  {{
{block}
  }}
}}
#pragma omp end declare target
"""


def construct_of(source: str):
    module = parse_module(source)
    for stmt in walk_stmts(module.info.bases["f"].body):
        if isinstance(stmt, AtomicStmt):
            return stmt.construct
    raise AssertionError("no atomic construct found")


CANONICAL = {
    "add": ("capture", "    v = *x;\n    *x += e;", IntrinsicKind.ATOMIC_ADD),
    "xchg": ("capture", "    v = *x;\n    *x = e;", IntrinsicKind.ATOMIC_XCHG),
    "max": ("compare capture", "    v = *x;\n    if (*x < e) { *x = e; }",
            IntrinsicKind.ATOMIC_MAX),
    "min": ("compare capture", "    v = *x;\n    if (*x > e) { *x = e; }",
            IntrinsicKind.ATOMIC_MIN),
    "cas": ("compare capture", "    v = *x;\n    if (*x == e) { *x = d; }",
            IntrinsicKind.ATOMIC_CAS),
}


@pytest.mark.parametrize("name", sorted(CANONICAL))
def test_canonical_shape_lowers(name):
    clauses, block, kind = CANONICAL[name]
    construct = construct_of(atomic_fn(clauses, block))
    intrinsic = lower_atomic(construct)
    assert intrinsic.kind is kind
    assert (intrinsic.d is not None) == (kind is IntrinsicKind.ATOMIC_CAS)


@pytest.mark.parametrize("name", sorted(CANONICAL))
@pytest.mark.parametrize("arch", ("vgpu", "amdgcn", "nvptx64"))
def test_one_atomic_zero_fences(name, arch):
    clauses, block, _ = CANONICAL[name]
    module = parse_module(atomic_fn(clauses, block))
    lower_atomics(module)
    ir = emit_device_ir(specialize(module, TARGETS[arch]))
    ops = [i.op for f in ir.funcs for b in f.blocks for i in b.instrs]
    atomics = [op for op in ops if "atomic" in op]
    fences = [op for op in ops if op in FENCE_OPCODES]
    assert len(atomics) == 1, ops
    assert fences == [], ops


MUTANTS = {
    "subtract_update": ("capture", "    v = *x;\n    *x -= e;"),
    "multiply_update": ("capture", "    v = *x;\n    *x *= e;"),
    "capture_second": ("capture", "    *x += e;\n    v = *x;"),
    "capture_only": ("capture", "    v = *x;"),
    "three_statements": ("capture", "    v = *x;\n    *x += e;\n    w = *x;"),
    "update_other_location": ("capture", "    v = *x;\n    *y += e;"),
    "capture_other_location": ("capture", "    v = *y;\n    *x += e;"),
    "operand_reads_location": ("capture", "    v = *x;\n    *x += *x;"),
    "operand_reads_capture": ("capture", "    v = *x;\n    *x += v;"),
    "ordered_le": ("compare capture", "    v = *x;\n    if (*x <= e) { *x = e; }"),
    "ordered_ne": ("compare capture", "    v = *x;\n    if (*x != e) { *x = d; }"),
    "flipped_comparison": ("compare capture", "    v = *x;\n    if (e < *x) { *x = e; }"),
    "max_stores_other_value": ("compare capture",
                               "    v = *x;\n    if (*x < e) { *x = d; }"),
    "else_branch_writes": ("compare capture",
                           "    v = *x;\n    if (*x < e) { *x = e; } else { *x = d; }"),
    "cas_stores_elsewhere": ("compare capture",
                             "    v = *x;\n    if (*x == e) { *y = d; }"),
    "two_stores_in_branch": ("compare capture",
                             "    v = *x;\n    if (*x < e) { *x = e; *x = e; }"),
    "compare_without_conditional": ("compare capture", "    v = *x;\n    *x += e;"),
    "conditional_without_compare": ("capture", "    v = *x;\n    if (*x < e) { *x = e; }"),
}

INC_SHAPE = ("compare capture",
             "    v = *x;\n    if (*x >= e) { *x = 0; } else { *x = *x + 1; }")


def test_at_least_ten_mutants():
    assert len(MUTANTS) >= 10


@pytest.mark.parametrize("name", sorted(MUTANTS))
def test_mutant_rejected(name):
    clauses, block = MUTANTS[name]
    construct = construct_of(atomic_fn(clauses, block))
    with pytest.raises(NotRepresentable):
        lower_atomic(construct)


def test_inc_shape_rejected():
    clauses, block = INC_SHAPE
    construct = construct_of(atomic_fn(clauses, block))
    with pytest.raises(NotRepresentable):
        lower_atomic(construct)


def test_missing_capture_clause_rejected():
    construct = construct_of(atomic_fn("", "    v = *x;\n    *x += e;"))
    with pytest.raises(NotRepresentable):
        lower_atomic(construct)


# ---- placement


PLACED = """\
#pragma omp begin declare target
u32 plain[4];
u32 filled = 7;
u32 shared_a[8];
#pragma omp allocate(shared_a) allocator(omp_pteam_mem_alloc)
u32 shared_b[8];
#pragma omp allocate(shared_b) allocator(omp_cgroup_mem_alloc)
u64 scratch[16] [[loader_uninitialized]];
#pragma omp allocate(scratch) allocator(omp_pteam_mem_alloc)
#pragma omp end declare target

void main() {
}
"""


def globals_by_name(source: str) -> dict[str, GlobalDecl]:
    module = parse_module(source)
    return {g.name: g for g in module.globals()}


def test_place_global_rules():
    decls = globals_by_name(PLACED)
    assert place_global(decls["plain"]) == Placement("global", "zero")
    assert place_global(decls["filled"]) == Placement("global", "explicit")
    assert place_global(decls["shared_a"]) == Placement("team_shared", "zero")
    assert place_global(decls["scratch"]) == Placement("team_shared", "none")


def test_pteam_and_cgroup_place_identically():
    decls = globals_by_name(PLACED)
    assert place_global(decls["shared_a"]) == place_global(decls["shared_b"])


def test_init_none_only_from_loader_uninitialized():
    decls = globals_by_name(PLACED)
    for name, decl in decls.items():
        placement = place_global(decl)
        assert (placement.init == "none") == decl.loader_uninitialized, name


def test_loader_uninitialized_with_initializer_is_rejected():
    bad = """\
#pragma omp begin declare target
u32 buf [[loader_uninitialized]] = 7;
#pragma omp end declare target

void main() {
}
"""
    with pytest.raises(CompileError):
        parse_module(bad)


def test_specialize_attaches_placements():
    module = parse_module(PLACED)
    spec = specialize(module, TARGETS["vgpu"])
    for g in spec.module.globals():
        assert isinstance(g.placement, Placement)


# ---- specialization


VARIANTS = """\
#pragma omp begin declare target
u32 pick() {
  return 1;
}
#pragma omp begin declare variant match(device={arch(amdgcn)})
u32 pick() {
  return 2;
}
#pragma omp end declare variant
#pragma omp begin declare variant match(device={arch(nvptx,nvptx64)}, implementation={extension(match_any)})
u32 pick() {
  return 3;
}
#pragma omp end declare variant

u32 caller() {
  return pick();
}
#pragma omp end declare target

void main() {
}
"""


def rendered_calls(module) -> list[str]:
    text = render_module(module)
    return [line.strip() for line in text.splitlines() if "pick" in line]


def test_specialize_rewires_calls_per_target():
    module = parse_module(VARIANTS)
    for arch, marker in (("amdgcn", "amdgcn"), ("nvptx64", "nvptx_nvptx64")):
        spec = specialize(module, TARGETS[arch])
        names = {f.name for f in spec.module.functions()}
        assert any(marker in n for n in names), names
        body = render_module(spec.module)
        assert f"pick.ompvariant" in body


def test_specialize_keeps_base_when_nothing_matches():
    module = parse_module(VARIANTS)
    spec = specialize(module, TARGETS["vgpu"])
    names = {f.name for f in spec.module.functions()}
    assert "pick" in names
    assert not any("ompvariant" in n for n in names)


def test_specialize_is_idempotent():
    module = parse_module(VARIANTS)
    once = specialize(module, TARGETS["amdgcn"])
    twice = specialize(once.module, TARGETS["amdgcn"])
    assert render_module(once.module) == render_module(twice.module)


def test_specialize_drops_losing_variants():
    module = parse_module(VARIANTS)
    spec = specialize(module, TARGETS["amdgcn"])
    text = render_module(spec.module)
    assert "return 3;" not in text
    assert "return 2;" in text
