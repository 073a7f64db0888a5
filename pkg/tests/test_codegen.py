"""Device IR emission, runtime linking, and construct/builtin parity."""

from __future__ import annotations

import pytest

from forge.codegen import (
    KERNEL_PREFIX,
    MissingIntrinsic,
    compile_device_image,
    emit_device_ir,
    link_runtime,
    runtime_ir,
)
from forge.corpus import PARITY_KINDS, parity_pair
from forge.diagnostics import CompileError
from forge.ir import diff_ir
from forge.lowering import lower_atomics, specialize
from forge.parser import parse_module
from forge.selectors import TARGETS

SIMPLE = """\
u32 cell[1];

void kernel(u32 *cell) {
  #pragma omp target num_teams(1) thread_limit(2)
  {
    u32 old;
    old = __atomic_add(cell, 1);
  }
}

void main() {
  kernel(cell);
}
"""


def compiled(source: str, arch: str = "vgpu"):
    return compile_device_image(lower_atomics(parse_module(source)), arch)


def test_kernel_naming():
    image = compiled(SIMPLE)
    names = [f.name for f in image.funcs]
    assert f"{KERNEL_PREFIX}0" in names
    two = SIMPLE.replace("void main", "void other") + "\nvoid main() {\n}\n"
    regions = """\
u32 a[1];
u32 b[1];

void f(u32 *a) {
  #pragma omp target num_teams(1) thread_limit(1)
  {
    u32 v;
    v = __atomic_add(a, 1);
  }
  #pragma omp target num_teams(1) thread_limit(1)
  {
    u32 w;
    w = __atomic_add(a, 2);
  }
}

void main() {
  f(a);
}
"""
    image = compiled(regions)
    names = {f.name for f in image.funcs}
    assert f"{KERNEL_PREFIX}0" in names
    assert f"{KERNEL_PREFIX}1" in names


def test_image_carries_target():
    for arch in ("vgpu", "amdgcn", "nvptx", "nvptx64"):
        assert compiled(SIMPLE, arch).target == arch


@pytest.mark.parametrize("kind", PARITY_KINDS)
@pytest.mark.parametrize("arch", ("vgpu", "amdgcn", "nvptx64"))
def test_construct_and_builtin_compile_identically(kind, arch):
    construct_src, builtin_src = parity_pair(kind)
    a = compiled(construct_src, arch).render()
    b = compiled(builtin_src, arch).render()
    assert diff_ir(a, b).semantically_equal


def test_error_base_rejected_where_no_variant_applies():
    source = """\
u32 cell[1];

#pragma omp begin declare target
u32 bump(u32 *x, u32 bound) {
  error("no increment implementation");
  return 0;
}
#pragma omp end declare target

#pragma omp begin declare variant match(device={arch(amdgcn)})
u32 bump(u32 *x, u32 bound) {
  u32 old;
  old = __builtin_amdgcn_atomic_inc32(x, bound);
  return old;
}
#pragma omp end declare variant

void kernel(u32 *cell) {
  #pragma omp target num_teams(1) thread_limit(1)
  {
    u32 old;
    old = bump(cell, 5);
  }
}

void main() {
  kernel(cell);
}
"""
    compiled(source, "amdgcn")
    with pytest.raises(MissingIntrinsic) as excinfo:
        compiled(source, "nvptx")
    assert "no nvptx implementation" in str(excinfo.value)
    assert "no increment implementation" in str(excinfo.value)


def test_cross_arch_builtin_is_a_kind_alias():
    source = """\
u32 cell[1];

void kernel(u32 *cell) {
  #pragma omp target num_teams(1) thread_limit(1)
  {
    u32 old;
    old = __builtin_amdgcn_atomic_inc32(cell, 5);
  }
}

void main() {
  kernel(cell);
}
"""
    text = compiled(source, "nvptx").render()
    assert "__nvvm_atom_inc_gen_ui" in text


def test_variant_dispatched_inc_compiles_everywhere():
    source = """\
u32 cell[1];

void kernel(u32 *cell) {
  #pragma omp target num_teams(1) thread_limit(1)
  {
    u32 old;
    old = atomic_inc(cell, 5);
  }
}

void main() {
  kernel(cell);
}
"""
    for arch in ("vgpu", "amdgcn", "nvptx", "nvptx64"):
        image = compiled(source, arch)
        assert any("inc" in i.op
                   for f in image.funcs for b in f.blocks for i in b.instrs)


def test_runtime_symbol_collision_is_an_error():
    source = """\
#pragma omp begin declare target
u32 atomic_add(u32 *x, u32 e) {
  return 0;
}
#pragma omp end declare target

void kernel(u32 *x) {
  #pragma omp target num_teams(1) thread_limit(1)
  {
    u32 v;
    v = atomic_add(x, 1);
  }
}

u32 cell[1];

void main() {
  kernel(cell);
}
"""
    with pytest.raises(CompileError):
        compiled(source)


def test_linking_prunes_unreachable_runtime():
    image = compiled(SIMPLE)
    names = {f.name for f in image.funcs}
    assert not any("for_static_init" in n for n in names)


def test_linked_runtime_pulls_in_called_helpers():
    source = SIMPLE.replace("__atomic_add(cell, 1)", "atomic_add(cell, 1)")
    image = compiled(source)
    names = {f.name for f in image.funcs}
    assert any(n.startswith("atomic_add") for n in names)


def test_runtime_ir_per_arch():
    for arch in ("vgpu", "amdgcn", "nvptx", "nvptx64"):
        text = runtime_ir(arch).render()
        assert text.startswith(f"target {arch}\n")
        assert "__kmpc_alloc_shared" in text
    assert runtime_ir("vgpu").render() == runtime_ir("vgpu").render()


def test_emit_requires_lowered_constructs():
    source = """\
#pragma omp begin declare target
void f(u32 *x) {
  u32 v;
  #pragma omp atomic capture seq_cst
  {
    v = *x;
    *x += 1;
  }
}
#pragma omp end declare target

void main() {
}
"""
    module = parse_module(source)
    with pytest.raises(CompileError):
        emit_device_ir(specialize(module, TARGETS["vgpu"]))
    lower_atomics(module)
    emit_device_ir(specialize(module, TARGETS["vgpu"]))
