"""IR text format: parse/render round trips, normalization, and diffing."""

from __future__ import annotations

import pytest

from forge.codegen import compile_device_image
from forge.ir import DiffReport, IRParseError, diff_ir, normalize_ir, parse_ir
from forge.lowering import lower_atomics
from forge.parser import parse_module

SOURCE = """\
u32 cell[1];

void kernel(u32 *cell) {
  #pragma omp target num_teams(2) thread_limit(2)
  {
    u32 old;
    old = __atomic_add(cell, omp_thread_id() + 1);
  }
}

void main() {
  kernel(cell);
}
"""


def image_text(arch: str = "vgpu") -> str:
    module = lower_atomics(parse_module(SOURCE))
    return compile_device_image(module, arch).render()


def test_parse_render_round_trip():
    text = image_text()
    module = parse_ir(text)
    assert module.render() == text
    assert parse_ir(module.render()).render() == text


def test_render_is_parseable_for_all_targets():
    for arch in ("vgpu", "amdgcn", "nvptx", "nvptx64"):
        text = image_text(arch)
        assert parse_ir(text).target == arch


def test_parse_rejects_garbage():
    with pytest.raises(IRParseError):
        parse_ir("this is not ir\n")


def test_normalize_is_idempotent():
    text = image_text()
    once = normalize_ir(text)
    assert normalize_ir(once) == once


def test_normalize_drops_mangled_variant_names():
    text = image_text("amdgcn")
    assert "ompvariant" in text
    assert "ompvariant" not in normalize_ir(text)


def test_diff_equal_modules():
    text = image_text()
    report = diff_ir(text, text)
    assert isinstance(report, DiffReport)
    assert report.semantically_equal
    assert report.differences == ()
    assert "semantically equal" in report.render()


def test_diff_is_symmetric():
    a = image_text("vgpu")
    b = a.replace("atomic.add", "atomic.max", 1)
    fwd = diff_ir(a, b)
    rev = diff_ir(b, a)
    assert fwd.semantically_equal == rev.semantically_equal is False
    assert len(fwd.differences) == len(rev.differences)
    for (loc_f, left_f, right_f), (loc_r, left_r, right_r) in zip(
            fwd.differences, rev.differences):
        assert left_f == right_r
        assert right_f == left_r


def test_diff_reports_location_and_excerpts():
    a = image_text("vgpu")
    b = a.replace("atomic.add", "atomic.max", 1)
    report = diff_ir(a, b)
    assert not report.semantically_equal
    assert report.differences
    location, left, right = report.differences[0]
    assert location.startswith("line ")
    assert "atomic.add" in left
    assert "atomic.max" in right
    rendered = report.render()
    assert "- " in rendered and "+ " in rendered


def test_diff_ignores_temp_numbering():
    a = "target vgpu\n\nfunc @f() -> u32 {\nbb0:\n  %0 = const.u32 1\n  %1 = add.u32 %0, %0\n  ret %1\n}\n"
    b = "target vgpu\n\nfunc @f() -> u32 {\nbb0:\n  %7 = const.u32 1\n  %9 = add.u32 %7, %7\n  ret %9\n}\n"
    assert diff_ir(a, b).semantically_equal


def test_diff_ignores_function_order():
    a = ("target vgpu\n\nfunc @a() -> void {\nbb0:\n  ret\n}\n\n"
         "func @b() -> void {\nbb0:\n  ret\n}\n")
    b = ("target vgpu\n\nfunc @b() -> void {\nbb0:\n  ret\n}\n\n"
         "func @a() -> void {\nbb0:\n  ret\n}\n")
    assert diff_ir(a, b).semantically_equal


def test_diff_is_transitive_through_renamings():
    a = "target vgpu\n\nfunc @f() -> u32 {\nbb0:\n  %0 = const.u32 1\n  ret %0\n}\n"
    b = a.replace("%0", "%5")
    c = a.replace("%0", "%9")
    assert diff_ir(a, b).semantically_equal
    assert diff_ir(b, c).semantically_equal
    assert diff_ir(a, c).semantically_equal


def test_diff_rejects_target_mismatch():
    a = image_text("vgpu")
    b = image_text("amdgcn")
    with pytest.raises(ValueError):
        diff_ir(a, b)


def test_kernel_entry_names_survive():
    text = image_text()
    assert "__omp_offload_0" in text
    module = parse_ir(text)
    assert any(f.name == "__omp_offload_0" for f in module.funcs)
