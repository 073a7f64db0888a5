"""Desk-scale offloading compiler and virtual device runtime.

The pipeline: parse_module builds the AST, lower_atomics rewrites atomic
constructs into single intrinsics, specialize resolves declare variants
for one target, emit_device_ir and link_runtime produce a device image,
emit_host_program produces the runnable host half, and bundle packs both
into one container. VirtualGPU executes vgpu images; run_bundle ties the
host and device halves together the way the command line driver does.
"""

from __future__ import annotations

from .bundler import Bundle, BundleError, bundle, host_payload, unbundle
from .codegen import (
    compile_device_image,
    emit_device_ir,
    emit_host_program,
    link_runtime,
    runtime_ir,
)
from .diagnostics import CompileError, Diagnostic
from .host import HostProgram, RunOptions, run_bundle, run_source, tgt_target
from .ir import DiffReport, IRModule, diff_ir, normalize_ir, parse_ir
from .lowering import Placement, lower_atomic, lower_atomics, place_global, specialize
from .parser import parse_module
from .selectors import DEVICE_ARCHS, TARGETS, selector_matches, selector_score
from .vgpu import ExecResult, GridConfig, VirtualGPU

__version__ = "0.1.0"

__all__ = [
    "Bundle",
    "BundleError",
    "CompileError",
    "DEVICE_ARCHS",
    "Diagnostic",
    "DiffReport",
    "ExecResult",
    "GridConfig",
    "HostProgram",
    "IRModule",
    "Placement",
    "RunOptions",
    "TARGETS",
    "VirtualGPU",
    "bundle",
    "compile_device_image",
    "diff_ir",
    "emit_device_ir",
    "emit_host_program",
    "host_payload",
    "link_runtime",
    "lower_atomic",
    "lower_atomics",
    "normalize_ir",
    "parse_ir",
    "parse_module",
    "place_global",
    "run_bundle",
    "run_source",
    "runtime_ir",
    "selector_matches",
    "selector_score",
    "specialize",
    "tgt_target",
    "unbundle",
    "__version__",
]
