"""Command line driver: compile sources, run bundles, compare IR text.

Exit codes are a stable contract: 0 success, 1 diagnostics, 2 device
trap, 3 diff mismatch.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .bundler import BUNDLE_SUFFIX, Bundle, BundleError, bundle, host_payload
from .codegen import compile_device_image, runtime_ir
from .diagnostics import CompileError
from .host import RunOptions, emit_host_program, run_bundle
from .ir import IRParseError, diff_ir
from .lowering import lower_atomics, mangle_variant
from .parser import parse_module
from .printer import dump_ast
from .selectors import DEVICE_ARCHS, TARGETS, resolve_variant


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage failures use the diagnostic exit code."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _fail(message: str) -> int:
    sys.stderr.write(f"error: {message}\n")
    return 1


def _read_text(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _read_bytes(path: str) -> bytes:
    return Path(path).read_bytes()


def _parse_targets(text: str) -> list[str]:
    names = [t.strip() for t in text.split(",") if t.strip()]
    if not names:
        raise ValueError("no targets given")
    for name in names:
        if name not in DEVICE_ARCHS:
            raise ValueError(
                f"unknown target '{name}' (choose from {', '.join(DEVICE_ARCHS)})")
    if len(set(names)) != len(names):
        raise ValueError("duplicate target")
    return names


def _parse_grid(text: str) -> tuple[int, int]:
    teams, sep, threads = text.partition("x")
    if not sep or not teams.isdigit() or not threads.isdigit():
        raise ValueError(f"grid must look like TEAMSxTHREADS, got '{text}'")
    return int(teams), int(threads)


# ---- compile


def cmd_compile(args: argparse.Namespace) -> int:
    if args.dump_runtime is not None:
        if args.dump_runtime not in DEVICE_ARCHS:
            return _fail(f"unknown target '{args.dump_runtime}'")
        sys.stdout.write(runtime_ir(args.dump_runtime).render())
        return 0
    if args.input is None:
        return _fail("an input file is required")
    try:
        targets = _parse_targets(args.targets)
    except ValueError as exc:
        return _fail(str(exc))
    in_path = Path(args.input)
    try:
        source = _read_text(args.input)
    except OSError as exc:
        return _fail(str(exc))

    try:
        module = parse_module(source, filename=str(in_path))
        lower_atomics(module)
        emit_host_program(module)
        images = [(arch, compile_device_image(module, arch).render().encode("utf-8"))
                  for arch in targets]
    except CompileError as exc:
        sys.stderr.write(f"{exc}\n")
        return 1

    if args.emit_ir is not None:
        ir_dir = Path(args.emit_ir)
        ir_dir.mkdir(parents=True, exist_ok=True)
        for arch, payload in images:
            (ir_dir / f"{in_path.stem}.{arch}.ir").write_bytes(payload)

    data = bundle(host_payload(source, filename=str(in_path)), images)
    out_path = Path(args.output) if args.output else in_path.with_suffix(BUNDLE_SUFFIX)
    out_path.write_bytes(data)
    return 0


# ---- run


def cmd_run(args: argparse.Namespace) -> int:
    if args.device not in DEVICE_ARCHS:
        return _fail(f"unknown device '{args.device}'")
    try:
        data = _read_bytes(args.bundle)
    except OSError as exc:
        return _fail(str(exc))
    grid = None
    if args.grid is not None:
        try:
            grid = _parse_grid(args.grid)
        except ValueError as exc:
            return _fail(str(exc))
    opts = RunOptions(
        device=args.device,
        grid=grid,
        force_fail=args.force_offload_fail,
        sched_seed=args.sched_seed,
        check_uninit=args.check_uninit,
        collect_trace=args.trace is not None,
    )
    result = run_bundle(data, opts)
    sys.stdout.write(result.stdout)
    sys.stderr.write(result.stderr)
    if args.trace is not None:
        text = "\n".join(result.device_traces)
        Path(args.trace).write_text(text + "\n" if text else "", encoding="utf-8")
    return result.exit_status


# ---- diff-ir


def cmd_diff_ir(args: argparse.Namespace) -> int:
    try:
        left = _read_text(args.left)
        right = _read_text(args.right)
    except OSError as exc:
        return _fail(str(exc))
    try:
        report = diff_ir(left, right)
    except (IRParseError, ValueError) as exc:
        return _fail(str(exc))
    sys.stdout.write(report.render())
    return 0 if report.semantically_equal else 3


# ---- inspect


def cmd_inspect(args: argparse.Namespace) -> int:
    try:
        data = _read_bytes(args.bundle)
    except OSError as exc:
        return _fail(str(exc))
    try:
        parsed = Bundle.from_bytes(data)
    except BundleError as exc:
        return _fail(str(exc))
    for name, payload in parsed.entries:
        sys.stdout.write(f"{name} {len(payload)}\n")
    return 0


# ---- dump-ast


def cmd_dump_ast(args: argparse.Namespace) -> int:
    try:
        source = _read_text(args.input)
    except OSError as exc:
        return _fail(str(exc))
    try:
        module = parse_module(source, filename=args.input)
    except CompileError as exc:
        sys.stderr.write(f"{exc}\n")
        return 1
    sys.stdout.write(dump_ast(module))
    if module.info.variants:
        sys.stdout.write("variant resolution:\n")
        for arch in DEVICE_ARCHS:
            sys.stdout.write(f"  {arch}:\n")
            for base_name in sorted(module.info.variants):
                candidates = module.info.variants[base_name]
                try:
                    chosen = resolve_variant(base_name, candidates, TARGETS[arch])
                except CompileError as exc:
                    sys.stdout.write(f"    {base_name} -> error: {exc.diagnostics[0].message}\n")
                    continue
                if chosen is None:
                    sys.stdout.write(f"    {base_name} -> {base_name} (base)\n")
                else:
                    mangled = mangle_variant(base_name, chosen.variant_of[1])
                    sys.stdout.write(f"    {base_name} -> {mangled}\n")
    return 0


# ---- report


def cmd_report(args: argparse.Namespace) -> int:
    try:
        data = _read_bytes(args.bundle)
    except OSError as exc:
        return _fail(str(exc))
    grid = None
    if args.grid is not None:
        try:
            grid = _parse_grid(args.grid)
        except ValueError as exc:
            return _fail(str(exc))
    from .report import write_report

    try:
        paths = write_report(data, args.out_dir, seeds=args.seeds, grid=grid,
                             device=args.device)
    except (BundleError, CompileError, IRParseError) as exc:
        return _fail(str(exc))
    for path in paths:
        sys.stdout.write(f"{path}\n")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _Parser(prog="forge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="compile a source file into a fat bundle")
    p.add_argument("input", nargs="?", help="source file")
    p.add_argument("--targets", default="vgpu",
                   help="comma-separated device targets (default: vgpu)")
    p.add_argument("-o", "--output", help="bundle path (default: input with .o)")
    p.add_argument("--emit-ir", metavar="DIR",
                   help="also write one .ir text file per target")
    p.add_argument("--dump-runtime", metavar="ARCH",
                   help="print the device runtime IR for ARCH and exit")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("run", help="run a compiled bundle")
    p.add_argument("bundle", help="bundle file")
    p.add_argument("--device", default=os.environ.get("FORGE_DEFAULT_DEVICE", "vgpu"),
                   help="device architecture (default: vgpu, or FORGE_DEFAULT_DEVICE)")
    p.add_argument("--sched-seed", type=int, default=0,
                   help="device scheduler seed (default: 0)")
    p.add_argument("--force-offload-fail", action="store_true",
                   help="pretend the device image is unusable, forcing host fallback")
    p.add_argument("--check-uninit", action="store_true",
                   help="trap on reads of uninitialized device memory")
    p.add_argument("--grid", metavar="TxN",
                   help="teams x threads for regions without clauses")
    p.add_argument("--trace", metavar="FILE",
                   help="write the device event trace ('seq team thread kind detail')")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("diff-ir", help="compare two IR text files modulo naming")
    p.add_argument("left")
    p.add_argument("right")
    p.set_defaults(func=cmd_diff_ir)

    p = sub.add_parser("inspect", help="list bundle entries with payload sizes")
    p.add_argument("bundle")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("dump-ast", help="print the AST and variant resolution")
    p.add_argument("input")
    p.set_defaults(func=cmd_dump_ast)

    p = sub.add_parser("report", help="run a bundle over seeds; write CSV and figures")
    p.add_argument("bundle")
    p.add_argument("--out-dir", default="report",
                   help="directory for the CSV and PNG files (default: report)")
    p.add_argument("--seeds", type=int, default=8,
                   help="number of scheduler seeds to sample (default: 8)")
    p.add_argument("--device", default=os.environ.get("FORGE_DEFAULT_DEVICE", "vgpu"),
                   help="device architecture (default: vgpu, or FORGE_DEFAULT_DEVICE)")
    p.add_argument("--grid", metavar="TxN",
                   help="teams x threads for regions without clauses")
    p.set_defaults(func=cmd_report)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
