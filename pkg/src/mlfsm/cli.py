"""Command-line entry point.

Exit codes: 0 success; 1 validation errors, audit failures, or script
assertion failures; 2 usage or input-format errors; 3 internal errors.
Diagnostics go to stderr; reports and artifacts go to files or stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import audit as audit_mod
from . import codegen, depgraph, interpreter, validator
from .errors import MlfsmError
from .loader import LoadError, load_contract_spec, load_package_dir
from .packages import PackageSet

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_INTERNAL = 3

_COLORS = {"error": "\x1b[31m", "warning": "\x1b[33m", "warn": "\x1b[33m", "info": "\x1b[36m", "fail": "\x1b[31m"}
_RESET = "\x1b[0m"


def _use_color() -> bool:
    mode = os.environ.get("MLFSM_COLOR", "auto")
    if mode == "always":
        return True
    if mode == "never":
        return False
    return sys.stderr.isatty()


def _print_diagnostic(severity: str, text: str) -> None:
    if _use_color():
        color = _COLORS.get(severity, "")
        print(f"{color}{text}{_RESET}", file=sys.stderr)
    else:
        print(text, file=sys.stderr)


def _report_diagnostics(diagnostics, as_json: bool) -> None:
    if as_json:
        print(json.dumps([d.to_json_obj() for d in diagnostics], indent=2))
    else:
        for d in diagnostics:
            _print_diagnostic(d.severity, d.render())


def _report_findings(findings, as_json: bool) -> None:
    if as_json:
        print(json.dumps([f.to_json_obj() for f in findings], indent=2))
    else:
        for f in findings:
            _print_diagnostic(f.severity, f.render())


def _load_inputs(spec_path: str, packages_dir: str | None):
    spec_file = Path(spec_path)
    if not spec_file.is_file():
        raise FileNotFoundError(f"spec file {spec_path} does not exist")
    spec = load_contract_spec(spec_file.read_text(encoding="utf-8"), spec_file)
    packages: PackageSet = load_package_dir(packages_dir) if packages_dir is not None else {}
    return spec, packages


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _cmd_validate(args) -> int:
    spec, packages = _load_inputs(args.spec, args.packages)
    diagnostics = validator.validate(spec, packages)
    _report_diagnostics(diagnostics, args.json)
    if validator.has_errors(diagnostics):
        return EXIT_FAILED
    if args.strict and diagnostics:
        return EXIT_FAILED
    return EXIT_OK


def _cmd_graph(args) -> int:
    spec, _ = _load_inputs(args.spec, None)
    graph = depgraph.build_graph(spec)
    dot = depgraph.to_dot(graph, spec, focus=args.focus)
    if args.dot is not None:
        Path(args.dot).write_text(dot, encoding="utf-8")
    else:
        sys.stdout.write(dot)
    return EXIT_OK


def _cmd_gen(args) -> int:
    spec, packages = _load_inputs(args.spec, args.packages)
    diagnostics = validator.validate(spec, packages)
    _report_diagnostics(diagnostics, as_json=False)
    if validator.has_errors(diagnostics):
        return EXIT_FAILED
    if args.strict and diagnostics:
        return EXIT_FAILED
    bundle = codegen.generate(spec, packages)
    findings = audit_mod.audit_generated(bundle)
    failures = [f for f in findings if f.severity == "fail"]
    if failures:
        _report_findings(failures, as_json=False)
        return EXIT_FAILED

    out_dir = Path(args.out)
    staging = out_dir.parent / f".{out_dir.name}.staging.{os.getpid()}"
    codegen.write_bundle(bundle, staging)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for path in sorted(staging.iterdir()):
            os.replace(path, out_dir / path.name)
    finally:
        if staging.is_dir() and not any(staging.iterdir()):
            staging.rmdir()
    for unit in bundle.units:
        print(f"wrote {out_dir / unit.file_name}")
    print(f"wrote {out_dir / 'manifest.json'}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    spec, packages = _load_inputs(args.spec, args.packages)
    script_file = Path(args.script)
    if not script_file.is_file():
        raise FileNotFoundError(f"script file {args.script} does not exist")
    script = interpreter.parse_script(script_file.read_text(encoding="utf-8"))
    try:
        env = interpreter.new_env(spec, packages)
    except interpreter.SpecNotValidated as exc:
        _report_diagnostics(exc.diagnostics, as_json=False)
        return EXIT_FAILED
    try:
        trace = interpreter.run_script(env, script)
    except interpreter.ScriptAssertionFailed as exc:
        _print_diagnostic("error", f"error: {exc}")
        if args.trace is not None:
            Path(args.trace).write_text(env.trace.to_jsonl(), encoding="utf-8")
        return EXIT_FAILED
    if args.trace is not None:
        Path(args.trace).write_text(trace.to_jsonl(), encoding="utf-8")
    print(f"script ok: {len(script)} steps, {len(trace)} events", file=sys.stderr)
    return EXIT_OK


def _cmd_audit(args) -> int:
    target = Path(args.target)
    if target.is_dir():
        bundle = audit_mod.load_source_dir(target)
        if not bundle.units:
            _print_diagnostic("info", "info: no units found")
            return EXIT_OK
        findings = audit_mod.audit_generated(bundle)
    else:
        spec, packages = _load_inputs(args.target, args.packages)
        findings = audit_mod.audit_spec(spec, packages)
    _report_findings(findings, args.json)
    return EXIT_FAILED if audit_mod.has_failures(findings) else EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing and dispatch
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mlfsm",
        description="Compile multi-level FSM contract specs into audited Solidity bundles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a contract spec against its packages")
    p.add_argument("spec")
    p.add_argument("--packages", help="directory of *.pkg.json files")
    p.add_argument("--json", action="store_true", help="print diagnostics as JSON on stdout")
    p.add_argument("--strict", action="store_true", help="treat warnings as failures")
    p.set_defaults(handler=_cmd_validate)

    p = sub.add_parser("graph", help="emit the clause dependency graph as DOT")
    p.add_argument("spec")
    p.add_argument("--dot", help="output file (default: stdout)")
    p.add_argument("--focus", help="expand this clause into a state-level cluster")
    p.set_defaults(handler=_cmd_graph)

    p = sub.add_parser("gen", help="generate, format, audit, and write the bundle")
    p.add_argument("spec")
    p.add_argument("--packages", help="directory of *.pkg.json files")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--strict", action="store_true", help="treat warnings as failures")
    p.set_defaults(handler=_cmd_gen)

    p = sub.add_parser("simulate", help="run a script against the interpreter")
    p.add_argument("spec")
    p.add_argument("--packages", help="directory of *.pkg.json files")
    p.add_argument("--script", required=True, help="JSON script file")
    p.add_argument("--trace", help="write the trace as JSON lines to this file")
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("audit", help="audit a generated bundle directory or a spec file")
    p.add_argument("target", help="bundle directory or contract spec file")
    p.add_argument("--packages", help="directory of *.pkg.json files (spec targets)")
    p.add_argument("--json", action="store_true", help="print findings as JSON on stdout")
    p.set_defaults(handler=_cmd_audit)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.handler(args)
    except (
        LoadError,
        interpreter.ScriptError,
        interpreter.UnknownClause,
        interpreter.UnknownTrigger,
        interpreter.UnknownVariable,
        interpreter.TypeMismatch,
        depgraph.UnknownFocus,
        FileNotFoundError,
        OSError,
    ) as exc:
        _print_diagnostic("error", f"error: {exc}")
        return EXIT_USAGE
    except codegen.GenerationError as exc:
        _print_diagnostic("error", f"error: {exc}")
        for diagnostic in exc.diagnostics:
            _print_diagnostic(diagnostic.severity, diagnostic.render())
        return EXIT_FAILED
    except MlfsmError as exc:
        _print_diagnostic("error", f"error: {exc}")
        return EXIT_FAILED
    except Exception as exc:  # pragma: no cover - defensive
        _print_diagnostic("error", f"internal error: {exc}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
