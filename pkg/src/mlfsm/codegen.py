"""Generate Solidity source bundles from validated specs.

One contract per package, one per clause (emitted in topological order), and
one orchestrator aggregating clause completion. Generation is a pure function
of (spec, packages): byte-identical output across runs. Guards become
view-only require calls and the state write is the last effect of every
trigger function, so checks-effects ordering holds structurally.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from . import depgraph, validator
from .errors import MlfsmError
from .exprlang import TYPE_BOOL, Value, translate_expr
from .model import AutomatonCompleted, ClauseAutomaton, ContractSpec, PackageCall, parse_condition_token
from .packages import PackageFunction, PackageLibrary, PackageSet, StructDef

PRAGMA = "pragma solidity ^0.8.0;"
SPDX = "// SPDX-License-Identifier: MIT"

_SOLIDITY_IDENT_RE = re.compile(r"^[A-Za-z_$][A-Za-z0-9_$]*$")
_SIZED_TYPE_RE = re.compile(r"^(u?int|bytes)\d*$")

_SOLIDITY_KEYWORDS = frozenset("""
abstract address after alias anonymous apply as assembly auto bool break byte
bytes calldata case catch constant constructor continue contract copyof days
default define delete do else emit enum error event external fallback false
final fixed for function gwei hours if immutable implements import in indexed
int interface internal is let library macro mapping match memory modifier
mutable new null of override payable pragma private promise public pure
receive reference relocatable return returns revert sealed seconds sizeof
static storage string struct super supports switch this throw true try type
typedef typeof ufixed unchecked unicode using var view virtual weeks wei while
years msg tx block abi
delegatecall selfdestruct call send transfer
""".split())


class GenerationError(MlfsmError):
    """Generation refused; carries any residual validation diagnostics."""

    def __init__(self, message: str, diagnostics=()):
        super().__init__(message)
        self.diagnostics = list(diagnostics)


@dataclass(frozen=True)
class GeneratedUnit:
    kind: str  # "package" | "clause" | "orchestrator"
    id: str
    file_name: str
    source: str
    dependencies: tuple[str, ...] = ()  # unit ids deployed first; also the constructor argument order


@dataclass(frozen=True)
class GeneratedBundle:
    units: tuple[GeneratedUnit, ...]

    def unit(self, unit_id: str) -> GeneratedUnit:
        for u in self.units:
            if u.id == unit_id:
                return u
        raise KeyError(unit_id)

    def manifest_obj(self) -> dict:
        return {
            "order": [u.id for u in self.units],
            "units": {
                u.id: {"file": u.file_name, "constructor_args": list(u.dependencies)} for u in self.units
            },
        }


def _solidity_type(type_name: str) -> str:
    return "bool" if type_name == TYPE_BOOL else "int256"


def _solidity_literal(value: Value) -> str:
    if value.type == TYPE_BOOL:
        return "true" if value.raw else "false"
    return str(value.raw)


def _check_identifier(name: str, context: str) -> str:
    if not _SOLIDITY_IDENT_RE.match(name):
        raise GenerationError(f"{context} {name!r} is not a valid target identifier")
    if name in _SOLIDITY_KEYWORDS or _SIZED_TYPE_RE.match(name):
        raise GenerationError(f"{context} {name!r} collides with a reserved word")
    return name


def _check_members(names: list[str], contract: str) -> None:
    seen: set[str] = set()
    for name in names:
        if name in seen:
            raise GenerationError(f"contract {contract}: member name {name!r} is used twice")
        seen.add(name)


# ---------------------------------------------------------------------------
# Unit emitters
# ---------------------------------------------------------------------------


def _emit_package(library: PackageLibrary) -> GeneratedUnit:
    contract = f"Package_{library.id}"
    members = ["owner"]
    lines = [SPDX, PRAGMA, "", f"contract {contract} {{", "address public owner;", ""]

    for struct in library.structures:
        lines.extend(_emit_struct(struct, contract))
        lines.append("")
        members.append(struct.name)

    for variable in library.variables:
        _check_identifier(variable.name, f"package {library.id}: variable")
        members.append(variable.name)
        lines.append(
            f"{_solidity_type(variable.type)} public {variable.name} = {_solidity_literal(variable.value)};"
        )
    if library.variables:
        lines.append("")

    lines.extend(["constructor() {", "owner = msg.sender;", "}", ""])

    for variable in library.variables:
        setter = f"set_{variable.name}"
        _check_identifier(setter, f"package {library.id}: setter")
        members.append(setter)
        lines.extend([
            f"function {setter}({_solidity_type(variable.type)} value) external {{",
            'require(msg.sender == owner, "owner only");',
            f"{variable.name} = value;",
            "}",
            "",
        ])

    for function in library.functions:
        _check_identifier(function.name, f"package {library.id}: function")
        members.append(function.name)
        lines.extend(_emit_view_function(function))
        lines.append("")

    lines.append("}")
    _check_members(members, contract)
    return GeneratedUnit(
        kind="package", id=library.id, file_name=f"{contract}.sol",
        source=format_source("\n".join(lines)),
    )


def _emit_struct(struct: StructDef, context: str) -> list[str]:
    _check_identifier(struct.name, f"{context}: structure")
    lines = [f"struct {struct.name} {{"]
    for member in struct.fields:
        _check_identifier(member.name, f"structure {struct.name}: field")
        lines.append(f"{_solidity_type(member.type)} {member.name};")
    lines.append("}")
    return lines


def _emit_view_function(function: PackageFunction) -> list[str]:
    params = ", ".join(
        f"{_solidity_type(p.type)} {_check_identifier(p.name, f'function {function.name}: parameter')}"
        for p in function.params
    )
    return [
        f"function {function.name}({params}) external view returns ({_solidity_type(function.returns)}) {{",
        f"return {translate_expr(function.body)};",
        "}",
    ]


def _emit_clause(clause: ClauseAutomaton, graph: depgraph.DependencyGraph, package_refs: tuple[str, ...]) -> GeneratedUnit:
    contract = f"Clause_{clause.id}"
    for state in clause.states:
        _check_identifier(state, f"clause {clause.id}: state")
    dep_clauses = graph.dependencies_of(clause.id)

    members = ["State", "currentState", "isCompleted", "TransitionFired", "ClauseCompleted"]
    members += [f"pkg_{p}" for p in package_refs] + [f"dep_{d}" for d in dep_clauses]

    lines = [SPDX, PRAGMA, ""]
    for pkg in package_refs:
        lines.append(f'import "./Package_{pkg}.sol";')
    for dep in dep_clauses:
        lines.append(f'import "./Clause_{dep}.sol";')
    if package_refs or dep_clauses:
        lines.append("")

    lines.append(f"contract {contract} {{")
    lines.append(f"enum State {{ {', '.join(clause.states)} }}")
    lines.append("")
    lines.append("State public currentState;")
    lines.append("")
    for pkg in package_refs:
        lines.append(f"Package_{pkg} private immutable pkg_{pkg};")
    for dep in dep_clauses:
        lines.append(f"Clause_{dep} private immutable dep_{dep};")
    if package_refs or dep_clauses:
        lines.append("")

    lines.append("event TransitionFired(string clauseId, string trigger, string sourceState, string destinationState);")
    lines.append("event ClauseCompleted(string clauseId);")
    lines.append("")

    ctor_params = [f"Package_{p} {p}Addr" for p in package_refs] + [f"Clause_{d} {d}Addr" for d in dep_clauses]
    lines.append(f"constructor({', '.join(ctor_params)}) {{")
    for pkg in package_refs:
        lines.append(f"pkg_{pkg} = {pkg}Addr;")
    for dep in dep_clauses:
        lines.append(f"dep_{dep} = {dep}Addr;")
    lines.append(f"currentState = State.{clause.initial};")
    lines.append("}")
    lines.append("")

    for trigger in clause.triggers():
        _check_identifier(trigger, f"clause {clause.id}: trigger")
        members.append(trigger)
        lines.extend(_emit_trigger_function(clause, trigger))
        lines.append("")

    finals = clause.ordered_finals()
    membership = " || ".join(f"currentState == State.{s}" for s in finals)
    lines.extend(["function isCompleted() external view returns (bool) {", f"return {membership};", "}"])
    lines.append("}")

    _check_members(members, contract)
    dependencies = package_refs + dep_clauses
    return GeneratedUnit(
        kind="clause", id=clause.id, file_name=f"{contract}.sol",
        source=format_source("\n".join(lines)), dependencies=dependencies,
    )


def _condition_check(clause: ClauseAutomaton, token: str) -> str:
    ref = parse_condition_token(token)
    if isinstance(ref, AutomatonCompleted):
        call = f"dep_{ref.automaton}.isCompleted()"
    else:
        call = f"pkg_{ref.package}.{ref.function}()"
    return f'require({call}, "condition failed: {token}");'


def _emit_trigger_function(clause: ClauseAutomaton, trigger: str) -> list[str]:
    lines = [f"function {trigger}() external {{"]
    for transition in clause.transitions:
        if transition.trigger != trigger:
            continue
        lines.append(f"if (currentState == State.{transition.source}) {{")
        for token in transition.conditions:
            lines.append(_condition_check(clause, token))
        lines.append(f"currentState = State.{transition.destination};")
        lines.append(
            f'emit TransitionFired("{clause.id}", "{trigger}", '
            f'"{transition.source}", "{transition.destination}");'
        )
        if transition.destination in clause.finals:
            lines.append(f'emit ClauseCompleted("{clause.id}");')
        lines.append("return;")
        lines.append("}")
    lines.append(f'revert("no transition for trigger {trigger} from current state");')
    lines.append("}")
    return lines


def _emit_orchestrator(spec: ContractSpec) -> GeneratedUnit:
    lines = [SPDX, PRAGMA, ""]
    for clause in spec.clauses:
        lines.append(f'import "./Clause_{clause.id}.sol";')
    lines.append("")
    lines.append("contract Orchestrator {")
    for clause in spec.clauses:
        lines.append(f"Clause_{clause.id} private immutable clause_{clause.id};")
    lines.append("")
    params = ", ".join(f"Clause_{c.id} {c.id}Addr" for c in spec.clauses)
    lines.append(f"constructor({params}) {{")
    for clause in spec.clauses:
        lines.append(f"clause_{clause.id} = {clause.id}Addr;")
    lines.append("}")
    lines.append("")
    conjunction = " && ".join(f"clause_{c.id}.isCompleted()" for c in spec.clauses)
    lines.extend(["function isCompleted() external view returns (bool) {", f"return {conjunction};", "}"])
    lines.append("}")
    return GeneratedUnit(
        kind="orchestrator", id="orchestrator", file_name="Orchestrator.sol",
        source=format_source("\n".join(lines)), dependencies=spec.clause_ids(),
    )


# ---------------------------------------------------------------------------
# Bundle assembly
# ---------------------------------------------------------------------------


def _referenced_packages_of(clause: ClauseAutomaton) -> set[str]:
    # Tokens are known well-formed here: generation rejects specs with V4 errors.
    return {
        ref.package
        for transition in clause.transitions
        for token in transition.conditions
        if isinstance(ref := parse_condition_token(token), PackageCall)
    }


def _referenced_packages(spec: ContractSpec) -> set[str]:
    referenced: set[str] = set()
    for clause in spec.clauses:
        referenced |= _referenced_packages_of(clause)
    return referenced


def generate(spec: ContractSpec, packages: PackageSet) -> GeneratedBundle:
    """Emit the full bundle: packages (sorted by id), clauses (topological
    order), then the orchestrator."""
    diagnostics = validator.validate(spec, packages)
    if validator.has_errors(diagnostics):
        raise GenerationError("spec failed validation", diagnostics)

    clause_ids = set(spec.clause_ids())
    referenced = sorted(_referenced_packages(spec))
    for pkg in referenced:
        if pkg in clause_ids:
            raise GenerationError(f"package id {pkg!r} collides with an automaton id")
    if "orchestrator" in clause_ids or "orchestrator" in referenced:
        raise GenerationError("id 'orchestrator' is reserved for the aggregate unit")

    graph = depgraph.build_graph(spec)
    order = depgraph.topo_order(graph)

    units: list[GeneratedUnit] = [_emit_package(packages[pkg]) for pkg in referenced]
    by_id = {c.id: c for c in spec.clauses}
    units.extend(
        _emit_clause(by_id[cid], graph, tuple(sorted(_referenced_packages_of(by_id[cid])))) for cid in order
    )
    units.append(_emit_orchestrator(spec))
    return GeneratedBundle(units=tuple(units))


# ---------------------------------------------------------------------------
# Formatting and writing
# ---------------------------------------------------------------------------


def format_source(source: str) -> str:
    """Normalize indentation and blank lines; idempotent.

    Four spaces per brace depth, at most one consecutive blank line, no
    trailing whitespace, exactly one trailing newline. Line-based: assumes
    string literals contain no braces, which holds for generated output.
    """
    out: list[str] = []
    depth = 0
    previous_blank = False
    for raw in source.split("\n"):
        stripped = raw.strip()
        if not stripped:
            if out and not previous_blank:
                out.append("")
                previous_blank = True
            continue
        line_depth = depth - 1 if stripped.startswith("}") else depth
        out.append("    " * max(line_depth, 0) + stripped)
        previous_blank = False
        depth = max(depth + stripped.count("{") - stripped.count("}"), 0)
    while out and out[-1] == "":
        out.pop()
    return "\n".join(out) + "\n"


def write_bundle(bundle: GeneratedBundle, out_dir: str | Path) -> None:
    """Write one file per unit plus manifest.json; re-runs are byte-identical."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for unit in bundle.units:
        (out_dir / unit.file_name).write_text(unit.source, encoding="utf-8")
    manifest = json.dumps(bundle.manifest_obj(), indent=2) + "\n"
    (out_dir / "manifest.json").write_text(manifest, encoding="utf-8")
