"""Security lints over specs and generated source bundles.

Spec-level rules (S1-S3) inspect the clause structure and guard functions;
code-level rules (A1-A7) are purely textual pattern checks over each source
unit, mapped to the usual smart-contract vulnerability classes. No execution,
no symbolic analysis: A7 in particular uses a lexical checks-effects rule
(a state write after a statement-level member call in the same function).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from . import depgraph
from .exprlang import referenced_vars
from .model import ContractSpec, PackageCall, parse_condition_token
from .packages import PackageSet
from .validator import reachable_states
from .codegen import GeneratedBundle, GeneratedUnit

SEVERITY: dict[str, str] = {
    "S1": "warn",
    "S2": "warn",
    "S3": "info",
    "A1": "fail",
    "A2": "fail",
    "A3": "fail",
    "A4": "fail",
    "A5": "fail",
    "A6": "fail",
    "A7": "fail",
}


@dataclass(frozen=True)
class AuditFinding:
    rule: str
    subject: str
    detail: str
    line: int | None = None

    @property
    def severity(self) -> str:
        return SEVERITY[self.rule]

    def to_json_obj(self) -> dict:
        return {
            "rule": self.rule,
            "severity": self.severity,
            "subject": self.subject,
            "detail": self.detail,
            "line": self.line,
        }

    def render(self) -> str:
        where = f"{self.subject}:{self.line}" if self.line is not None else self.subject
        return f"{self.severity} {self.rule} [{where}] {self.detail}"


def has_failures(findings: list[AuditFinding]) -> bool:
    return any(f.severity == "fail" for f in findings)


# ---------------------------------------------------------------------------
# Spec-level rules
# ---------------------------------------------------------------------------


def audit_spec(spec: ContractSpec, packages: PackageSet) -> list[AuditFinding]:
    findings: list[AuditFinding] = []
    graph = depgraph.build_graph(spec)
    for clause in spec.clauses:
        if not (reachable_states(clause) & clause.finals):
            findings.append(AuditFinding(
                "S1", clause.id, f"clause {clause.name!r} cannot reach any final state",
            ))
        seen: set[tuple[str, str]] = set()
        for transition in clause.transitions:
            for token in transition.conditions:
                ref = parse_condition_token(token)
                if not isinstance(ref, PackageCall) or (ref.package, ref.function) in seen:
                    continue
                seen.add((ref.package, ref.function))
                function = packages[ref.package].function(ref.function)
                if not referenced_vars(function.body):
                    findings.append(AuditFinding(
                        "S2", clause.id,
                        f"condition {ref.package}.{ref.function} reads no variable (constant guard)",
                    ))
        if not graph.dependencies_of(clause.id) and not graph.dependents_of(clause.id):
            findings.append(AuditFinding(
                "S3", clause.id, f"clause {clause.name!r} has no dependency relations (isolated)",
            ))
    return findings


# ---------------------------------------------------------------------------
# Code-level rules
# ---------------------------------------------------------------------------

_TOKEN_RULES: tuple[tuple[str, str, str], ...] = (
    ("A1", "tx.origin", "tx.origin used for authorization checks"),
    ("A2", "delegatecall", "delegatecall present"),
    ("A3", "selfdestruct", "selfdestruct present"),
    ("A4", "assembly", "inline assembly present"),
    ("A5", ".call(", "low-level call present"),
    ("A5", ".send(", "low-level send present"),
    ("A5", ".transfer(", "low-level transfer present"),
)

_PRAGMA_RE = re.compile(r"^\s*pragma\s+solidity\s+(?P<range>[^;]+);")
_PRAGMA_08_RE = re.compile(r"^\s*(\^|~|=|>=)?\s*0\.8(\.\d+)?\s*(<\s*0\.9(\.\d+)?\s*)?$")

_STATE_VAR_RE = re.compile(
    r"^\s*[A-Za-z_$][\w$]*\s+(?:(?:public|private|internal|constant|immutable)\s+)*"
    r"(?P<name>[A-Za-z_$][\w$]*)\s*(?:=[^;]*)?;\s*$"
)
_FUNCTION_RE = re.compile(r"^\s*(?:function\s+[A-Za-z_$][\w$]*|constructor)\s*\(")
_MEMBER_CALL_STMT_RE = re.compile(
    r"^\s*(?:[A-Za-z_$][\w$]*\s*=\s*)?(?P<receiver>[A-Za-z_$][\w$]*)\.[A-Za-z_$][\w$]*\("
)
_SAFE_RECEIVERS = frozenset({"msg", "abi", "block", "tx", "this", "super"})
_NON_CALL_STATEMENTS = ("require(", "emit ", "assert(", "revert(", "return ", "if ", "if(", "while ", "while(")


def audit_generated(bundle: GeneratedBundle) -> list[AuditFinding]:
    findings: list[AuditFinding] = []
    for unit in bundle.units:
        findings.extend(_audit_unit(unit))
    return findings


def _audit_unit(unit: GeneratedUnit) -> list[AuditFinding]:
    findings: list[AuditFinding] = []
    lines = unit.source.split("\n")
    for rule, token, detail in _TOKEN_RULES:
        for number, line in enumerate(lines, start=1):
            if token in line:
                findings.append(AuditFinding(rule, unit.id, f"{detail}: {line.strip()}", number))
    findings.extend(_check_pragma(unit, lines))
    findings.extend(_check_write_after_call(unit, lines))
    return findings


def _check_pragma(unit: GeneratedUnit, lines: list[str]) -> list[AuditFinding]:
    for number, line in enumerate(lines, start=1):
        m = _PRAGMA_RE.match(line)
        if m is None:
            continue
        if _PRAGMA_08_RE.match(m.group("range").strip()):
            return []
        return [AuditFinding("A6", unit.id, f"pragma is not pinned to a 0.8-series range: {line.strip()}", number)]
    return [AuditFinding("A6", unit.id, "no solidity pragma found", None)]


def _check_write_after_call(unit: GeneratedUnit, lines: list[str]) -> list[AuditFinding]:
    state_vars = _collect_state_vars(lines)
    if not state_vars:
        return []
    write_res = [
        (name, re.compile(rf"^\s*{re.escape(name)}\s*(?:[+\-*/%|&^]?=)(?!=)")) for name in state_vars
    ]
    findings: list[AuditFinding] = []
    depth = 0
    in_function = False
    function_entry_depth = 0
    call_line: int | None = None
    for number, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not in_function and _FUNCTION_RE.match(line):
            in_function = True
            function_entry_depth = depth
            call_line = None
        if in_function and depth > function_entry_depth:
            if _is_external_call_statement(stripped):
                call_line = number
            elif call_line is not None:
                for name, write_re in write_res:
                    if write_re.match(line):
                        findings.append(AuditFinding(
                            "A7", unit.id,
                            f"state variable {name!r} written after external call on line {call_line}",
                            number,
                        ))
                        break
        depth += line.count("{") - line.count("}")
        if in_function and depth <= function_entry_depth and "}" in line:
            in_function = False
    return findings


def _collect_state_vars(lines: list[str]) -> list[str]:
    # Depth 1 is the contract body; declarations inside functions, structs,
    # and enums sit at depth >= 2 when their line starts.
    names: list[str] = []
    depth = 0
    for line in lines:
        if depth == 1:
            m = _STATE_VAR_RE.match(line)
            if m and not re.match(r"^\s*(event|error|using|function|constructor|modifier)\b", line):
                names.append(m.group("name"))
        depth += line.count("{") - line.count("}")
    return names


def _is_external_call_statement(stripped: str) -> bool:
    if any(stripped.startswith(prefix) for prefix in _NON_CALL_STATEMENTS):
        return False
    m = _MEMBER_CALL_STMT_RE.match(stripped)
    return m is not None and m.group("receiver") not in _SAFE_RECEIVERS


# ---------------------------------------------------------------------------
# Directory targets
# ---------------------------------------------------------------------------


def load_source_dir(directory: str | Path) -> GeneratedBundle:
    """Wrap a directory of .sol files as a bundle for auditing."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"source directory {directory} does not exist")
    units = tuple(
        GeneratedUnit(kind="source", id=path.stem, file_name=path.name,
                      source=path.read_text(encoding="utf-8"))
        for path in sorted(directory.glob("*.sol"))
    )
    return GeneratedBundle(units=units)
