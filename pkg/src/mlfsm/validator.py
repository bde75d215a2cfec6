"""Referential, determinism, and reachability checks over loaded specs.

Every problem is reported as a Diagnostic; validation never raises and never
stops at the first finding. Rule codes and severities are a closed table:

    V1 error    duplicate or empty state names
    V2 error    transition endpoint is not a declared state
    V3 error    invalid trigger identifier
    V4 error    malformed condition token
    V5 error    completion guard references an unknown or the own automaton
    V6 error    package guard references an unknown package/function, a
                non-boolean function, or a function with parameters
    V7 error    two transitions share (source, trigger) in one automaton
    V8 warning  state unreachable from initial; no final state reachable
                (W_NO_COMPLETION); or a final state with outgoing transitions
    V9 error    clause dependency graph has a cycle
"""

from __future__ import annotations

from dataclasses import dataclass

from . import depgraph
from .exprlang import TYPE_BOOL
from .loader import SourceLocation
from .model import (
    IDENT_RE,
    AutomatonCompleted,
    ClauseAutomaton,
    ContractSpec,
    MalformedToken,
    PackageCall,
    parse_condition_token,
)
from .packages import PackageSet

SEVERITY: dict[str, str] = {
    "V1": "error",
    "V2": "error",
    "V3": "error",
    "V4": "error",
    "V5": "error",
    "V6": "error",
    "V7": "error",
    "V8": "warning",
    "V9": "error",
}


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    clause: str | None = None
    location: SourceLocation | None = None

    @property
    def severity(self) -> str:
        return SEVERITY[self.code]

    def to_json_obj(self) -> dict:
        return {
            "code": self.code,
            "severity": self.severity,
            "message": self.message,
            "clause": self.clause,
            "location": None
            if self.location is None
            else {"file": self.location.file, "json_pointer": self.location.json_pointer},
        }

    def render(self) -> str:
        parts = [f"{self.severity} {self.code}: {self.message}"]
        if self.clause is not None:
            parts.append(f"[clause {self.clause}]")
        if self.location is not None:
            parts.append(f"({self.location})")
        return " ".join(parts)


def has_errors(diagnostics: list[Diagnostic]) -> bool:
    return any(d.severity == "error" for d in diagnostics)


def reachable_states(clause: ClauseAutomaton) -> set[str]:
    """Forward closure from the initial state, treating every guard as
    potentially true (guard values depend on runtime package state)."""
    declared = set(clause.states)
    out: dict[str, list[str]] = {}
    for t in clause.transitions:
        if t.source in declared and t.destination in declared:
            out.setdefault(t.source, []).append(t.destination)
    reached = {clause.initial}
    frontier = [clause.initial]
    while frontier:
        state = frontier.pop()
        for nxt in out.get(state, ()):
            if nxt not in reached:
                reached.add(nxt)
                frontier.append(nxt)
    return reached


def validate(spec: ContractSpec, packages: PackageSet) -> list[Diagnostic]:
    """Run all rules and return the complete diagnostic list, ordered by
    clause declaration index, then rule code, then emission order."""
    collected: list[tuple[int, str, int, Diagnostic]] = []
    seq = 0

    def emit(clause_index: int, diagnostic: Diagnostic) -> None:
        nonlocal seq
        collected.append((clause_index, diagnostic.code, seq, diagnostic))
        seq += 1

    for index, clause in enumerate(spec.clauses):
        structurally_clean = _check_clause(spec, index, clause, packages, emit)
        if structurally_clean:
            _check_reachability(spec, index, clause, emit)

    for diagnostic in _check_cycles(spec):
        emit(len(spec.clauses), diagnostic)

    collected.sort(key=lambda item: (item[0], item[1], item[2]))
    return [item[3] for item in collected]


# ---------------------------------------------------------------------------
# Per-rule checks
# ---------------------------------------------------------------------------


def _loc(spec: ContractSpec, pointer: str) -> SourceLocation:
    return SourceLocation(spec.origin or "<spec>", pointer)


def _clause_ptr(clause: ClauseAutomaton) -> str:
    return "/" + clause.name.replace("~", "~0").replace("/", "~1")


def _check_clause(spec, index, clause, packages: PackageSet, emit) -> bool:
    """Run V1-V7 for one clause; returns True when V1/V2 are clean."""
    base = _clause_ptr(clause)
    clean = True

    seen_states: set[str] = set()
    for i, state in enumerate(clause.states):
        if not state:
            emit(index, Diagnostic("V1", "empty state name", clause.id, _loc(spec, f"{base}/states/{i}")))
            clean = False
        elif state in seen_states:
            emit(index, Diagnostic("V1", f"duplicate state name {state!r}", clause.id, _loc(spec, f"{base}/states/{i}")))
            clean = False
        seen_states.add(state)

    declared = set(clause.states)
    known_ids = set(spec.clause_ids())
    for j, transition in enumerate(clause.transitions):
        t_ptr = f"{base}/transitions/{j}"
        for endpoint, value in (("source", transition.source), ("destination", transition.destination)):
            if value not in declared:
                emit(index, Diagnostic(
                    "V2", f"transition {endpoint} {value!r} is not a declared state",
                    clause.id, _loc(spec, f"{t_ptr}/{endpoint}"),
                ))
                clean = False
        if not IDENT_RE.match(transition.trigger):
            emit(index, Diagnostic(
                "V3", f"invalid trigger identifier {transition.trigger!r}",
                clause.id, _loc(spec, f"{t_ptr}/trigger"),
            ))
        for k, token in enumerate(transition.conditions):
            c_ptr = f"{t_ptr}/conditions/{k}"
            try:
                ref = parse_condition_token(token)
            except MalformedToken as exc:
                emit(index, Diagnostic("V4", f"malformed condition token: {exc}", clause.id, _loc(spec, c_ptr)))
                continue
            if isinstance(ref, AutomatonCompleted):
                if ref.automaton == clause.id:
                    emit(index, Diagnostic(
                        "V5", f"clause depends on its own completion ({token})", clause.id, _loc(spec, c_ptr),
                    ))
                elif ref.automaton not in known_ids:
                    emit(index, Diagnostic(
                        "V5", f"completion guard references unknown automaton {ref.automaton!r}",
                        clause.id, _loc(spec, c_ptr),
                    ))
            else:
                _check_package_call(spec, index, clause, ref, packages, c_ptr, emit)

    seen_pairs: set[tuple[str, str]] = set()
    for j, transition in enumerate(clause.transitions):
        pair = (transition.source, transition.trigger)
        if pair in seen_pairs:
            emit(index, Diagnostic(
                "V7",
                f"duplicate transition for (source {transition.source!r}, trigger {transition.trigger!r})",
                clause.id, _loc(spec, f"{base}/transitions/{j}"),
            ))
        seen_pairs.add(pair)

    return clean


def _check_package_call(spec, index, clause, ref: PackageCall, packages: PackageSet, pointer: str, emit) -> None:
    library = packages.get(ref.package)
    if library is None:
        emit(index, Diagnostic(
            "V6", f"package guard references unknown package {ref.package!r}", clause.id, _loc(spec, pointer),
        ))
        return
    function = library.function(ref.function)
    if function is None:
        emit(index, Diagnostic(
            "V6", f"package {ref.package!r} has no function {ref.function!r}", clause.id, _loc(spec, pointer),
        ))
        return
    if function.returns != TYPE_BOOL:
        emit(index, Diagnostic(
            "V6", f"condition function {ref.package}.{ref.function} returns {function.returns}, not bool",
            clause.id, _loc(spec, pointer),
        ))
    if function.params:
        emit(index, Diagnostic(
            "V6", f"condition function {ref.package}.{ref.function} takes parameters",
            clause.id, _loc(spec, pointer),
        ))


def _check_reachability(spec, index, clause, emit) -> None:
    base = _clause_ptr(clause)
    reached = reachable_states(clause)
    for i, state in enumerate(clause.states):
        if state not in reached:
            emit(index, Diagnostic(
                "V8", f"state {state!r} is unreachable from initial state {clause.initial!r}",
                clause.id, _loc(spec, f"{base}/states/{i}"),
            ))
    if not (reached & clause.finals):
        emit(index, Diagnostic(
            "V8",
            f"no final state is reachable from initial state {clause.initial!r} (W_NO_COMPLETION)",
            clause.id, _loc(spec, base),
        ))
    sources = {t.source for t in clause.transitions}
    for state in clause.ordered_finals():
        if state in sources:
            emit(index, Diagnostic(
                "V8", f"final state {state!r} has outgoing transitions; completion is not monotone",
                clause.id, _loc(spec, base),
            ))


def _check_cycles(spec: ContractSpec) -> list[Diagnostic]:
    graph = depgraph.build_graph(spec)
    try:
        depgraph.topo_order(graph)
    except depgraph.CycleError as exc:
        return [Diagnostic("V9", str(exc), None, None)]
    return []
