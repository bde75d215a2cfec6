"""In-memory model of contract specifications and their clause automata.

A contract is an ordered list of clause automata. Each automaton has states,
an initial state, a set of final states, and guarded transitions. Transition
guards are kept as their textual condition tokens so that structurally valid
documents always load; the validator reports malformed tokens (rule V4) and
parse_condition_token turns well-formed ones into structured references.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator

from .errors import MlfsmError

# Triggers: letters, digits, underscore; must start with a letter.
IDENT_RE = re.compile(r"^[A-Za-z][A-Za-z0-9_]*$")
# Automaton and package ids: no underscores, so condition tokens split
# unambiguously on the first underscore after the prefix.
PLAIN_ID_RE = re.compile(r"^[A-Za-z][A-Za-z0-9]*$")
# Function component of a package token: underscores allowed.
FUNC_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

_PACKAGE_PREFIX = "package__"
_AUTOMATA_PREFIX = "automata__"
_COMPLETED_SUFFIX = "iscompleted"


class ModelError(MlfsmError):
    """A model value violates a construction invariant."""


class MalformedToken(MlfsmError):
    """A condition token does not match the token grammar."""


# ---------------------------------------------------------------------------
# Condition references
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PackageCall:
    """Guard that calls a boolean package function: ``package__<pkg>_<fn>``."""

    package: str
    function: str

    def __post_init__(self):
        if not PLAIN_ID_RE.match(self.package):
            raise ModelError(f"package id {self.package!r} must be underscore-free and alphanumeric")
        if not FUNC_NAME_RE.match(self.function):
            raise ModelError(f"function name {self.function!r} is not a valid identifier")


@dataclass(frozen=True)
class AutomatonCompleted:
    """Guard that requires another clause automaton to have completed."""

    automaton: str

    def __post_init__(self):
        if not PLAIN_ID_RE.match(self.automaton):
            raise ModelError(f"automaton id {self.automaton!r} must be underscore-free and alphanumeric")


ConditionRef = PackageCall | AutomatonCompleted


def parse_condition_token(token: str) -> ConditionRef:
    """Parse a condition token into its structured reference.

    Grammar: ``package__<pkg>_<fn>`` where <pkg> contains no underscore and
    <fn> is everything after the first underscore following the prefix, or
    ``automata__<aid>_iscompleted`` where <aid> contains no underscore.
    """
    if token.startswith(_PACKAGE_PREFIX):
        rest = token[len(_PACKAGE_PREFIX):]
        pkg, sep, fn = rest.partition("_")
        if not sep:
            raise MalformedToken(f"{token!r}: missing '_' between package id and function name")
        if not pkg or not fn:
            raise MalformedToken(f"{token!r}: empty package id or function name")
        if not PLAIN_ID_RE.match(pkg):
            raise MalformedToken(f"{token!r}: package id {pkg!r} must be underscore-free and alphanumeric")
        if not FUNC_NAME_RE.match(fn):
            raise MalformedToken(f"{token!r}: function name {fn!r} is not a valid identifier")
        return PackageCall(pkg, fn)
    if token.startswith(_AUTOMATA_PREFIX):
        rest = token[len(_AUTOMATA_PREFIX):]
        aid, sep, suffix = rest.partition("_")
        if not sep:
            raise MalformedToken(f"{token!r}: missing '_' between automaton id and suffix")
        if not aid:
            raise MalformedToken(f"{token!r}: empty automaton id")
        if suffix != _COMPLETED_SUFFIX:
            raise MalformedToken(f"{token!r}: automata tokens must end with '_{_COMPLETED_SUFFIX}'")
        if not PLAIN_ID_RE.match(aid):
            raise MalformedToken(f"{token!r}: automaton id {aid!r} must be underscore-free and alphanumeric")
        return AutomatonCompleted(aid)
    raise MalformedToken(f"{token!r}: expected '{_PACKAGE_PREFIX}' or '{_AUTOMATA_PREFIX}' prefix")


def render_condition_token(ref: ConditionRef) -> str:
    """Inverse of parse_condition_token; total on well-formed references."""
    if isinstance(ref, PackageCall):
        return f"{_PACKAGE_PREFIX}{ref.package}_{ref.function}"
    if isinstance(ref, AutomatonCompleted):
        return f"{_AUTOMATA_PREFIX}{ref.automaton}_{_COMPLETED_SUFFIX}"
    raise ModelError(f"not a condition reference: {ref!r}")


# ---------------------------------------------------------------------------
# Automata
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Transition:
    source: str
    destination: str
    trigger: str
    conditions: tuple[str, ...] = ()


@dataclass(frozen=True)
class ClauseAutomaton:
    """One contract clause as a finite state machine.

    State identifiers may be structurally dubious (duplicates, dangling
    transition endpoints); those are validator findings, not construction
    errors. The initial/finals invariants are enforced here because no
    validation rule covers them.
    """

    id: str
    name: str
    states: tuple[str, ...]
    initial: str
    finals: frozenset[str]
    transitions: tuple[Transition, ...] = ()

    def __post_init__(self):
        if not PLAIN_ID_RE.match(self.id):
            raise ModelError(f"automaton id {self.id!r} must be underscore-free and alphanumeric")
        if not self.name:
            raise ModelError("clause name must be non-empty")
        if not self.states:
            raise ModelError(f"clause {self.name!r} has no states")
        if self.initial not in self.states:
            raise ModelError(f"clause {self.name!r}: initial state {self.initial!r} is not a declared state")
        if not self.finals:
            raise ModelError(f"clause {self.name!r} has no final states")
        if not self.finals <= set(self.states):
            extra = sorted(self.finals - set(self.states))
            raise ModelError(f"clause {self.name!r}: final states {extra} are not declared states")

    def ordered_finals(self) -> tuple[str, ...]:
        """Final states in declaration order, for deterministic output."""
        return tuple(s for s in self.states if s in self.finals)

    def triggers(self) -> tuple[str, ...]:
        """Distinct trigger names in first-appearance order."""
        seen: dict[str, None] = {}
        for t in self.transitions:
            seen.setdefault(t.trigger, None)
        return tuple(seen)


def auto_automaton_id(index: int) -> str:
    """Stable id for the clause at a zero-based declaration index."""
    return f"a{index}"


def sink_states(states: tuple[str, ...], transitions: tuple[Transition, ...]) -> tuple[str, ...]:
    """States with no outgoing transitions, the default final-state set."""
    sources = {t.source for t in transitions}
    return tuple(s for s in states if s not in sources)


@dataclass(frozen=True)
class ContractSpec:
    name: str
    clauses: tuple[ClauseAutomaton, ...]
    origin: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.clauses:
            raise ModelError("contract spec has no clauses")
        names: set[str] = set()
        ids: set[str] = set()
        for clause in self.clauses:
            if clause.name in names:
                raise ModelError(f"duplicate clause name {clause.name!r}")
            if clause.id in ids:
                raise ModelError(f"duplicate automaton id {clause.id!r}")
            names.add(clause.name)
            ids.add(clause.id)

    def __iter__(self) -> Iterator[ClauseAutomaton]:
        return iter(self.clauses)

    def clause_ids(self) -> tuple[str, ...]:
        return tuple(c.id for c in self.clauses)

    def clause_by_id(self, automaton_id: str) -> ClauseAutomaton:
        for clause in self.clauses:
            if clause.id == automaton_id:
                return clause
        raise KeyError(automaton_id)

    def index_of(self, automaton_id: str) -> int:
        for i, clause in enumerate(self.clauses):
            if clause.id == automaton_id:
                return i
        raise KeyError(automaton_id)
