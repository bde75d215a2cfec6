"""Execute contract specs as interconnected state machines.

An ExecutionEnv tracks every clause's current state plus each package's
variable store, and appends an event to its trace for every fire attempt
and variable write. Package variables change only through set_var (the
external world); transitions read package state but never write it, so a
rejected fire leaves everything but the trace untouched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import validator
from .errors import MlfsmError
from .exprlang import ExprNode, Value, eval_expr
from .model import AutomatonCompleted, ContractSpec, PackageCall, Transition, parse_condition_token
from .packages import PackageSet


class SpecNotValidated(MlfsmError):
    """The spec has validation errors; carries the diagnostic list."""

    def __init__(self, diagnostics):
        errors = [d for d in diagnostics if d.severity == "error"]
        super().__init__(f"spec has {len(errors)} validation error(s)")
        self.diagnostics = diagnostics


class UnknownClause(MlfsmError):
    pass


class UnknownTrigger(MlfsmError):
    """The trigger appears on no transition of the clause at all (a trigger
    that exists but not from the current state is a rejection, not an error)."""


class UnknownVariable(MlfsmError):
    pass


class TypeMismatch(MlfsmError):
    pass


class DomainMissing(MlfsmError):
    """A package variable lacks the test_domain required for exploration."""


class ScriptError(MlfsmError):
    """A script document is malformed."""


class ScriptAssertionFailed(MlfsmError):
    def __init__(self, step_index: int, message: str):
        super().__init__(f"script step {step_index}: {message}")
        self.step_index = step_index


NO_SUCH_TRANSITION = "NoSuchTransition"
GUARD_FAILED = "GuardFailed"


@dataclass(frozen=True)
class TransitionResult:
    status: str  # "fired" | "rejected"
    reason: str | None = None  # NO_SUCH_TRANSITION | GUARD_FAILED
    condition: str | None = None  # failing condition token for GUARD_FAILED

    @property
    def fired(self) -> bool:
        return self.status == "fired"


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    kind: str  # "fired" | "rejected" | "var_set" | "completed"
    payload: tuple[tuple[str, object], ...]

    def to_json_obj(self) -> dict:
        obj: dict = {"seq": self.seq, "kind": self.kind}
        obj.update(dict(self.payload))
        return obj


class Trace:
    """Ordered event log with a strictly increasing sequence counter."""

    def __init__(self):
        self.events: list[TraceEvent] = []

    def append(self, kind: str, **payload) -> TraceEvent:
        event = TraceEvent(seq=len(self.events), kind=kind, payload=tuple(payload.items()))
        self.events.append(event)
        return event

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.to_json_obj()) + "\n" for e in self.events)


# ---------------------------------------------------------------------------
# Execution environment
# ---------------------------------------------------------------------------


class ExecutionEnv:
    """Mutable world state for one contract run; single-threaded use only."""

    def __init__(self, spec: ContractSpec, packages: PackageSet, diagnostics):
        self.spec = spec
        self.packages = packages
        self.diagnostics = diagnostics
        self.trace = Trace()
        self._current: dict[str, str] = {c.id: c.initial for c in spec.clauses}
        self._stores: dict[str, dict[str, Value]] = {
            pkg_id: {v.name: v.value for v in lib.variables} for pkg_id, lib in packages.items()
        }
        self._var_types: dict[str, dict[str, str]] = {
            pkg_id: lib.variable_types() for pkg_id, lib in packages.items()
        }
        self._finals: dict[str, frozenset[str]] = {c.id: c.finals for c in spec.clauses}
        self._triggers: dict[str, set[str]] = {c.id: set(c.triggers()) for c in spec.clauses}
        self._table: dict[str, dict[tuple[str, str], Transition]] = {
            c.id: {(t.source, t.trigger): t for t in c.transitions} for c in spec.clauses
        }
        self._completed_logged: set[str] = set()

    # -- observations -------------------------------------------------------

    def state_of(self, clause_id: str) -> str:
        if clause_id not in self._current:
            raise UnknownClause(f"unknown clause {clause_id!r}")
        return self._current[clause_id]

    def clause_states(self) -> dict[str, str]:
        return dict(self._current)

    def get_var(self, package_id: str, name: str) -> Value:
        store = self._stores.get(package_id)
        if store is None or name not in store:
            raise UnknownVariable(f"unknown variable {package_id}.{name}")
        return store[name]

    def package_values(self) -> dict[str, dict[str, Value]]:
        return {pkg: dict(store) for pkg, store in self._stores.items()}

    def is_completed(self, clause_id: str) -> bool:
        return self.state_of(clause_id) in self._finals[clause_id]

    def contract_completed(self) -> bool:
        return all(self.is_completed(c.id) for c in self.spec.clauses)

    # -- events --------------------------------------------------------------

    def fire(self, clause_id: str, trigger: str) -> TransitionResult:
        """Attempt the clause's unique (current state, trigger) transition.

        The first failing condition in declaration order is reported. A
        rejected fire changes nothing but the trace.
        """
        if clause_id not in self._current:
            raise UnknownClause(f"unknown clause {clause_id!r}")
        if trigger not in self._triggers[clause_id]:
            raise UnknownTrigger(f"clause {clause_id!r} has no transition with trigger {trigger!r}")
        current = self._current[clause_id]
        transition = self._table[clause_id].get((current, trigger))
        if transition is None:
            self.trace.append(
                "rejected", clause=clause_id, trigger=trigger, reason=NO_SUCH_TRANSITION, state=current,
            )
            return TransitionResult("rejected", reason=NO_SUCH_TRANSITION)
        for token in transition.conditions:
            if not self._condition_holds(token):
                self.trace.append(
                    "rejected", clause=clause_id, trigger=trigger, reason=GUARD_FAILED, condition=token,
                )
                return TransitionResult("rejected", reason=GUARD_FAILED, condition=token)
        self._current[clause_id] = transition.destination
        self.trace.append(
            "fired", clause=clause_id, trigger=trigger,
            source=transition.source, destination=transition.destination,
        )
        if transition.destination in self._finals[clause_id] and clause_id not in self._completed_logged:
            self._completed_logged.add(clause_id)
            self.trace.append("completed", clause=clause_id)
        return TransitionResult("fired")

    def set_var(self, package_id: str, name: str, value: Value) -> None:
        store = self._stores.get(package_id)
        if store is None or name not in store:
            raise UnknownVariable(f"unknown variable {package_id}.{name}")
        declared = self._var_types[package_id][name]
        if value.type != declared:
            raise TypeMismatch(f"variable {package_id}.{name} is {declared}, got {value.type}")
        store[name] = value
        self.trace.append("var_set", package=package_id, var=name, value=value.raw)

    def _condition_holds(self, token: str) -> bool:
        ref = parse_condition_token(token)
        if isinstance(ref, AutomatonCompleted):
            return self._current[ref.automaton] in self._finals[ref.automaton]
        function = self.packages[ref.package].function(ref.function)
        result = eval_expr(function.body, self._stores[ref.package])
        return bool(result.raw)


def new_env(spec: ContractSpec, packages: PackageSet) -> ExecutionEnv:
    """Validate and build a fresh environment at the initial configuration."""
    diagnostics = validator.validate(spec, packages)
    if validator.has_errors(diagnostics):
        raise SpecNotValidated(diagnostics)
    return ExecutionEnv(spec, packages, diagnostics)


# ---------------------------------------------------------------------------
# Scripts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScriptStep:
    cmd: str
    clause: str | None = None
    trigger: str | None = None
    state: str | None = None
    package: str | None = None
    var: str | None = None
    value: int | bool | None = None


_STEP_SCHEMAS: dict[str, tuple[str, ...]] = {
    "set": ("package", "var", "value"),
    "fire": ("clause", "trigger"),
    "assert_state": ("clause", "state"),
    "assert_completed": ("clause", "value"),
    "assert_rejected": ("clause", "trigger"),
}


def parse_script(document: str) -> tuple[ScriptStep, ...]:
    """Parse a script document: a JSON array of step objects."""
    try:
        raw = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ScriptError(f"invalid JSON: {exc.msg} (line {exc.lineno}, column {exc.colno})") from exc
    if not isinstance(raw, list):
        raise ScriptError("script must be a JSON array of steps")
    steps: list[ScriptStep] = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise ScriptError(f"step {i} must be an object")
        cmd = item.get("cmd")
        if cmd not in _STEP_SCHEMAS:
            raise ScriptError(f"step {i} has unknown cmd {cmd!r}")
        expected = _STEP_SCHEMAS[cmd]
        keys = set(item) - {"cmd"}
        if keys != set(expected):
            raise ScriptError(f"step {i} ({cmd}) must have exactly keys {sorted(expected) + ['cmd']}, got {sorted(item)}")
        fields: dict = {}
        for key in expected:
            value = item[key]
            if key == "value":
                if cmd == "assert_completed":
                    if not isinstance(value, bool):
                        raise ScriptError(f"step {i}: assert_completed value must be a boolean")
                elif not isinstance(value, (bool, int)):
                    raise ScriptError(f"step {i}: set value must be an integer or boolean")
            elif not isinstance(value, str):
                raise ScriptError(f"step {i}: {key} must be a string")
            fields[key] = value
        steps.append(ScriptStep(cmd=cmd, **fields))
    return tuple(steps)


def run_script(env: ExecutionEnv, script: tuple[ScriptStep, ...] | list[ScriptStep]) -> Trace:
    """Execute steps in order; assert_* steps abort on mismatch."""
    for index, step in enumerate(script):
        if step.cmd == "set":
            env.set_var(step.package, step.var, Value.from_raw(step.value))
        elif step.cmd == "fire":
            env.fire(step.clause, step.trigger)
        elif step.cmd == "assert_state":
            actual = env.state_of(step.clause)
            if actual != step.state:
                raise ScriptAssertionFailed(index, f"clause {step.clause} is at {actual!r}, expected {step.state!r}")
        elif step.cmd == "assert_completed":
            actual = env.is_completed(step.clause)
            if actual != step.value:
                raise ScriptAssertionFailed(index, f"clause {step.clause} completed is {actual}, expected {step.value}")
        elif step.cmd == "assert_rejected":
            result = env.fire(step.clause, step.trigger)
            if result.fired:
                raise ScriptAssertionFailed(index, f"fire {step.clause}.{step.trigger} fired, expected rejection")
        else:  # pragma: no cover - parse_script rejects unknown cmds
            raise ScriptError(f"unknown cmd {step.cmd!r}")
    return env.trace


# ---------------------------------------------------------------------------
# Exhaustive exploration
# ---------------------------------------------------------------------------

ProductState = tuple[tuple[str, ...], tuple[object, ...]]
ExploreEvent = tuple  # ("fire", clause, trigger) | ("set", package, var, raw)


@dataclass(frozen=True)
class ReachabilitySet:
    clause_ids: tuple[str, ...]
    slots: tuple[tuple[str, str], ...]  # (package id, variable name) per value slot
    states: frozenset[ProductState]
    completable: frozenset[str]
    witnesses: dict[ProductState, tuple[ExploreEvent, ...]] = field(compare=False, repr=False, default_factory=dict)


def product_state(env: ExecutionEnv, reach: ReachabilitySet) -> ProductState:
    """Project an environment onto the reachability set's product-state shape."""
    states = tuple(env.state_of(c) for c in reach.clause_ids)
    values = tuple(env.get_var(pkg, var).raw for pkg, var in reach.slots)
    return (states, values)


def explore(spec: ContractSpec, packages: PackageSet, max_depth: int) -> ReachabilitySet:
    """Breadth-first closure of the product state space up to max_depth events.

    Product states pair every clause's current state with every package
    variable's value; events are all (clause, trigger) fire attempts plus all
    variable writes to values from each variable's declared test domain.
    """
    if max_depth < 0:
        raise MlfsmError("max_depth must be >= 0")
    diagnostics = validator.validate(spec, packages)
    if validator.has_errors(diagnostics):
        raise SpecNotValidated(diagnostics)

    clause_ids = spec.clause_ids()
    clause_index = {cid: i for i, cid in enumerate(clause_ids)}
    finals = [c.finals for c in spec.clauses]
    tables = [{(t.source, t.trigger): t for t in c.transitions} for c in spec.clauses]

    slots: list[tuple[str, str]] = []
    domains: list[tuple[object, ...]] = []
    initial_values: list[object] = []
    slot_index: dict[tuple[str, str], int] = {}
    for pkg_id, lib in packages.items():
        for variable in lib.variables:
            if variable.test_domain is None:
                raise DomainMissing(f"variable {pkg_id}.{variable.name} has no test_domain")
            slot_index[(pkg_id, variable.name)] = len(slots)
            slots.append((pkg_id, variable.name))
            domains.append(tuple(v.raw for v in variable.test_domain))
            initial_values.append(variable.value.raw)

    pkg_slots: dict[str, tuple[tuple[str, int], ...]] = {
        pkg_id: tuple((v.name, slot_index[(pkg_id, v.name)]) for v in lib.variables)
        for pkg_id, lib in packages.items()
    }

    def guard(token: str):
        ref = parse_condition_token(token)
        if isinstance(ref, AutomatonCompleted):
            idx = clause_index[ref.automaton]
            accepting = finals[idx]
            return lambda states, values: states[idx] in accepting
        body: ExprNode = packages[ref.package].function(ref.function).body
        members = pkg_slots[ref.package]
        def check(states, values, body=body, members=members):
            bindings = {name: Value.from_raw(values[i]) for name, i in members}
            return bool(eval_expr(body, bindings).raw)
        return check

    fire_events: list[tuple[str, str, int, dict]] = []
    for i, clause in enumerate(spec.clauses):
        compiled = {
            key: (t.destination, tuple(guard(tok) for tok in t.conditions))
            for key, t in tables[i].items()
        }
        for trig in clause.triggers():
            fire_events.append((clause.id, trig, i, compiled))

    initial: ProductState = (tuple(c.initial for c in spec.clauses), tuple(initial_values))
    witnesses: dict[ProductState, tuple[ExploreEvent, ...]] = {initial: ()}
    frontier: list[ProductState] = [initial]
    depth = 0
    while frontier and depth < max_depth:
        next_frontier: list[ProductState] = []
        for state in frontier:
            states, values = state
            path = witnesses[state]
            for clause_id, trig, idx, compiled in fire_events:
                hit = compiled.get((states[idx], trig))
                if hit is None:
                    continue
                destination, checks = hit
                if not all(check(states, values) for check in checks):
                    continue
                nxt = (states[:idx] + (destination,) + states[idx + 1:], values)
                if nxt not in witnesses:
                    witnesses[nxt] = path + (("fire", clause_id, trig),)
                    next_frontier.append(nxt)
            for slot, domain in enumerate(domains):
                for raw in domain:
                    if values[slot] == raw:
                        continue
                    nxt = (states, values[:slot] + (raw,) + values[slot + 1:])
                    if nxt not in witnesses:
                        pkg_id, var = slots[slot]
                        witnesses[nxt] = path + (("set", pkg_id, var, raw),)
                        next_frontier.append(nxt)
        frontier = next_frontier
        depth += 1

    completable = frozenset(
        cid for i, cid in enumerate(clause_ids)
        if any(states[i] in finals[i] for states, _ in witnesses)
    )
    return ReachabilitySet(
        clause_ids=clause_ids,
        slots=tuple(slots),
        states=frozenset(witnesses),
        completable=completable,
        witnesses=witnesses,
    )
