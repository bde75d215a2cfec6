"""Parse contract-spec and package-library documents into the core model.

The loader checks document shape only (strict schemas, precise locations);
referential rules such as undefined transition endpoints or unknown package
functions are deferred to the validator so that any schema-valid document
loads. Objects are walked as key/value pair lists rather than dicts so that
duplicate keys are caught with exact JSON-pointer locations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from . import exprlang
from .errors import MlfsmError
from .exprlang import TYPE_BOOL, TYPE_INT, Value
from .model import (
    PLAIN_ID_RE,
    ClauseAutomaton,
    ContractSpec,
    Transition,
    auto_automaton_id,
    sink_states,
)
from .packages import (
    PackageFunction,
    PackageLibrary,
    PackageParam,
    PackageSet,
    PackageVariable,
    StructDef,
)


@dataclass(frozen=True)
class SourceLocation:
    file: str
    json_pointer: str

    def __str__(self) -> str:
        return f"{self.file}#{self.json_pointer or '/'}"


class LoadError(MlfsmError):
    def __init__(self, message: str, location: SourceLocation | None = None):
        super().__init__(message if location is None else f"{location}: {message}")
        self.location = location


class JsonSyntaxError(LoadError):
    """Document is not well-formed JSON."""


class SchemaError(LoadError):
    """Document is well-formed JSON but violates the schema."""


class DuplicateClause(LoadError):
    """Two clauses share a name or an automaton id."""


class DuplicatePackageId(LoadError):
    """Two package files declare the same package id."""


class PackageBodyError(LoadError):
    """A function body failed to parse or typecheck."""

    def __init__(self, function_name: str, message: str, location: SourceLocation):
        super().__init__(f"function {function_name!r}: {message}", location)
        self.function_name = function_name


# ---------------------------------------------------------------------------
# JSON walking helpers
# ---------------------------------------------------------------------------


class _JsonObj:
    """JSON object preserving its raw key/value pairs (duplicates included)."""

    __slots__ = ("pairs",)

    def __init__(self, pairs):
        self.pairs = pairs


def _escape_pointer(part: str) -> str:
    return part.replace("~", "~0").replace("/", "~1")


def _child(pointer: str, part: str | int) -> str:
    return f"{pointer}/{_escape_pointer(str(part))}"


def _parse_document(document: str, origin: str) -> object:
    try:
        return json.loads(document, object_pairs_hook=_JsonObj)
    except json.JSONDecodeError as exc:
        location = SourceLocation(origin, "")
        raise JsonSyntaxError(f"invalid JSON: {exc.msg} (line {exc.lineno}, column {exc.colno})", location) from exc


def _expect_obj(value, origin: str, pointer: str, what: str) -> _JsonObj:
    if not isinstance(value, _JsonObj):
        raise SchemaError(f"{what} must be an object", SourceLocation(origin, pointer))
    return value


def _expect_list(value, origin: str, pointer: str, what: str) -> list:
    if not isinstance(value, list):
        raise SchemaError(f"{what} must be an array", SourceLocation(origin, pointer))
    return value


def _expect_str(value, origin: str, pointer: str, what: str) -> str:
    if not isinstance(value, str):
        raise SchemaError(f"{what} must be a string", SourceLocation(origin, pointer))
    return value


def _obj_fields(
    obj: _JsonObj,
    origin: str,
    pointer: str,
    what: str,
    required: tuple[str, ...],
    optional: tuple[str, ...] = (),
) -> dict:
    fields: dict = {}
    for key, value in obj.pairs:
        if key in fields:
            raise SchemaError(f"{what} has duplicate key {key!r}", SourceLocation(origin, _child(pointer, key)))
        if key not in required and key not in optional:
            raise SchemaError(f"{what} has unknown key {key!r}", SourceLocation(origin, _child(pointer, key)))
        fields[key] = value
    for key in required:
        if key not in fields:
            raise SchemaError(f"{what} is missing required key {key!r}", SourceLocation(origin, pointer))
    return fields


def _typed_scalar(value, declared: str, origin: str, pointer: str, what: str) -> Value:
    if declared == TYPE_BOOL:
        if not isinstance(value, bool):
            raise SchemaError(f"{what} must be a boolean", SourceLocation(origin, pointer))
        return Value.bool_(value)
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{what} must be an integer", SourceLocation(origin, pointer))
    if not exprlang.INT64_MIN <= value <= exprlang.INT64_MAX:
        raise SchemaError(f"{what} is outside the signed 64-bit range", SourceLocation(origin, pointer))
    return Value.int_(value)


# ---------------------------------------------------------------------------
# Contract specs
# ---------------------------------------------------------------------------


def _derive_spec_name(origin: str) -> str:
    stem = Path(origin).name.split(".")[0]
    cleaned = "".join(c if c.isalnum() or c == "_" else "_" for c in stem)
    if not cleaned or cleaned[0].isdigit():
        cleaned = f"contract{'_' + cleaned if cleaned else ''}"
    return cleaned


def load_contract_spec(document: str, origin: str | Path) -> ContractSpec:
    """Parse a contract-spec document (clause-name -> automaton object)."""
    origin = str(origin)
    root = _parse_document(document, origin)
    root_obj = _expect_obj(root, origin, "", "contract spec")
    if not root_obj.pairs:
        raise SchemaError("contract spec declares no clauses", SourceLocation(origin, ""))

    clauses: list[ClauseAutomaton] = []
    seen_names: set[str] = set()
    seen_ids: dict[str, str] = {}
    for index, (clause_name, clause_value) in enumerate(root_obj.pairs):
        pointer = _child("", clause_name)
        if clause_name in seen_names:
            raise DuplicateClause(f"duplicate clause name {clause_name!r}", SourceLocation(origin, pointer))
        seen_names.add(clause_name)
        clause = _load_clause(clause_name, clause_value, index, origin, pointer)
        if clause.id in seen_ids:
            raise DuplicateClause(
                f"automaton id {clause.id!r} of clause {clause_name!r} is already used by clause {seen_ids[clause.id]!r}",
                SourceLocation(origin, pointer),
            )
        seen_ids[clause.id] = clause_name
        clauses.append(clause)

    return ContractSpec(name=_derive_spec_name(origin), clauses=tuple(clauses), origin=origin)


def _load_clause(name: str, value, index: int, origin: str, pointer: str) -> ClauseAutomaton:
    obj = _expect_obj(value, origin, pointer, f"clause {name!r}")
    fields = _obj_fields(
        obj, origin, pointer, f"clause {name!r}",
        required=("states", "transitions"), optional=("id", "initial", "finals"),
    )

    states_ptr = _child(pointer, "states")
    raw_states = _expect_list(fields["states"], origin, states_ptr, "states")
    if not raw_states:
        raise SchemaError("states must be non-empty", SourceLocation(origin, states_ptr))
    states = tuple(
        _expect_str(s, origin, _child(states_ptr, i), "state") for i, s in enumerate(raw_states)
    )

    transitions_ptr = _child(pointer, "transitions")
    raw_transitions = _expect_list(fields["transitions"], origin, transitions_ptr, "transitions")
    transitions = tuple(
        _load_transition(t, origin, _child(transitions_ptr, i)) for i, t in enumerate(raw_transitions)
    )

    if "id" in fields:
        id_ptr = _child(pointer, "id")
        automaton_id = _expect_str(fields["id"], origin, id_ptr, "id")
        if not PLAIN_ID_RE.match(automaton_id):
            raise SchemaError(
                f"automaton id {automaton_id!r} must be underscore-free and alphanumeric",
                SourceLocation(origin, id_ptr),
            )
    else:
        automaton_id = auto_automaton_id(index)

    if "initial" in fields:
        initial_ptr = _child(pointer, "initial")
        initial = _expect_str(fields["initial"], origin, initial_ptr, "initial")
        if initial not in states:
            raise SchemaError(f"initial state {initial!r} is not a declared state", SourceLocation(origin, initial_ptr))
    else:
        initial = states[0]

    if "finals" in fields:
        finals_ptr = _child(pointer, "finals")
        raw_finals = _expect_list(fields["finals"], origin, finals_ptr, "finals")
        finals_list = [
            _expect_str(f, origin, _child(finals_ptr, i), "final state") for i, f in enumerate(raw_finals)
        ]
        for i, f in enumerate(finals_list):
            if f not in states:
                raise SchemaError(
                    f"final state {f!r} is not a declared state", SourceLocation(origin, _child(finals_ptr, i))
                )
        if not finals_list:
            raise SchemaError("finals must be non-empty when given", SourceLocation(origin, finals_ptr))
        finals = frozenset(finals_list)
    else:
        finals = frozenset(sink_states(states, transitions))
        if not finals:
            raise SchemaError(
                f"clause {name!r} has no sink states; declare an explicit \"finals\" array",
                SourceLocation(origin, pointer),
            )

    return ClauseAutomaton(
        id=automaton_id, name=name, states=states, initial=initial, finals=finals, transitions=transitions
    )


def _load_transition(value, origin: str, pointer: str) -> Transition:
    obj = _expect_obj(value, origin, pointer, "transition")
    fields = _obj_fields(
        obj, origin, pointer, "transition",
        required=("source", "destination", "trigger", "conditions"),
    )
    conditions_ptr = _child(pointer, "conditions")
    raw_conditions = _expect_list(fields["conditions"], origin, conditions_ptr, "conditions")
    conditions = tuple(
        _expect_str(c, origin, _child(conditions_ptr, i), "condition token") for i, c in enumerate(raw_conditions)
    )
    return Transition(
        source=_expect_str(fields["source"], origin, _child(pointer, "source"), "source"),
        destination=_expect_str(fields["destination"], origin, _child(pointer, "destination"), "destination"),
        trigger=_expect_str(fields["trigger"], origin, _child(pointer, "trigger"), "trigger"),
        conditions=conditions,
    )


# ---------------------------------------------------------------------------
# Packages
# ---------------------------------------------------------------------------


def load_package(document: str, origin: str | Path) -> PackageLibrary:
    """Parse a package-library document, typechecking every function body."""
    origin = str(origin)
    root = _parse_document(document, origin)
    obj = _expect_obj(root, origin, "", "package")
    fields = _obj_fields(
        obj, origin, "", "package",
        required=("id",), optional=("name", "version", "variables", "functions", "structures"),
    )

    package_id = _expect_str(fields["id"], origin, "/id", "package id")
    if not PLAIN_ID_RE.match(package_id):
        raise SchemaError(
            f"package id {package_id!r} must be underscore-free and alphanumeric",
            SourceLocation(origin, "/id"),
        )
    display_name = _expect_str(fields["name"], origin, "/name", "package name") if "name" in fields else None
    version = _expect_str(fields["version"], origin, "/version", "package version") if "version" in fields else None

    variables = _load_variables(fields.get("variables", []), origin)
    var_types = {v.name: v.type for v in variables}
    functions = _load_functions(fields.get("functions", []), var_types, origin)
    structures = _load_structures(fields.get("structures", []), origin)

    for group, items in (("variable", variables), ("function", functions), ("structure", structures)):
        seen: set[str] = set()
        for item in items:
            if item.name in seen:
                raise SchemaError(
                    f"duplicate {group} name {item.name!r}", SourceLocation(origin, f"/{group}s")
                )
            seen.add(item.name)

    return PackageLibrary(
        id=package_id, name=display_name, version=version,
        variables=variables, functions=functions, structures=structures,
    )


def _load_variables(value, origin: str) -> tuple[PackageVariable, ...]:
    raw = _expect_list(value, origin, "/variables", "variables")
    out: list[PackageVariable] = []
    for i, item in enumerate(raw):
        pointer = _child("/variables", i)
        obj = _expect_obj(item, origin, pointer, "variable")
        fields = _obj_fields(obj, origin, pointer, "variable", required=("name", "type", "value"), optional=("test_domain",))
        name = _expect_str(fields["name"], origin, _child(pointer, "name"), "variable name")
        var_type = _expect_str(fields["type"], origin, _child(pointer, "type"), "variable type")
        if var_type not in (TYPE_INT, TYPE_BOOL):
            raise SchemaError(
                f"variable type must be \"int\" or \"bool\", got {var_type!r}",
                SourceLocation(origin, _child(pointer, "type")),
            )
        initial = _typed_scalar(fields["value"], var_type, origin, _child(pointer, "value"), "variable value")
        domain: tuple[Value, ...] | None = None
        if "test_domain" in fields:
            domain_ptr = _child(pointer, "test_domain")
            raw_domain = _expect_list(fields["test_domain"], origin, domain_ptr, "test_domain")
            if not raw_domain:
                raise SchemaError("test_domain must be non-empty", SourceLocation(origin, domain_ptr))
            domain = tuple(
                _typed_scalar(d, var_type, origin, _child(domain_ptr, j), "test_domain value")
                for j, d in enumerate(raw_domain)
            )
        out.append(PackageVariable(name=name, type=var_type, value=initial, test_domain=domain))
    return tuple(out)


def _load_functions(value, var_types: dict[str, str], origin: str) -> tuple[PackageFunction, ...]:
    raw = _expect_list(value, origin, "/functions", "functions")
    out: list[PackageFunction] = []
    for i, item in enumerate(raw):
        pointer = _child("/functions", i)
        obj = _expect_obj(item, origin, pointer, "function")
        fields = _obj_fields(obj, origin, pointer, "function", required=("name", "returns", "body"), optional=("params",))
        name = _expect_str(fields["name"], origin, _child(pointer, "name"), "function name")
        returns = _expect_str(fields["returns"], origin, _child(pointer, "returns"), "function return type")
        if returns not in (TYPE_INT, TYPE_BOOL):
            raise SchemaError(
                f"function return type must be \"int\" or \"bool\", got {returns!r}",
                SourceLocation(origin, _child(pointer, "returns")),
            )
        params = _load_params(fields.get("params", []), origin, _child(pointer, "params"))
        body_text = _expect_str(fields["body"], origin, _child(pointer, "body"), "function body")
        body_location = SourceLocation(origin, _child(pointer, "body"))
        try:
            body = exprlang.parse_expr(body_text)
        except exprlang.ExprParseError as exc:
            raise PackageBodyError(name, str(exc), body_location) from exc
        body = exprlang.resolve_params(body, {p.name for p in params})
        env = dict(var_types)
        env.update({p.name: p.type for p in params})
        try:
            inferred = exprlang.typecheck_expr(body, env)
        except (exprlang.ExprTypeError, exprlang.UnboundName) as exc:
            raise PackageBodyError(name, str(exc), body_location) from exc
        if inferred != returns:
            raise PackageBodyError(name, f"body has type {inferred}, declared returns {returns}", body_location)
        out.append(PackageFunction(name=name, returns=returns, body_text=body_text, body=body, params=params))
    return tuple(out)


def _load_params(value, origin: str, pointer: str) -> tuple[PackageParam, ...]:
    raw = _expect_list(value, origin, pointer, "params")
    out: list[PackageParam] = []
    for i, item in enumerate(raw):
        item_ptr = _child(pointer, i)
        obj = _expect_obj(item, origin, item_ptr, "param")
        fields = _obj_fields(obj, origin, item_ptr, "param", required=("name", "type"))
        name = _expect_str(fields["name"], origin, _child(item_ptr, "name"), "param name")
        param_type = _expect_str(fields["type"], origin, _child(item_ptr, "type"), "param type")
        if param_type not in (TYPE_INT, TYPE_BOOL):
            raise SchemaError(
                f"param type must be \"int\" or \"bool\", got {param_type!r}",
                SourceLocation(origin, _child(item_ptr, "type")),
            )
        out.append(PackageParam(name=name, type=param_type))
    return tuple(out)


def _load_structures(value, origin: str) -> tuple[StructDef, ...]:
    raw = _expect_list(value, origin, "/structures", "structures")
    out: list[StructDef] = []
    for i, item in enumerate(raw):
        pointer = _child("/structures", i)
        obj = _expect_obj(item, origin, pointer, "structure")
        fields = _obj_fields(obj, origin, pointer, "structure", required=("name", "fields"))
        name = _expect_str(fields["name"], origin, _child(pointer, "name"), "structure name")
        fields_ptr = _child(pointer, "fields")
        members = _load_params(fields["fields"], origin, fields_ptr)
        if not members:
            raise SchemaError("structure fields must be non-empty", SourceLocation(origin, fields_ptr))
        out.append(StructDef(name=name, fields=members))
    return tuple(out)


def load_package_dir(directory: str | Path) -> PackageSet:
    """Load every ``*.pkg.json`` file; files are processed in sorted name order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"package directory {directory} does not exist")
    packages: PackageSet = {}
    declared_in: dict[str, str] = {}
    for path in sorted(directory.glob("*.pkg.json")):
        library = load_package(path.read_text(encoding="utf-8"), path)
        if library.id in packages:
            raise DuplicatePackageId(
                f"package id {library.id!r} declared by both {declared_in[library.id]} and {path.name}",
                SourceLocation(str(path), "/id"),
            )
        packages[library.id] = library
        declared_in[library.id] = path.name
    return packages
