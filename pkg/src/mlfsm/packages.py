"""Reusable package libraries: typed variables, boolean functions, structures."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import MlfsmError
from .exprlang import TYPE_BOOL, TYPE_INT, ExprNode, Value
from .model import FUNC_NAME_RE, IDENT_RE, PLAIN_ID_RE, ModelError

VALID_TYPES = (TYPE_INT, TYPE_BOOL)


class PackageModelError(MlfsmError):
    """A package component violates a construction invariant."""


@dataclass(frozen=True)
class PackageVariable:
    name: str
    type: str
    value: Value
    test_domain: tuple[Value, ...] | None = None

    def __post_init__(self):
        if not IDENT_RE.match(self.name):
            raise PackageModelError(f"variable name {self.name!r} is not a valid identifier")
        if self.type not in VALID_TYPES:
            raise PackageModelError(f"variable {self.name!r} has unknown type {self.type!r}")
        if self.value.type != self.type:
            raise PackageModelError(f"variable {self.name!r}: initial value is not of type {self.type}")
        if self.test_domain is not None:
            if not self.test_domain:
                raise PackageModelError(f"variable {self.name!r}: test domain must be non-empty")
            for v in self.test_domain:
                if v.type != self.type:
                    raise PackageModelError(f"variable {self.name!r}: test domain value {v.raw!r} has wrong type")


@dataclass(frozen=True)
class PackageParam:
    name: str
    type: str

    def __post_init__(self):
        if not IDENT_RE.match(self.name):
            raise PackageModelError(f"parameter name {self.name!r} is not a valid identifier")
        if self.type not in VALID_TYPES:
            raise PackageModelError(f"parameter {self.name!r} has unknown type {self.type!r}")


@dataclass(frozen=True)
class PackageFunction:
    """A pure function over package variables (and its own parameters).

    The body is stored both as source text and as a typechecked AST; the
    declared return type is guaranteed to match the body's inferred type.
    """

    name: str
    returns: str
    body_text: str
    body: ExprNode
    params: tuple[PackageParam, ...] = ()

    def __post_init__(self):
        if not FUNC_NAME_RE.match(self.name):
            raise PackageModelError(f"function name {self.name!r} is not a valid identifier")
        if self.returns not in VALID_TYPES:
            raise PackageModelError(f"function {self.name!r} has unknown return type {self.returns!r}")


@dataclass(frozen=True)
class StructDef:
    """A record-type declaration, carried through to code generation only."""

    name: str
    fields: tuple[PackageParam, ...]

    def __post_init__(self):
        if not IDENT_RE.match(self.name):
            raise PackageModelError(f"structure name {self.name!r} is not a valid identifier")
        if not self.fields:
            raise PackageModelError(f"structure {self.name!r} has no fields")


@dataclass(frozen=True)
class PackageLibrary:
    id: str
    name: str | None = None
    version: str | None = None
    variables: tuple[PackageVariable, ...] = ()
    functions: tuple[PackageFunction, ...] = ()
    structures: tuple[StructDef, ...] = ()

    def __post_init__(self):
        if not PLAIN_ID_RE.match(self.id):
            raise ModelError(f"package id {self.id!r} must be underscore-free and alphanumeric")
        for group, items in (("variable", self.variables), ("function", self.functions), ("structure", self.structures)):
            seen: set[str] = set()
            for item in items:
                if item.name in seen:
                    raise PackageModelError(f"package {self.id!r}: duplicate {group} name {item.name!r}")
                seen.add(item.name)

    def variable(self, name: str) -> PackageVariable | None:
        for v in self.variables:
            if v.name == name:
                return v
        return None

    def function(self, name: str) -> PackageFunction | None:
        for f in self.functions:
            if f.name == name:
                return f
        return None

    def variable_types(self) -> dict[str, str]:
        return {v.name: v.type for v in self.variables}


# Package sets map package id -> library; insertion order is the loader's
# sorted-by-filename order, keeping error reports and codegen deterministic.
PackageSet = dict[str, PackageLibrary]
