"""Expression mini-language for package function bodies.

Grammar (EBNF, also published in the README):

    expr     = or_expr ;
    or_expr  = and_expr { "||" and_expr } ;
    and_expr = cmp_expr { "&&" cmp_expr } ;
    cmp_expr = add_expr [ cmp_op add_expr ] ;          (* non-associative *)
    cmp_op   = "==" | "!=" | "<" | "<=" | ">" | ">=" ;
    add_expr = mul_expr { ("+" | "-") mul_expr } ;
    mul_expr = unary { ("*" | "/" | "%") unary } ;
    unary    = ("!" | "-") unary | primary ;
    primary  = INT | "true" | "false" | IDENT | "(" expr ")" ;

Binary operators are left-associative except comparisons, which do not chain.
Evaluation is strict except ``&&``/``||``, which short-circuit. Integers are
signed 64-bit; any intermediate result outside that range is an Overflow
error, never silent wraparound. ``/`` and ``%`` truncate toward zero.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping

from .errors import MlfsmError

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

TYPE_INT = "int"
TYPE_BOOL = "bool"


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------


class ExprParseError(MlfsmError):
    """Expression text does not match the grammar."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class ExprTypeError(MlfsmError):
    """Operator applied to operands of the wrong type."""


class UnboundName(MlfsmError):
    """Expression references a name absent from the environment."""


class EvalError(MlfsmError):
    """Base class for runtime evaluation failures."""


class DivisionByZero(EvalError):
    pass


class Overflow(EvalError):
    """Result left the signed 64-bit range."""


# ---------------------------------------------------------------------------
# Values
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Value:
    """A runtime value: a signed 64-bit integer or a boolean."""

    type: str
    raw: int | bool

    def __post_init__(self):
        if self.type == TYPE_BOOL:
            if not isinstance(self.raw, bool):
                raise ExprTypeError(f"bool value carries non-bool payload {self.raw!r}")
        elif self.type == TYPE_INT:
            if isinstance(self.raw, bool) or not isinstance(self.raw, int):
                raise ExprTypeError(f"int value carries non-int payload {self.raw!r}")
            if not INT64_MIN <= self.raw <= INT64_MAX:
                raise Overflow(f"integer {self.raw} outside signed 64-bit range")
        else:
            raise ExprTypeError(f"unknown value type {self.type!r}")

    @classmethod
    def int_(cls, raw: int) -> Value:
        return cls(TYPE_INT, raw)

    @classmethod
    def bool_(cls, raw: bool) -> Value:
        return cls(TYPE_BOOL, raw)

    @classmethod
    def from_raw(cls, raw: int | bool) -> Value:
        """Wrap a plain Python scalar; bools are checked before ints."""
        if isinstance(raw, bool):
            return cls.bool_(raw)
        if isinstance(raw, int):
            return cls.int_(raw)
        raise ExprTypeError(f"cannot build a value from {raw!r}")


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IntLiteral:
    value: int


@dataclass(frozen=True)
class BoolLiteral:
    value: bool


@dataclass(frozen=True)
class VarRef:
    name: str


@dataclass(frozen=True)
class ParamRef:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # "not" | "neg"
    operand: ExprNode


@dataclass(frozen=True)
class Binary:
    op: str  # see BINARY_OPS
    left: ExprNode
    right: ExprNode


ExprNode = IntLiteral | BoolLiteral | VarRef | ParamRef | Unary | Binary

COMPARISON_OPS = {"eq", "ne", "lt", "le", "gt", "ge"}
ARITHMETIC_OPS = {"add", "sub", "mul", "div", "mod"}
LOGICAL_OPS = {"or", "and"}
BINARY_OPS = COMPARISON_OPS | ARITHMETIC_OPS | LOGICAL_OPS

_OP_TEXT = {
    "or": "||",
    "and": "&&",
    "eq": "==",
    "ne": "!=",
    "lt": "<",
    "le": "<=",
    "gt": ">",
    "ge": ">=",
    "add": "+",
    "sub": "-",
    "mul": "*",
    "div": "/",
    "mod": "%",
}
_UNARY_TEXT = {"not": "!", "neg": "-"}


# ---------------------------------------------------------------------------
# Tokenizer and parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\|\||&&|==|!=|<=|>=|<|>|\+|-|\*|/|%|!|\(|\))
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # "int" | "ident" | "op" | "eof"
    text: str
    offset: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self._tokens = _tokenize(text)
        self._i = 0

    @property
    def _cur(self) -> _Token:
        return self._tokens[self._i]

    def _advance(self) -> _Token:
        tok = self._cur
        self._i += 1
        return tok

    def _match_op(self, *texts: str) -> _Token | None:
        if self._cur.kind == "op" and self._cur.text in texts:
            return self._advance()
        return None

    def parse(self) -> ExprNode:
        node = self._or_expr()
        if self._cur.kind != "eof":
            raise ExprParseError(f"unexpected token {self._cur.text!r}", self._cur.offset)
        return node

    def _or_expr(self) -> ExprNode:
        node = self._and_expr()
        while self._match_op("||"):
            node = Binary("or", node, self._and_expr())
        return node

    def _and_expr(self) -> ExprNode:
        node = self._cmp_expr()
        while self._match_op("&&"):
            node = Binary("and", node, self._cmp_expr())
        return node

    _CMP = {"==": "eq", "!=": "ne", "<": "lt", "<=": "le", ">": "gt", ">=": "ge"}

    def _cmp_expr(self) -> ExprNode:
        node = self._add_expr()
        tok = self._match_op(*self._CMP)
        if tok is None:
            return node
        node = Binary(self._CMP[tok.text], node, self._add_expr())
        # Comparisons do not chain: a < b < c is a parse error.
        if self._cur.kind == "op" and self._cur.text in self._CMP:
            raise ExprParseError("comparison operators are non-associative", self._cur.offset)
        return node

    def _add_expr(self) -> ExprNode:
        node = self._mul_expr()
        while (tok := self._match_op("+", "-")) is not None:
            node = Binary("add" if tok.text == "+" else "sub", node, self._mul_expr())
        return node

    _MUL = {"*": "mul", "/": "div", "%": "mod"}

    def _mul_expr(self) -> ExprNode:
        node = self._unary()
        while (tok := self._match_op(*self._MUL)) is not None:
            node = Binary(self._MUL[tok.text], node, self._unary())
        return node

    def _unary(self) -> ExprNode:
        if self._match_op("!"):
            return Unary("not", self._unary())
        if self._match_op("-"):
            return Unary("neg", self._unary())
        return self._primary()

    def _primary(self) -> ExprNode:
        tok = self._cur
        if tok.kind == "int":
            self._advance()
            value = int(tok.text)
            if value > INT64_MAX:
                raise ExprParseError("integer literal outside signed 64-bit range", tok.offset)
            return IntLiteral(value)
        if tok.kind == "ident":
            self._advance()
            if tok.text == "true":
                return BoolLiteral(True)
            if tok.text == "false":
                return BoolLiteral(False)
            return VarRef(tok.text)
        if self._match_op("("):
            node = self._or_expr()
            if not self._match_op(")"):
                raise ExprParseError("expected ')'", self._cur.offset)
            return node
        raise ExprParseError(
            "expected an operand" if tok.kind == "eof" else f"unexpected token {tok.text!r}",
            tok.offset,
        )


def parse_expr(text: str) -> ExprNode:
    """Parse expression text into an AST.

    Names are parsed as VarRef; use resolve_params afterwards to rewrite
    references to declared function parameters into ParamRef nodes.
    """
    return _Parser(text).parse()


def resolve_params(node: ExprNode, param_names: frozenset[str] | set[str]) -> ExprNode:
    """Rewrite VarRef nodes whose name is a parameter into ParamRef nodes."""
    if isinstance(node, VarRef) and node.name in param_names:
        return ParamRef(node.name)
    if isinstance(node, Unary):
        return Unary(node.op, resolve_params(node.operand, param_names))
    if isinstance(node, Binary):
        return Binary(
            node.op,
            resolve_params(node.left, param_names),
            resolve_params(node.right, param_names),
        )
    return node


# ---------------------------------------------------------------------------
# Typechecker
# ---------------------------------------------------------------------------


def typecheck_expr(node: ExprNode, env_types: Mapping[str, str]) -> str:
    """Return the expression's type ("int" or "bool") under env_types."""
    if isinstance(node, IntLiteral):
        return TYPE_INT
    if isinstance(node, BoolLiteral):
        return TYPE_BOOL
    if isinstance(node, (VarRef, ParamRef)):
        try:
            return env_types[node.name]
        except KeyError:
            raise UnboundName(f"name {node.name!r} is not bound") from None
    if isinstance(node, Unary):
        operand = typecheck_expr(node.operand, env_types)
        if node.op == "not":
            if operand != TYPE_BOOL:
                raise ExprTypeError(f"'!' expects bool, got {operand}")
            return TYPE_BOOL
        if operand != TYPE_INT:
            raise ExprTypeError(f"unary '-' expects int, got {operand}")
        return TYPE_INT
    if isinstance(node, Binary):
        left = typecheck_expr(node.left, env_types)
        right = typecheck_expr(node.right, env_types)
        op = node.op
        if op in LOGICAL_OPS:
            if left != TYPE_BOOL or right != TYPE_BOOL:
                raise ExprTypeError(f"'{_OP_TEXT[op]}' expects bool operands, got {left} and {right}")
            return TYPE_BOOL
        if op in ("eq", "ne"):
            if left != right:
                raise ExprTypeError(f"'{_OP_TEXT[op]}' expects matching operand types, got {left} and {right}")
            return TYPE_BOOL
        if op in COMPARISON_OPS:
            if left != TYPE_INT or right != TYPE_INT:
                raise ExprTypeError(f"'{_OP_TEXT[op]}' expects int operands, got {left} and {right}")
            return TYPE_BOOL
        if left != TYPE_INT or right != TYPE_INT:
            raise ExprTypeError(f"'{_OP_TEXT[op]}' expects int operands, got {left} and {right}")
        return TYPE_INT
    raise ExprTypeError(f"unknown expression node {node!r}")


# ---------------------------------------------------------------------------
# Evaluator
# ---------------------------------------------------------------------------


def _check_range(value: int) -> int:
    if not INT64_MIN <= value <= INT64_MAX:
        raise Overflow(f"result {value} outside signed 64-bit range")
    return value


def _trunc_div(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def eval_expr(node: ExprNode, bindings: Mapping[str, Value]) -> Value:
    """Evaluate a typechecked expression under per-name value bindings.

    ``&&``/``||`` short-circuit; everything else is strict. ``/`` and ``%``
    truncate toward zero and reject a zero divisor. Any integer result
    outside the signed 64-bit range raises Overflow.
    """
    if isinstance(node, IntLiteral):
        return Value.int_(node.value)
    if isinstance(node, BoolLiteral):
        return Value.bool_(node.value)
    if isinstance(node, (VarRef, ParamRef)):
        try:
            return bindings[node.name]
        except KeyError:
            raise UnboundName(f"name {node.name!r} is not bound") from None
    if isinstance(node, Unary):
        operand = eval_expr(node.operand, bindings)
        if node.op == "not":
            return Value.bool_(not operand.raw)
        return Value.int_(_check_range(-operand.raw))
    if isinstance(node, Binary):
        op = node.op
        if op == "and":
            left = eval_expr(node.left, bindings)
            if not left.raw:
                return Value.bool_(False)
            return eval_expr(node.right, bindings)
        if op == "or":
            left = eval_expr(node.left, bindings)
            if left.raw:
                return Value.bool_(True)
            return eval_expr(node.right, bindings)
        left = eval_expr(node.left, bindings)
        right = eval_expr(node.right, bindings)
        a, b = left.raw, right.raw
        if op == "eq":
            return Value.bool_(a == b)
        if op == "ne":
            return Value.bool_(a != b)
        if op == "lt":
            return Value.bool_(a < b)
        if op == "le":
            return Value.bool_(a <= b)
        if op == "gt":
            return Value.bool_(a > b)
        if op == "ge":
            return Value.bool_(a >= b)
        if op == "add":
            return Value.int_(_check_range(a + b))
        if op == "sub":
            return Value.int_(_check_range(a - b))
        if op == "mul":
            return Value.int_(_check_range(a * b))
        if b == 0:
            raise DivisionByZero(f"{'division' if op == 'div' else 'modulo'} by zero")
        if op == "div":
            return Value.int_(_check_range(_trunc_div(a, b)))
        return Value.int_(a - b * _trunc_div(a, b))
    raise ExprTypeError(f"unknown expression node {node!r}")


# ---------------------------------------------------------------------------
# Target-expression translation
# ---------------------------------------------------------------------------


def translate_expr(node: ExprNode) -> str:
    """Emit target-contract expression text.

    Every binary and unary node is wrapped in explicit parentheses so the
    output never relies on the target language's precedence; re-parsing the
    output under this module's grammar yields a structurally identical tree.
    """
    if isinstance(node, IntLiteral):
        return str(node.value)
    if isinstance(node, BoolLiteral):
        return "true" if node.value else "false"
    if isinstance(node, (VarRef, ParamRef)):
        return node.name
    if isinstance(node, Unary):
        return f"({_UNARY_TEXT[node.op]}{translate_expr(node.operand)})"
    if isinstance(node, Binary):
        return f"({translate_expr(node.left)} {_OP_TEXT[node.op]} {translate_expr(node.right)})"
    raise ExprTypeError(f"unknown expression node {node!r}")


def referenced_vars(node: ExprNode) -> set[str]:
    """Names of package variables the expression reads (ParamRefs excluded)."""
    if isinstance(node, VarRef):
        return {node.name}
    if isinstance(node, Unary):
        return referenced_vars(node.operand)
    if isinstance(node, Binary):
        return referenced_vars(node.left) | referenced_vars(node.right)
    return set()
