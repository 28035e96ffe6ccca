"""Inline textual policy syntax for the command line.

The JSON tree is unwieldy in a shell, so the CLI accepts expressions like

    (age gte 18) and ((university eq "TU Delft") or (issuer eq me))

Rules are `attribute op value` with op one of eq, neq, lt, lte, gt, gte.
Values: double-quoted strings, integers, decimals, ISO dates (2022-01-31),
or bare words (taken as strings; `me` names the host itself in issuer
rules). Chains without parentheses nest to the right, so `a and b or c`
reads as `a and (b or c)`.
"""

from __future__ import annotations

import re
from datetime import date
from decimal import Decimal

from .policy import (
    AttributeRule,
    BoolOp,
    Leaf,
    MalformedPolicy,
    Operator,
    PolicyNode,
    linearize,
)
from .values import AttrValue

_TOKEN_RE = re.compile(
    r'\s*(?:(?P<lparen>\()|(?P<rparen>\))|(?P<string>"(?:[^"\\]|\\.)*")|(?P<word>[^\s()"]+))'
)

_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")
_INT_RE = re.compile(r"^-?\d+$")
_DECIMAL_RE = re.compile(r"^-?\d+\.\d+$")


def _tokenize(text: str) -> list[str]:
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            remainder = text[pos:].strip()
            if not remainder:
                break
            raise MalformedPolicy(f"offset {pos}", f"unexpected input: {remainder[:20]!r}")
        tokens.append(match.group(match.lastgroup))
        pos = match.end()
    return tokens


def _parse_value(token: str) -> AttrValue:
    if token.startswith('"'):
        return token[1:-1].replace('\\"', '"').replace("\\\\", "\\")
    if _INT_RE.match(token):
        return int(token)
    if _DECIMAL_RE.match(token):
        return Decimal(token)
    if _DATE_RE.match(token):
        try:
            return date.fromisoformat(token)
        except ValueError as exc:
            raise MalformedPolicy("$", f"bad date: {token}") from exc
    return token  # bare word string, e.g. me


class _Parser:
    def __init__(self, tokens: list[str]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> str:
        token = self.peek()
        if token is None:
            raise MalformedPolicy("$", "unexpected end of expression")
        self.pos += 1
        return token

    def parse_expression(self) -> PolicyNode:
        items: list[tuple[PolicyNode, BoolOp | None]] = []
        node = self.parse_term()
        while True:
            upcoming = self.peek()
            if upcoming in ("and", "or"):
                self.take()
                items.append((node, BoolOp(upcoming)))
                node = self.parse_term()
            else:
                items.append((node, None))
                return linearize(items)

    def parse_term(self) -> PolicyNode:
        token = self.peek()
        if token == "(":
            self.take()
            node = self.parse_expression()
            if self.take() != ")":
                raise MalformedPolicy("$", "expected closing parenthesis")
            return node
        return self.parse_rule()

    def parse_rule(self) -> PolicyNode:
        attribute = self.take()
        if attribute in (")", "(", "and", "or"):
            raise MalformedPolicy("$", f"expected an attribute name, got {attribute!r}")
        op_token = self.take()
        try:
            operator = Operator(op_token)
        except ValueError:
            raise MalformedPolicy(
                "$", f"unknown operator {op_token!r} (use eq/neq/lt/lte/gt/gte)"
            ) from None
        return Leaf(AttributeRule(attribute, operator, _parse_value(self.take())))


def parse_expression(text: str) -> PolicyNode:
    tokens = _tokenize(text)
    if not tokens:
        raise MalformedPolicy("$", "empty policy expression")
    parser = _Parser(tokens)
    node = parser.parse_expression()
    if parser.peek() is not None:
        raise MalformedPolicy("$", f"trailing input at token {parser.pos}: {parser.peek()!r}")
    return node


def format_value(value: AttrValue) -> str:
    if isinstance(value, str):
        if re.fullmatch(r"[A-Za-z0-9_.-]+", value) and value not in ("and", "or"):
            return value
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(value, date):
        return value.isoformat()
    return str(value)


def format_expression(node: PolicyNode) -> str:
    """Inverse of parse_expression, modulo redundant parentheses."""
    if isinstance(node, Leaf):
        rule = node.rule
        return f"({rule.attribute} {rule.operator.value} {format_value(rule.value)})"
    return f"({format_expression(node.left)} {node.op.value} {format_expression(node.right)})"
