"""Projection-expression parser for boundary masks.

Grammar (loosest binding first, all binary operators left-associative):

    expr      := or_term   (("implies" | "equiv") or_term)*
    or_term   := xor_term  ("or" xor_term)*
    xor_term  := nn_term   ("xor" nn_term)*
    nn_term   := and_term  (("nand" | "nor") and_term)*
    and_term  := not_term  ("and" not_term)*
    not_term  := "not" not_term | atom
    atom      := "(" expr ")" | identifier | "complete"

Keywords are case-insensitive. Identifiers must be parameter names and must
not name either slice axis. The keyword `Complete` (joint sweep over all free
parameters) is nullary and must form the whole expression.
"""

from __future__ import annotations

import re
from dataclasses import dataclass


class ExpressionError(ValueError):
    """Parse or validation failure, carrying the offending text position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


@dataclass(frozen=True)
class Atom:
    name: str


@dataclass(frozen=True)
class Complete:
    pass


@dataclass(frozen=True)
class Not:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


KEYWORDS = {"and", "or", "not", "xor", "nor", "nand", "implies", "equiv", "complete"}

_WORD = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def _tokenize(text: str):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        ch = text[pos]
        if ch.isspace():
            pos += 1
            continue
        if ch in "()":
            tokens.append((ch, ch, pos))
            pos += 1
            continue
        m = _WORD.match(text, pos)
        if not m:
            raise ExpressionError(f"unexpected character {ch!r}", pos)
        word = m.group(0)
        lowered = word.lower()
        if lowered in KEYWORDS:
            tokens.append(("kw", lowered, pos))
        else:
            tokens.append(("ident", word, pos))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens, text_len: int):
        self.tokens = tokens
        self.i = 0
        self.text_len = text_len

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next_pos(self) -> int:
        t = self.peek()
        return t[2] if t else self.text_len

    def take_kw(self, *names) -> str | None:
        t = self.peek()
        if t and t[0] == "kw" and t[1] in names:
            self.i += 1
            return t[1]
        return None

    def _binary(self, sub, *ops):
        node = sub()
        while True:
            op = self.take_kw(*ops)
            if op is None:
                return node
            node = BinOp(op=op, left=node, right=sub())

    def expr(self):
        return self._binary(self.or_term, "implies", "equiv")

    def or_term(self):
        return self._binary(self.xor_term, "or")

    def xor_term(self):
        return self._binary(self.nn_term, "xor")

    def nn_term(self):
        return self._binary(self.and_term, "nand", "nor")

    def and_term(self):
        return self._binary(self.not_term, "and")

    def not_term(self):
        if self.take_kw("not"):
            return Not(self.not_term())
        return self.atom()

    def atom(self):
        t = self.peek()
        if t is None:
            raise ExpressionError("unexpected end of expression", self.text_len)
        kind, value, pos = t
        if kind == "(":
            self.i += 1
            node = self.expr()
            closing = self.peek()
            if closing is None or closing[0] != ")":
                raise ExpressionError("missing closing parenthesis", self.next_pos())
            self.i += 1
            return node
        if kind == "kw" and value == "complete":
            self.i += 1
            return Complete()
        if kind == "ident":
            self.i += 1
            return Atom(value)
        raise ExpressionError(f"unexpected token {value!r}", pos)


def atoms_of(node) -> set[str]:
    if isinstance(node, Atom):
        return {node.name}
    if isinstance(node, Not):
        return atoms_of(node.operand)
    if isinstance(node, BinOp):
        return atoms_of(node.left) | atoms_of(node.right)
    return set()


def _contains_complete(node) -> bool:
    if isinstance(node, Complete):
        return True
    if isinstance(node, Not):
        return _contains_complete(node.operand)
    if isinstance(node, BinOp):
        return _contains_complete(node.left) or _contains_complete(node.right)
    return False


def parse_projection_expr(text: str, slice_axes, parameter_names):
    """Parse an expression and validate its atoms against the slice context.

    slice_axes are the two parameter names spanning the slice; they cannot
    appear as atoms. Unknown identifiers and misplaced `Complete` fail with
    the text position.
    """
    tokens = _tokenize(text)
    if not tokens:
        raise ExpressionError("empty expression", 0)
    parser = _Parser(tokens, len(text))
    node = parser.expr()
    trailing = parser.peek()
    if trailing is not None:
        raise ExpressionError(f"unexpected token {trailing[1]!r}", trailing[2])
    if _contains_complete(node) and not isinstance(node, Complete):
        pos = next(p for k, v, p in tokens if k == "kw" and v == "complete")
        raise ExpressionError("Complete must appear alone", pos)
    names = set(parameter_names)
    axes = set(slice_axes)
    for kind, value, pos in tokens:
        if kind != "ident":
            continue
        if value in axes:
            raise ExpressionError(f"slice axis {value!r} in expression", pos)
        if value not in names:
            raise ExpressionError(f"unknown identifier {value!r}", pos)
    return node
