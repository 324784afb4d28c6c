"""Tiny arithmetic-expression language for analytic field definitions.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | power
    power  := atom (('^' | '**') unary)?
    atom   := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Names are the coordinates ``x0 .. x3``, the constant ``pi`` and any
user parameters.  Powers are right associative.
"""

from __future__ import annotations

import re

import numpy as np

from .forms import ScalarField

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "tanh": np.tanh,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
}
CONSTANTS = {"pi": np.pi}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>\*\*|[-+*/^()]))"
)


class ExpressionError(ValueError):
    def __init__(self, message, text, column):
        self.text = text
        self.column = column
        super().__init__(f"{message} (column {column + 1}): {text!r}")


def tokenize(text):
    tokens, pos = [], 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            col = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExpressionError(f"unexpected character {text[col]!r}", text, col)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text, names):
        self.text = text
        self.names = names
        self.tokens = tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        tok = self.take()
        if tok[1] != value:
            raise ExpressionError(f"expected {value!r}", self.text, tok[2])
        return tok

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ExpressionError(f"unexpected token {tok[1]!r}", self.text, tok[2])
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            node = (op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            node = (op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            operand = self.unary()
            return operand if op == "+" else ("neg", operand)
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] in ("^", "**"):
            self.take()
            return ("^", base, self.unary())
        return base

    def atom(self):
        kind, value, col = self.take()
        if kind == "num":
            return ("num", float(value))
        if kind == "name":
            if self.peek()[1] == "(":
                if value not in FUNCTIONS:
                    raise ExpressionError(f"unknown function {value!r}", self.text, col)
                self.take()
                arg = self.expr()
                self.expect(")")
                return ("call", value, arg)
            if value in CONSTANTS:
                return ("num", CONSTANTS[value])
            if value not in self.names:
                raise ExpressionError(f"unknown name {value!r}", self.text, col)
            return ("var", value)
        if value == "(":
            node = self.expr()
            self.expect(")")
            return node
        what = "end of input" if kind == "end" else repr(value)
        raise ExpressionError(f"unexpected {what}", self.text, col)


def parse(text, names=("x0", "x1", "x2", "x3")):
    """Parse ``text`` into a nested-tuple syntax tree."""
    return _Parser(text, set(names)).parse()


def evaluate(node, env):
    tag = node[0]
    if tag == "num":
        return node[1]
    if tag == "var":
        return env[node[1]]
    if tag == "neg":
        return -evaluate(node[1], env)
    if tag == "call":
        return FUNCTIONS[node[1]](evaluate(node[2], env))
    a, b = evaluate(node[1], env), evaluate(node[2], env)
    if tag == "+":
        return a + b
    if tag == "-":
        return a - b
    if tag == "*":
        return a * b
    if tag == "/":
        return a / b
    return np.power(a, b)


def compile_field(text, params=None, dim=4, step=None):
    """Expression string to a ScalarField (finite-difference gradient)."""
    params = dict(params or {})
    offset = 0 if dim == 4 else 1
    coords = [f"x{i + offset}" for i in range(dim)]
    tree = parse(text, names=coords + list(params))

    def fn(p):
        env = dict(params)
        env.update({name: p[:, i] for i, name in enumerate(coords)})
        out = evaluate(tree, env)
        return np.broadcast_to(np.asarray(out, dtype=float), (p.shape[0],)).copy()

    kwargs = {} if step is None else {"step": step}
    return ScalarField(fn, dim=dim, name=text, **kwargs)
