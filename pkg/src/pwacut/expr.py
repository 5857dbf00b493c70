"""Expression language for target functions, plus the builtin benchmarks.

Grammar (lowest to highest precedence)::

    expr    := expr ('+' | '-') expr          left-assoc
             | expr ('*' | '/') expr          left-assoc
             | '-' expr                       prefix
             | expr '^' expr                  right-assoc
             | NUMBER | NAME | NAME '(' args ')' | '(' expr ')'

Variables are ``x1..xn`` (states) followed by ``u1..um`` (inputs); points
are ordered the same way.  Error offsets are 1-based character positions.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from pwacut.errors import PwaError
from pwacut.geometry import Domain


class ExprError(PwaError):
    pass


class ParseError(ExprError):
    def __init__(self, offset: int, expected, message: str | None = None):
        self.offset = offset
        self.expected = frozenset(expected)
        msg = message or f"expected one of {sorted(self.expected)}"
        super().__init__(f"offset {offset}: {msg}")


class UnknownIdentifier(ParseError):
    def __init__(self, name: str, offset: int):
        self.name = name
        super().__init__(offset, (), f"unknown identifier {name!r}")


class ArityError(ParseError):
    def __init__(self, name: str, expected: int, got: int, offset: int):
        self.name = name
        super().__init__(offset, (), f"{name} takes {expected} argument(s), got {got}")


class EvalError(ExprError):
    def __init__(self, node, message: str):
        self.node = node
        super().__init__(f"{message} in {to_text(node)}")


class UnknownBenchmark(ExprError):
    pass


# -- AST ------------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str
    index: int  # column in the point vector


@dataclass(frozen=True)
class Const:
    name: str
    value: float


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


FUNCTIONS = {
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "tan": (1, np.tan),
    "atan": (1, np.arctan),
    "atan2": (2, np.arctan2),
    "exp": (1, np.exp),
    "log": (1, np.log),
    "sqrt": (1, np.sqrt),
    "abs": (1, np.abs),
    "min": (2, np.minimum),
    "max": (2, np.maximum),
}

# -- tokenizer ------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),]))"
)


@dataclass(frozen=True)
class Token:
    kind: str  # "num", "name", "op", "end"
    text: str
    offset: int  # 1-based


def tokenize(text: str) -> list:
    tokens = []
    pos = 0
    n = len(text)
    while True:
        while pos < n and text[pos].isspace():
            pos += 1
        if pos >= n:
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(pos + 1, ("number", "name", "operator"),
                             f"unexpected character {text[pos]!r}")
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append(Token(kind, m.group(kind), start + 1))
        pos = m.end()
    tokens.append(Token("end", "", n + 1))
    return tokens


# -- parser ---------------------------------------------------------------------

_BINARY = {"+": (10, "left"), "-": (10, "left"), "*": (20, "left"),
           "/": (20, "left"), "^": (40, "right")}
_UNARY_BP = 30
_PRIMARY_START = ("number", "name", "(", "-")


class _Parser:
    def __init__(self, text, variables, constants):
        self.tokens = tokenize(text)
        self.pos = 0
        self.variables = variables
        self.constants = constants

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, text):
        if self.tok.kind != "op" or self.tok.text != text:
            raise ParseError(self.tok.offset, (text,))
        return self.advance()

    def parse(self):
        node = self.expr(0)
        if self.tok.kind != "end":
            raise ParseError(self.tok.offset, ("operator", "end of input"))
        return node

    def expr(self, rbp):
        left = self.prefix()
        while self.tok.kind == "op" and self.tok.text in _BINARY:
            lbp, assoc = _BINARY[self.tok.text]
            if lbp <= rbp:
                break
            op = self.advance().text
            right = self.expr(lbp - 1 if assoc == "right" else lbp)
            left = BinOp(op, left, right)
        return left

    def prefix(self):
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "op" and tok.text == "-":
            self.advance()
            return Neg(self.expr(_UNARY_BP))
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.expr(0)
            self.expect(")")
            return node
        if tok.kind == "name":
            self.advance()
            if self.tok.kind == "op" and self.tok.text == "(":
                return self.call(tok)
            if tok.text in self.variables:
                return Var(tok.text, self.variables[tok.text])
            if tok.text in self.constants:
                return Const(tok.text, float(self.constants[tok.text]))
            raise UnknownIdentifier(tok.text, tok.offset)
        raise ParseError(tok.offset, _PRIMARY_START)

    def call(self, name_tok):
        if name_tok.text not in FUNCTIONS:
            raise UnknownIdentifier(name_tok.text, name_tok.offset)
        self.expect("(")
        args = [self.expr(0)]
        while self.tok.kind == "op" and self.tok.text == ",":
            self.advance()
            args.append(self.expr(0))
        self.expect(")")
        arity = FUNCTIONS[name_tok.text][0]
        if len(args) != arity:
            raise ArityError(name_tok.text, arity, len(args), name_tok.offset)
        return Call(name_tok.text, tuple(args))


def variable_names(dims) -> dict:
    n_states, n_inputs = dims
    names = {f"x{k + 1}": k for k in range(n_states)}
    names.update({f"u{k + 1}": n_states + k for k in range(n_inputs)})
    return names


def parse(text: str, dims, constants=None):
    """Parse ``text`` over variables ``x1..x{dims[0]}, u1..u{dims[1]}``.

    Raises:
        ParseError: malformed input (offset and expected tokens attached).
        UnknownIdentifier: a name that is neither a variable, a constant
            nor a known function.
        ArityError: a function called with the wrong number of arguments.
    """
    return _Parser(text, variable_names(dims), constants or {}).parse()


# -- printing -------------------------------------------------------------------


def to_text(node) -> str:
    """Fully parenthesized text that parses back to the same tree."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, (Var, Const)):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_text(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_text(node.left)} {node.op} {to_text(node.right)})"
    if isinstance(node, Call):
        return f"{node.func}({', '.join(to_text(a) for a in node.args)})"
    raise TypeError(f"not an expression node: {node!r}")


# -- evaluation -----------------------------------------------------------------


def eval_expr(node, x):
    """Evaluate at one point (``(d,)``) or a batch (``(N, d)``).

    Raises:
        EvalError: some subexpression is non-finite at some point.
    """
    x = np.asarray(x, dtype=float)
    with np.errstate(all="ignore"):
        out = _eval(node, x)
    if x.ndim == 1:
        return float(out)
    return np.broadcast_to(out, x.shape[:1]).astype(float)


def _eval(node, x):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return x[..., node.index]
    if isinstance(node, Neg):
        return -_eval(node.operand, x)
    if isinstance(node, BinOp):
        a = _eval(node.left, x)
        b = _eval(node.right, x)
        if node.op == "+":
            out = a + b
        elif node.op == "-":
            out = a - b
        elif node.op == "*":
            out = a * b
        elif node.op == "/":
            out = np.true_divide(a, b)
        else:
            bad = (np.asarray(a) < 0) & (np.asarray(b) != np.round(b))
            if np.any(bad):
                raise EvalError(node, "negative base with non-integer exponent")
            out = np.power(np.asarray(a, dtype=float), b)
    elif isinstance(node, Call):
        fn = FUNCTIONS[node.func][1]
        out = fn(*(_eval(a, x) for a in node.args))
    else:
        raise TypeError(f"not an expression node: {node!r}")
    if not np.all(np.isfinite(out)):
        raise EvalError(node, "non-finite result")
    return out


def compile_function(exprs):
    """Vector function ``(N, d) -> (N, n)`` from one expression per output."""
    exprs = list(exprs)

    def func(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.column_stack([eval_expr(e, X) for e in exprs])

    return func


# -- benchmarks -----------------------------------------------------------------


@dataclass(frozen=True)
class Benchmark:
    name: str
    texts: tuple
    dims: tuple
    lower: tuple
    upper: tuple
    constants: tuple = ()

    @property
    def exprs(self):
        consts = dict(self.constants)
        return [parse(t, self.dims, consts) for t in self.texts]

    @property
    def domain(self) -> Domain:
        return Domain.from_bounds(self.lower, self.upper)

    def function(self):
        return compile_function(self.exprs)


_VEHICLE_CONSTANTS = (("eta1", 1970.0), ("eta2", 64.36), ("eta3", 1.48))

BENCHMARKS = {
    b.name: b
    for b in (
        Benchmark("sine2d", ("sin(x1 + u1^2)",), (1, 1), (-2.0, -2.0), (2.0, 2.0)),
        Benchmark("dubins", ("x1*cos(x2)",), (2, 0), (-2.0, 0.0), (2.0, 2.0 * math.pi)),
        Benchmark(
            "vehicle_vx",
            ("(u1*cos(u3) + u2)/eta1 + eta2*(atan((x2 + eta3*x3)/x1) - u3)",),
            (3, 3),
            (5.0, -3.0, -1.0, -2000.0, -500.0, -0.5),
            (30.0, 3.0, 1.0, 2000.0, 500.0, 0.5),
            _VEHICLE_CONSTANTS,
        ),
    )
}


def builtin(name: str) -> Benchmark:
    try:
        return BENCHMARKS[name]
    except KeyError:
        raise UnknownBenchmark(
            f"unknown benchmark {name!r}; choose from {sorted(BENCHMARKS)}") from None
