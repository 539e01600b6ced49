"""A tiny cost language over fingertip positions.

Grammar (whitespace-insensitive)::

    expr    := term (("+" | "-") term)*
    term    := unary ("*" signed)* | signed "*" unary
    unary   := "-" unary | primary
    primary := number | vector | "(" expr ")"
             | "tip" "(" int ")" ["." ("x" | "y" | "z")]
             | "neg" "(" expr ")" | "norm" "(" expr ")"
             | "dot" "(" expr "," vector ")" | "mean" "(" expr ("," expr)* ")"
    vector  := "[" signed "," signed "," signed "]"

Expressions are either scalars or 3-vectors; ``tip(i)`` is the i-th fingertip
position. A program must evaluate to a scalar. Evaluation is vectorized over
any leading batch of poses.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from ..nn import NumericError

SCALAR, VECTOR = "scalar", "vector"
_AXES = {"x": 0, "y": 1, "z": 2}
_FUNCS = ("tip", "neg", "norm", "dot", "mean")


class DslError(ValueError):
    """Base class; ``position`` is the 0-based character offset of the problem."""

    kind = "error"

    def __init__(self, message, position):
        super().__init__(f"{self.kind} at position {position}: {message}")
        self.message = message
        self.position = position


class ParseError(DslError):
    kind = "parse error"


class UnknownSymbol(DslError):
    kind = "unknown symbol"


class TypeMismatch(DslError):
    kind = "type mismatch"


class IndexOutOfRange(DslError):
    kind = "index out of range"


# -- syntax tree ------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Vec:
    values: tuple


@dataclass(frozen=True)
class Tip:
    index: int


@dataclass(frozen=True)
class Axis:
    index: int
    axis: str


@dataclass(frozen=True)
class Add:
    left: object
    right: object


@dataclass(frozen=True)
class Sub:
    left: object
    right: object


@dataclass(frozen=True)
class Scale:
    expr: object
    factor: float


@dataclass(frozen=True)
class Neg:
    expr: object


@dataclass(frozen=True)
class Norm:
    expr: object


@dataclass(frozen=True)
class Dot:
    expr: object
    direction: tuple


@dataclass(frozen=True)
class Mean:
    args: tuple


# -- tokenizer ----------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|([A-Za-z_]\w*)|(.))")


@dataclass(frozen=True)
class _Tok:
    kind: str  # "num", "name", "op", "end"
    text: str
    pos: int


def _tokenize(text):
    toks, i = [], 0
    while i < len(text):
        m = _TOKEN.match(text, i)
        if m is None or m.end() == i:
            break
        if m.group(1):
            toks.append(_Tok("num", m.group(1), m.start(1)))
        elif m.group(2):
            toks.append(_Tok("name", m.group(2), m.start(2)))
        elif m.group(3):
            if m.group(3) not in "()[],.+-*":
                raise ParseError(f"unexpected character {m.group(3)!r}", m.start(3))
            toks.append(_Tok("op", m.group(3), m.start(3)))
        i = m.end()
    toks.append(_Tok("end", "", len(text)))
    return toks


# -- parser ---------------------------------------------------------------------------


class _Parser:
    def __init__(self, text, num_fingers):
        self.toks = _tokenize(text)
        self.i = 0
        self.num_fingers = num_fingers

    @property
    def tok(self):
        return self.toks[self.i]

    def take(self, text=None, kind=None):
        t = self.tok
        if (text is not None and t.text != text) or (kind is not None and t.kind != kind):
            want = repr(text) if text is not None else kind
            got = repr(t.text) if t.kind != "end" else "end of input"
            raise ParseError(f"expected {want}, found {got}", t.pos)
        self.i += 1
        return t

    def program(self):
        node, typ = self.expr()
        if self.tok.kind != "end":
            raise ParseError(f"unexpected {self.tok.text!r}", self.tok.pos)
        if typ != SCALAR:
            raise TypeMismatch("program must evaluate to a scalar", 0)
        return node

    def expr(self):
        node, typ = self.term()
        while self.tok.text in ("+", "-") and self.tok.kind == "op":
            op = self.take()
            right, rtyp = self.term()
            if rtyp != typ:
                raise TypeMismatch(f"cannot combine {typ} and {rtyp} with {op.text!r}", op.pos)
            node = Add(node, right) if op.text == "+" else Sub(node, right)
        return node, typ

    def term(self):
        if self.tok.kind == "num" or (self.tok.text == "-" and self.toks[self.i + 1].kind == "num"):
            # a leading literal may scale what follows: ``2 * tip(0).x``
            save = self.i
            value = self.signed()
            if self.tok.text == "*":
                self.take("*")
                node, typ = self.unary()
                node = Scale(node, value)
                return self._scale_tail(node, typ)
            self.i = save
        node, typ = self.unary()
        return self._scale_tail(node, typ)

    def _scale_tail(self, node, typ):
        while self.tok.text == "*" and self.tok.kind == "op":
            self.take("*")
            if not (self.tok.kind == "num" or self.tok.text == "-"):
                raise TypeMismatch("expressions can only be scaled by a number", self.tok.pos)
            node = Scale(node, self.signed())
        return node, typ

    def signed(self):
        neg = False
        if self.tok.text == "-":
            self.take("-")
            neg = True
        t = self.take(kind="num")
        value = float(t.text)
        if not math.isfinite(value):
            raise ParseError("number literal is not finite", t.pos)
        return -value if neg else value

    def unary(self):
        if self.tok.text == "-" and self.tok.kind == "op":
            if self.toks[self.i + 1].kind == "num":
                return Num(self.signed()), SCALAR
            self.take("-")
            node, typ = self.unary()
            return Neg(node), typ
        return self.primary()

    def vector(self):
        self.take("[")
        vals = [self.signed()]
        for _ in range(2):
            self.take(",")
            vals.append(self.signed())
        self.take("]")
        return tuple(vals)

    def primary(self):
        t = self.tok
        if t.kind == "num":
            return Num(self.signed()), SCALAR
        if t.text == "[":
            return Vec(self.vector()), VECTOR
        if t.text == "(":
            self.take("(")
            node = self.expr()
            self.take(")")
            return node
        if t.kind == "name":
            if t.text not in _FUNCS:
                raise UnknownSymbol(f"unknown name {t.text!r}", t.pos)
            return getattr(self, "_" + t.text)()
        if t.kind == "end":
            raise ParseError("unexpected end of input", t.pos)
        raise ParseError(f"unexpected {t.text!r}", t.pos)

    def _tip(self):
        self.take("tip")
        self.take("(")
        t = self.take(kind="num")
        if not re.fullmatch(r"\d+", t.text):
            raise ParseError("fingertip index must be a non-negative integer", t.pos)
        index = int(t.text)
        if self.num_fingers is not None and index >= self.num_fingers:
            raise IndexOutOfRange(f"tip({index}) but the hand has {self.num_fingers} fingers", t.pos)
        self.take(")")
        if self.tok.text == ".":
            self.take(".")
            a = self.take(kind="name")
            if a.text not in _AXES:
                raise UnknownSymbol(f"unknown axis {a.text!r}", a.pos)
            return Axis(index, a.text), SCALAR
        return Tip(index), VECTOR

    def _neg(self):
        self.take("neg")
        self.take("(")
        node, typ = self.expr()
        self.take(")")
        return Neg(node), typ

    def _norm(self):
        self.take("norm")
        self.take("(")
        pos = self.tok.pos
        node, typ = self.expr()
        if typ != VECTOR:
            raise TypeMismatch("norm() needs a vector", pos)
        self.take(")")
        return Norm(node), SCALAR

    def _dot(self):
        self.take("dot")
        self.take("(")
        pos = self.tok.pos
        node, typ = self.expr()
        if typ != VECTOR:
            raise TypeMismatch("dot() needs a vector first argument", pos)
        self.take(",")
        if self.tok.text != "[":
            raise TypeMismatch("dot() needs a constant [a, b, c] direction", self.tok.pos)
        direction = self.vector()
        self.take(")")
        return Dot(node, direction), SCALAR

    def _mean(self):
        self.take("mean")
        self.take("(")
        node, typ = self.expr()
        args = [node]
        while self.tok.text == ",":
            comma = self.take(",")
            node, t2 = self.expr()
            if t2 != typ:
                raise TypeMismatch(f"mean() mixes {typ} and {t2}", comma.pos)
            args.append(node)
        self.take(")")
        return Mean(tuple(args)), typ


def type_of(node):
    if isinstance(node, (Num, Axis, Norm, Dot)):
        return SCALAR
    if isinstance(node, (Vec, Tip)):
        return VECTOR
    if isinstance(node, (Add, Sub)):
        return type_of(node.left)
    if isinstance(node, (Scale, Neg)):
        return type_of(node.expr)
    if isinstance(node, Mean):
        return type_of(node.args[0])
    raise TypeError(f"not a syntax node: {node!r}")


# -- printer ----------------------------------------------------------------------------


def _num(v):
    return repr(float(v))


def to_source(node):
    """Canonical text; parsing it gives back an equal tree."""
    if isinstance(node, Num):
        return _num(node.value)
    if isinstance(node, Vec):
        return "[" + ", ".join(_num(v) for v in node.values) + "]"
    if isinstance(node, Tip):
        return f"tip({node.index})"
    if isinstance(node, Axis):
        return f"tip({node.index}).{node.axis}"
    if isinstance(node, (Add, Sub)):
        op = " + " if isinstance(node, Add) else " - "
        right = to_source(node.right)
        if isinstance(node.right, (Add, Sub)):
            right = f"({right})"
        return to_source(node.left) + op + right
    if isinstance(node, Scale):
        inner = to_source(node.expr)
        if isinstance(node.expr, (Add, Sub, Num)):
            inner = f"({inner})"
        return f"{inner} * {_num(node.factor)}"
    if isinstance(node, Neg):
        return f"neg({to_source(node.expr)})"
    if isinstance(node, Norm):
        return f"norm({to_source(node.expr)})"
    if isinstance(node, Dot):
        return f"dot({to_source(node.expr)}, {to_source(Vec(node.direction))})"
    if isinstance(node, Mean):
        return "mean(" + ", ".join(to_source(a) for a in node.args) + ")"
    raise TypeError(f"not a syntax node: {node!r}")


# -- evaluation ---------------------------------------------------------------------------


def _eval(node, tips):
    if isinstance(node, Num):
        return np.full(tips.shape[0], node.value)
    if isinstance(node, Vec):
        return np.broadcast_to(np.asarray(node.values), (tips.shape[0], 3))
    if isinstance(node, Tip):
        return tips[:, node.index]
    if isinstance(node, Axis):
        return tips[:, node.index, _AXES[node.axis]]
    if isinstance(node, Add):
        return _eval(node.left, tips) + _eval(node.right, tips)
    if isinstance(node, Sub):
        return _eval(node.left, tips) - _eval(node.right, tips)
    if isinstance(node, Scale):
        return _eval(node.expr, tips) * node.factor
    if isinstance(node, Neg):
        return -_eval(node.expr, tips)
    if isinstance(node, Norm):
        return np.linalg.norm(_eval(node.expr, tips), axis=-1)
    if isinstance(node, Dot):
        return _eval(node.expr, tips) @ np.asarray(node.direction)
    if isinstance(node, Mean):
        return sum(_eval(a, tips) for a in node.args) / len(node.args)
    raise TypeError(f"not a syntax node: {node!r}")


def max_tip_index(node):
    if isinstance(node, (Tip, Axis)):
        return node.index
    children = []
    if isinstance(node, (Add, Sub)):
        children = [node.left, node.right]
    elif isinstance(node, (Scale, Neg, Norm, Dot)):
        children = [node.expr]
    elif isinstance(node, Mean):
        children = list(node.args)
    return max((max_tip_index(c) for c in children), default=-1)


@dataclass(frozen=True)
class CostProgram:
    tree: object
    source: str
    num_fingers: int

    def canonical(self):
        return to_source(self.tree)

    def __call__(self, tips):
        return eval_cost(self, tips)


def parse_cost(text, num_fingers=None):
    """Parse and type-check ``text``; ``num_fingers`` bounds the tip indices."""
    tree = _Parser(text, num_fingers).program()
    n = num_fingers if num_fingers is not None else max_tip_index(tree) + 1
    return CostProgram(tree, text, n)


def eval_cost(prog, tips):
    """Cost of one pose ``(F*3,)`` / ``(F, 3)`` or of a batch ``(..., F*3)``."""
    tips = np.asarray(tips, dtype=float)
    f = prog.num_fingers
    if tips.shape[-1] == 3 * f:
        lead = tips.shape[:-1]
    elif tips.shape[-2:] == (f, 3):
        lead = tips.shape[:-2]
    else:
        raise ValueError(f"expected {f} fingertips, got array of shape {tips.shape}")
    if np.any(np.isnan(tips)):
        raise NumericError("NaN fingertip position")
    flat = tips.reshape(-1, f, 3)
    out = _eval(prog.tree, flat)
    return out.reshape(lead) if lead else float(out[0])


class ProgramCost:
    """Planner cost: the program evaluated on the final predicted state."""

    def __init__(self, prog):
        self.prog = prog

    def __call__(self, traj, actions=None):
        return eval_cost(self.prog, traj[..., -1, :])
