"""
Scalar coefficient expressions over named chart coordinates.

Source text is parsed once (precedence climbing) into an immutable tree.
Trees evaluate on plain floats, on numpy arrays holding a batch of points,
or on forward-mode dual numbers.  Duals nest: a ``diff(e, x)`` node lifts
its argument one derivative level up, so derivatives of derivatives stay
exact without any symbolic rewriting.

The grammar is documented in ``docs/expr-grammar.md``.
"""
import math
from dataclasses import dataclass
from typing import Callable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np


class ReebLabError(Exception):
    """Base class for every error raised by reeblab."""


class ParseError(ReebLabError):
    def __init__(self, message: str, position: Optional[int] = None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class ExpressionDomainError(ReebLabError):
    """Evaluation left the real domain of a node (log, sqrt, division...)."""

    def __init__(self, node: str, detail: str, point=None):
        self.node = node
        self.detail = detail
        self.point = point
        super().__init__(self._message())

    def _message(self) -> str:
        where = "" if self.point is None else f" at point {np.round(np.asarray(self.point, dtype=float), 12).tolist()}"
        return f"{self.detail} in `{self.node}`{where}"

    def at(self, point) -> "ExpressionDomainError":
        if self.point is None:
            self.point = point
            self.args = (self._message(),)
        return self


class DerivativeUnavailable(ReebLabError):
    """An opaque coefficient was differentiated beyond what it provides."""


# ---------------------------------------------------------------------------
# Dual numbers
# ---------------------------------------------------------------------------

class Dual:
    """Forward-mode dual number: a value plus one partial per seed direction.

    ``value`` and the partials may be floats, numpy arrays (batches) or Duals
    themselves (one more derivative level).
    """

    __slots__ = ("value", "partials")

    def __init__(self, value, partials):
        self.value = value
        self.partials = tuple(partials)

    def __repr__(self):
        return f"Dual({self.value!r}, {self.partials!r})"

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value + other.value,
                        (a + b for a, b in zip(self.partials, other.partials)))
        return Dual(self.value + other, self.partials)

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.value, (-p for p in self.partials))

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value - other.value,
                        (a - b for a, b in zip(self.partials, other.partials)))
        return Dual(self.value - other, self.partials)

    def __rsub__(self, other):
        return Dual(other - self.value, (-p for p in self.partials))

    def __mul__(self, other):
        if isinstance(other, Dual):
            sv, ov = self.value, other.value
            return Dual(sv * ov, (a * ov + sv * b for a, b in zip(self.partials, other.partials)))
        return Dual(self.value * other, (p * other for p in self.partials))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            q = self.value / other.value
            ov = other.value
            return Dual(q, ((a - q * b) / ov for a, b in zip(self.partials, other.partials)))
        return Dual(self.value / other, (p / other for p in self.partials))

    def __rtruediv__(self, other):
        q = other / self.value
        sv = self.value
        return Dual(q, (-q * p / sv for p in self.partials))

    def __pow__(self, power):
        if isinstance(power, Dual):
            return exp(power * log(self))
        if power == 0:
            return Dual(self.value ** 0, (p * 0 for p in self.partials))
        slope = power * self.value ** (power - 1)
        return Dual(self.value ** power, (slope * p for p in self.partials))

    def __rpow__(self, base):
        return exp(self * math.log(base))


DualValue = Dual


def real(x):
    """Strip every derivative level and return the underlying value."""
    while isinstance(x, Dual):
        x = x.value
    return x


def _unary(numeric: Callable, slope: Callable) -> Callable:
    def apply(x):
        if isinstance(x, Dual):
            s = slope(x.value)
            return Dual(apply(x.value), (s * p for p in x.partials))
        return numeric(x)
    return apply


sin = _unary(np.sin, lambda v: cos(v))
cos = _unary(np.cos, lambda v: -sin(v))
tan = _unary(np.tan, lambda v: 1.0 / cos(v) ** 2)
exp = _unary(np.exp, lambda v: exp(v))
log = _unary(np.log, lambda v: 1.0 / v)
sqrt = _unary(np.sqrt, lambda v: 0.5 / sqrt(v))
atan = _unary(np.arctan, lambda v: 1.0 / (1.0 + v * v))
tanh = _unary(np.tanh, lambda v: 1.0 - tanh(v) ** 2)
absolute = _unary(np.abs, lambda v: np.sign(real(v)))


def where(cond, a, b):
    """Elementwise select that understands duals of any depth."""
    if isinstance(a, Dual) or isinstance(b, Dual):
        n = len((a if isinstance(a, Dual) else b).partials)
        if not isinstance(a, Dual):
            a = Dual(a, (0.0,) * n)
        if not isinstance(b, Dual):
            b = Dual(b, (0.0,) * n)
        return Dual(where(cond, a.value, b.value),
                    (where(cond, pa, pb) for pa, pb in zip(a.partials, b.partials)))
    if np.ndim(cond) == 0:
        return a if cond else b
    return np.where(cond, a, b)


def clip(x, lo: float, hi: float):
    """Clamp to [lo, hi]; derivatives vanish where the clamp is active."""
    if isinstance(x, Dual):
        v = real(x)
        inside = np.logical_and(v > lo, v < hi) * 1.0
        return Dual(clip(x.value, lo, hi), (p * inside for p in x.partials))
    return np.clip(x, lo, hi)


def smoothstep5(x, a: float, b: float):
    """Quintic step: 0 for x <= a, 1 for x >= b, C^2 in between."""
    t = clip((x - a) / (b - a), 0.0, 1.0)
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def smoothstep9(x, a: float, b: float):
    """Degree-9 step with four vanishing derivatives at both ends (C^4)."""
    t = clip((x - a) / (b - a), 0.0, 1.0)
    t5 = t * t * t * t * t
    return t5 * (126.0 + t * (-420.0 + t * (540.0 + t * (-315.0 + 70.0 * t))))


def flatstep(x, a: float, b: float):
    """C-infinity step built from exp(-1/t); flat to all orders at a and b."""
    t = clip((x - a) / (b - a), 1e-3, 1.0 - 1e-3)
    e1 = exp(-1.0 / t)
    e2 = exp(-1.0 / (1.0 - t))
    return e1 / (e1 + e2)


def sinc(x):
    """sin(x)/x with its removable singularity filled in by a series."""
    small = np.abs(real(x)) < 1e-4
    safe = where(small, 1.0, x)
    direct = sin(safe) / safe
    x2 = x * x
    series = 1.0 - x2 / 6.0 + x2 * x2 / 120.0
    return where(small, series, direct)


# ---------------------------------------------------------------------------
# Expression tree
# ---------------------------------------------------------------------------

def _check(cond, node, detail):
    if np.any(cond):
        raise ExpressionDomainError(str(node), detail)


class Node:
    def eval(self, env: Sequence, strict: bool):
        raise NotImplementedError

    def depends(self) -> bool:
        """Whether the node reads any coordinate."""
        return any(child.depends() for child in self.children())

    def children(self) -> Tuple["Node", ...]:
        return ()

    def rebuild(self, fn: Callable[["Node"], "Node"]) -> "Node":
        return self


@dataclass(frozen=True)
class Num(Node):
    value: float

    def eval(self, env, strict):
        return self.value

    def depends(self):
        return False

    def __str__(self):
        return repr(self.value) if self.value >= 0 else f"({self.value!r})"


@dataclass(frozen=True)
class Var(Node):
    index: int
    name: str

    def eval(self, env, strict):
        return env[self.index]

    def depends(self):
        return True

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Neg(Node):
    arg: Node

    def eval(self, env, strict):
        return -self.arg.eval(env, strict)

    def children(self):
        return (self.arg,)

    def rebuild(self, fn):
        return Neg(fn(self.arg))

    def __str__(self):
        return f"(-{self.arg})"


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node

    def eval(self, env, strict):
        a = self.left.eval(env, strict)
        b = self.right.eval(env, strict)
        op = self.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if strict:
                _check(real(b) == 0, self, "division by zero")
            return a / b
        if isinstance(self.right, Num):
            c = self.right.value
            if strict and not float(c).is_integer():
                _check(real(a) < 0, self, "negative base with fractional exponent")
            if strict and c < 1 and c != 0 and isinstance(a, Dual):
                _check(real(a) == 0, self, "power not differentiable at 0")
            return a ** c
        if strict:
            _check(real(a) <= 0, self, "non-positive base with variable exponent")
        return exp(b * log(a))

    def children(self):
        return (self.left, self.right)

    def rebuild(self, fn):
        return BinOp(self.op, fn(self.left), fn(self.right))

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


_UNARY = {
    "sin": sin, "cos": cos, "tan": tan, "exp": exp, "log": log, "sqrt": sqrt,
    "atan": atan, "tanh": tanh, "abs": absolute, "sinc": sinc,
}
_STEPS = {"smoothstep5": smoothstep5, "smoothstep9": smoothstep9, "flatstep": flatstep}


@dataclass(frozen=True)
class Call(Node):
    name: str
    args: Tuple[Node, ...]

    def eval(self, env, strict):
        if self.name in _STEPS:
            x = self.args[0].eval(env, strict)
            a = real(self.args[1].eval(env, strict))
            b = real(self.args[2].eval(env, strict))
            if strict and np.any(np.asarray(b) <= np.asarray(a)):
                raise ExpressionDomainError(str(self), "step needs a < b")
            return _STEPS[self.name](x, a, b)
        x = self.args[0].eval(env, strict)
        if strict:
            v = real(x)
            if self.name == "log":
                _check(v <= 0, self, "log of non-positive value")
            elif self.name == "sqrt":
                _check(v < 0, self, "sqrt of negative value")
                if isinstance(x, Dual):
                    _check(v == 0, self, "sqrt not differentiable at 0")
            elif self.name == "tan":
                _check(np.abs(np.cos(v)) < 1e-300, self, "tan at a pole")
        return _UNARY[self.name](x)

    def children(self):
        return self.args

    def rebuild(self, fn):
        return Call(self.name, tuple(fn(a) for a in self.args))

    def __str__(self):
        return f"{self.name}({', '.join(str(a) for a in self.args)})"


@dataclass(frozen=True)
class Compare(Node):
    op: str
    left: Node
    right: Node

    def eval(self, env, strict):
        a = real(self.left.eval(env, strict))
        b = real(self.right.eval(env, strict))
        return {"<": np.less, "<=": np.less_equal,
                ">": np.greater, ">=": np.greater_equal}[self.op](a, b)

    def children(self):
        return (self.left, self.right)

    def rebuild(self, fn):
        return Compare(self.op, fn(self.left), fn(self.right))

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Piecewise(Node):
    """First branch whose guard holds; pieces must be C^2-matched by the author."""

    branches: Tuple[Tuple[Node, Node], ...]
    default: Node

    def eval(self, env, strict):
        guards = [guard.eval(env, strict) for guard, _ in self.branches]
        if all(np.ndim(g) == 0 for g in guards):
            for g, (_, value) in zip(guards, self.branches):
                if g:
                    return value.eval(env, strict)
            return self.default.eval(env, strict)
        with np.errstate(all="ignore"):
            result = self.default.eval(env, False)
            for g, (_, value) in reversed(list(zip(guards, self.branches))):
                result = where(g, value.eval(env, False), result)
        if strict:
            _check(~np.isfinite(real(result)), self, "non-finite value in selected branch")
        return result

    def children(self):
        out = [self.default]
        for guard, value in self.branches:
            out.extend((guard, value))
        return tuple(out)

    def rebuild(self, fn):
        return Piecewise(tuple((fn(g), fn(v)) for g, v in self.branches), fn(self.default))

    def __str__(self):
        parts = []
        for guard, value in self.branches:
            parts.extend((str(guard), str(value)))
        parts.append(str(self.default))
        return f"piecewise({', '.join(parts)})"


@dataclass(frozen=True)
class Diff(Node):
    """Partial derivative of ``arg`` along coordinate ``index``."""

    arg: Node
    index: int
    name: str

    def eval(self, env, strict):
        lifted = [Dual(v, (1.0 if i == self.index else 0.0,)) for i, v in enumerate(env)]
        out = self.arg.eval(lifted, strict)
        if isinstance(out, Dual):
            return out.partials[0]
        return 0.0 * real(env[self.index])

    def children(self):
        return (self.arg,)

    def rebuild(self, fn):
        return Diff(fn(self.arg), self.index, self.name)

    def __str__(self):
        return f"diff({self.arg}, {self.name})"


@dataclass(frozen=True)
class OpaqueFunction:
    """Numerically defined function usable inside expressions.

    ``func(*args)`` returns the value; ``gradient(*args)`` returns one partial
    per argument.  Only first derivatives are available.
    """

    name: str
    arity: int
    func: Callable
    gradient: Optional[Callable] = None


@dataclass(frozen=True)
class Opaque(Node):
    fn: OpaqueFunction
    args: Tuple[Node, ...]

    def eval(self, env, strict):
        values = [a.eval(env, strict) for a in self.args]
        if not any(isinstance(v, Dual) for v in values):
            return self.fn.func(*values)
        if any(isinstance(v, Dual) and isinstance(v.value, Dual) for v in values):
            raise DerivativeUnavailable(f"{self.fn.name} provides first derivatives only")
        if self.fn.gradient is None:
            raise DerivativeUnavailable(f"{self.fn.name} has no gradient")
        base = [real(v) for v in values]
        slopes = self.fn.gradient(*base)
        n = len(next(v for v in values if isinstance(v, Dual)).partials)
        partials = []
        for k in range(n):
            total = 0.0
            for slope, v in zip(slopes, values):
                if isinstance(v, Dual):
                    total = total + slope * v.partials[k]
            partials.append(total)
        return Dual(self.fn.func(*base), partials)

    def children(self):
        return self.args

    def rebuild(self, fn):
        return Opaque(self.fn, tuple(fn(a) for a in self.args))

    def __str__(self):
        return f"{self.fn.name}({', '.join(str(a) for a in self.args)})"


def _fold(op: str, a: Node, b: Node) -> Node:
    """Drop literal zeros and ones; anything else is left alone."""
    za = isinstance(a, Num) and a.value == 0.0
    zb = isinstance(b, Num) and b.value == 0.0
    if op == "+":
        return b if za else a if zb else BinOp("+", a, b)
    if op == "-":
        return a if zb else Neg(b) if za else BinOp("-", a, b)
    if op == "*":
        if za or zb:
            return Num(0.0)
        if isinstance(a, Num) and a.value == 1.0:
            return b
        if isinstance(b, Num) and b.value == 1.0:
            return a
        if isinstance(a, Num) and a.value == -1.0:
            return Neg(b)
    return BinOp(op, a, b)


Operand = Union["Expression", float, int]


class Expression:
    """Immutable parsed expression bound to an ordered list of coordinates."""

    def __init__(self, root: Node, coords: Sequence[str]):
        self.root = root
        self.coords = tuple(coords)

    def __str__(self):
        return str(self.root)

    def __repr__(self):
        return f"Expression({str(self.root)!r}, coords={self.coords})"

    @property
    def dimension(self) -> int:
        return len(self.coords)

    @property
    def is_zero(self) -> bool:
        return isinstance(self.root, Num) and self.root.value == 0.0

    @classmethod
    def constant(cls, value: float, coords: Sequence[str]) -> "Expression":
        return cls(Num(float(value)), coords)

    # -- evaluation -------------------------------------------------------

    def _values(self, point):
        p = np.asarray(point, dtype=float)
        if p.shape[0] != self.dimension:
            raise ValueError(f"expected {self.dimension} coordinates, got {p.shape[0]}")
        if p.ndim == 1:
            return [float(v) for v in p]
        return [p[i] for i in range(self.dimension)]

    def evaluate_values(self, values: Sequence, strict: bool = True):
        """Evaluate on per-coordinate values (floats, arrays or duals)."""
        return self.root.eval(values, strict)

    def evaluate(self, point):
        try:
            out = self.root.eval(self._values(point), True)
        except ExpressionDomainError as err:
            raise err.at(point)
        p = np.asarray(point, dtype=float)
        if p.ndim > 1:
            return np.broadcast_to(np.asarray(out, dtype=float), p.shape[1:]).copy()
        return float(out)

    __call__ = evaluate

    def eval_dual(self, point, seed) -> Dual:
        """Value and directional derivative(s) along ``seed``.

        ``seed`` is one direction of length n, or a (k, n) stack of them.
        """
        s = np.atleast_2d(np.asarray(seed, dtype=float))
        values = self._values(point)
        lifted = [Dual(v, tuple(float(row[i]) for row in s)) for i, v in enumerate(values)]
        try:
            out = self.root.eval(lifted, True)
        except ExpressionDomainError as err:
            raise err.at(point)
        if not isinstance(out, Dual):
            return Dual(out, (0.0 * real(out),) * s.shape[0])
        return out

    def value_and_gradient(self, point):
        n = self.dimension
        values = self._values(point)
        lifted = [Dual(v, tuple(1.0 if j == i else 0.0 for j in range(n))) for i, v in enumerate(values)]
        try:
            out = self.root.eval(lifted, True)
        except ExpressionDomainError as err:
            raise err.at(point)
        p = np.asarray(point, dtype=float)
        shape = p.shape[1:]
        if not isinstance(out, Dual):
            return (np.broadcast_to(np.asarray(out, dtype=float), shape).copy() if shape else float(out),
                    np.zeros((n,) + shape))
        grad = np.stack([np.broadcast_to(np.asarray(g, dtype=float), shape) for g in out.partials])
        value = np.broadcast_to(np.asarray(out.value, dtype=float), shape).copy() if shape else float(out.value)
        return value, grad

    def gradient(self, point) -> np.ndarray:
        return self.value_and_gradient(point)[1]

    # -- construction -----------------------------------------------------

    def _lift(self, other: Operand) -> Node:
        if isinstance(other, Expression):
            if other.coords != self.coords:
                raise ValueError("expressions live on different coordinate lists")
            return other.root
        return Num(float(other))

    def __add__(self, other: Operand):
        return Expression(_fold("+", self.root, self._lift(other)), self.coords)

    __radd__ = __add__

    def __sub__(self, other: Operand):
        return Expression(_fold("-", self.root, self._lift(other)), self.coords)

    def __rsub__(self, other: Operand):
        return Expression(_fold("-", self._lift(other), self.root), self.coords)

    def __mul__(self, other: Operand):
        return Expression(_fold("*", self.root, self._lift(other)), self.coords)

    __rmul__ = __mul__

    def __truediv__(self, other: Operand):
        return Expression(BinOp("/", self.root, self._lift(other)), self.coords)

    def __neg__(self):
        return Expression(_fold("*", Num(-1.0), self.root), self.coords)

    def derivative(self, coord: Union[int, str]) -> "Expression":
        index = self.coords.index(coord) if isinstance(coord, str) else coord
        if not self.root.depends():
            return Expression(Num(0.0), self.coords)
        return Expression(Diff(self.root, index, self.coords[index]), self.coords)

    def rebase(self, coords: Sequence[str]) -> "Expression":
        """Rebind to another coordinate list that contains every name used."""
        coords = tuple(coords)

        def rename(node: Node) -> Node:
            if isinstance(node, Var):
                return Var(coords.index(node.name), node.name)
            if isinstance(node, Diff):
                return Diff(rename(node.arg), coords.index(node.name), node.name)
            return node.rebuild(rename)

        try:
            return Expression(rename(self.root), coords)
        except ValueError:
            raise ReebLabError(f"cannot rebase {self} onto coordinates {coords}")

    @classmethod
    def coordinate(cls, name: str, coords: Sequence[str]) -> "Expression":
        coords = tuple(coords)
        return cls(Var(coords.index(name), name), coords)

    def compose(self, components: Sequence["Expression"]) -> "Expression":
        """Substitute one expression per coordinate (all on a common chart)."""
        if len(components) != self.dimension:
            raise ValueError("one component per coordinate is required")
        coords = components[0].coords if components else ()
        roots = [c.root for c in components]
        return Expression(_substitute(self.root, roots), coords)


def _substitute(node: Node, roots: Sequence[Node]) -> Node:
    if isinstance(node, Var):
        return roots[node.index]
    if isinstance(node, Diff):
        lifted = _LiftedDiff(inner_root=node.arg, index=node.index, name=node.name, roots=tuple(roots))
        return lifted
    return node.rebuild(lambda child: _substitute(child, roots))


@dataclass(frozen=True)
class _LiftedDiff(Node):
    """(∂_i e)∘F: evaluate F, then differentiate e at the image point."""

    inner_root: Node
    index: int
    name: str
    roots: Tuple[Node, ...]

    def eval(self, env, strict):
        image = [r.eval(env, strict) for r in self.roots]
        return Diff(self.inner_root, self.index, self.name).eval(image, strict)

    def children(self):
        return self.roots

    def rebuild(self, fn):
        return _LiftedDiff(self.inner_root, self.index, self.name, tuple(fn(r) for r in self.roots))

    def __str__(self):
        image = ", ".join(str(r) for r in self.roots)
        return f"diff({self.inner_root}, {self.name})@({image})"


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

OPERATORS = [
    [("<", "left"), ("<=", "left"), (">", "left"), (">=", "left")],
    [("+", "left"), ("-", "left")],
    [("*", "left"), ("/", "left")],
    [("^", "right")],
]
OPERATOR_PREC = {op: idx for idx, group in enumerate(OPERATORS) for op, _ in group}
OPERATOR_ASSOC = {op: assoc for group in OPERATORS for op, assoc in group}
UNARY_MINUS_PREC = OPERATOR_PREC["*"] + 1
COMPARISONS = ("<", "<=", ">", ">=")

ARITY = {name: 1 for name in _UNARY}
ARITY.update({name: 3 for name in _STEPS})
ARITY["diff"] = 2


@dataclass(frozen=True)
class Token:
    kind: str  # "num", "name", "op", "end"
    text: str
    position: int


def tokenize(source: str) -> List[Token]:
    tokens: List[Token] = []
    idx = 0
    n = len(source)
    while idx < n:
        c = source[idx]
        if c.isspace():
            idx += 1
            continue
        start = idx
        if c.isdigit() or (c == "." and idx + 1 < n and source[idx + 1].isdigit()):
            while idx < n and (source[idx].isdigit() or source[idx] == "."):
                idx += 1
            if idx < n and source[idx] in "eE":
                look = idx + 1
                if look < n and source[look] in "+-":
                    look += 1
                if look < n and source[look].isdigit():
                    idx = look
                    while idx < n and source[idx].isdigit():
                        idx += 1
            text = source[start:idx]
            try:
                float(text)
            except ValueError:
                raise ParseError(f"Malformed number {text!r}", start)
            tokens.append(Token("num", text, start))
            continue
        if c.isalpha() or c == "_":
            while idx < n and (source[idx].isalnum() or source[idx] == "_"):
                idx += 1
            tokens.append(Token("name", source[start:idx], start))
            continue
        two = source[idx:idx + 2]
        if two in ("<=", ">=", "**"):
            tokens.append(Token("op", "^" if two == "**" else two, start))
            idx += 2
            continue
        if c in "+-*/^(),<>":
            tokens.append(Token("op", c, start))
            idx += 1
            continue
        raise ParseError(f"Unexpected character {c!r}", start)
    tokens.append(Token("end", "", n))
    return tokens


class _Parser:
    def __init__(self, source, coords, definitions, parameters, functions, stack):
        self.tokens = tokenize(source)
        self.pos = 0
        self.coords = tuple(coords)
        self.definitions = definitions
        self.parameters = parameters
        self.functions = functions
        self.stack = stack

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, text: str, message: str) -> Token:
        tok = self.peek()
        if tok.kind != "op" or tok.text != text:
            raise ParseError(message, tok.position)
        return self.advance()

    def parse(self) -> Node:
        node = self.expression(0)
        tok = self.peek()
        if tok.kind != "end":
            raise ParseError(f"Unexpected token {tok.text!r}", tok.position)
        _reject_stray_comparisons(node, guard=False, position=0)
        return node

    def expression(self, min_prec: int) -> Node:
        lhs = self.atom()
        while True:
            tok = self.peek()
            if tok.kind != "op" or tok.text not in OPERATOR_PREC:
                return lhs
            prec = OPERATOR_PREC[tok.text]
            if prec < min_prec:
                return lhs
            self.advance()
            next_prec = prec + 1 if OPERATOR_ASSOC[tok.text] == "left" else prec
            rhs = self.expression(next_prec)
            if tok.text in COMPARISONS:
                lhs = Compare(tok.text, lhs, rhs)
            else:
                lhs = BinOp(tok.text, lhs, rhs)

    def atom(self) -> Node:
        tok = self.advance()
        if tok.kind == "end":
            raise ParseError("Unexpected end of input", tok.position)
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.kind == "op":
            if tok.text == "-":
                return Neg(self.expression(UNARY_MINUS_PREC))
            if tok.text == "(":
                node = self.expression(0)
                self.expect(")", "Expected closing parenthesis")
                return node
            raise ParseError(f"Unexpected operator {tok.text!r}", tok.position)
        name = tok.text
        nxt = self.peek()
        if nxt.kind == "op" and nxt.text == "(":
            self.advance()
            return self.call(name, tok.position)
        return self.identifier(name, tok.position)

    def arguments(self) -> List[Node]:
        args = []
        if self.peek().kind == "op" and self.peek().text == ")":
            self.advance()
            return args
        args.append(self.expression(0))
        while self.peek().kind == "op" and self.peek().text == ",":
            self.advance()
            args.append(self.expression(0))
        self.expect(")", "Expected closing parenthesis in function call")
        return args

    def call(self, name: str, position: int) -> Node:
        if name == "diff":
            arg_start = self.pos
            args = self.arguments()
            if len(args) != 2:
                raise ParseError(f"diff expects 2 arguments, got {len(args)}", position)
            target = args[1]
            if not isinstance(target, Var):
                raise ParseError("diff needs a coordinate name as second argument",
                                 self.tokens[arg_start].position)
            return Diff(args[0], target.index, target.name)
        args = self.arguments()
        if name == "piecewise":
            if len(args) < 3 or len(args) % 2 == 0:
                raise ParseError("piecewise expects guard, value pairs and a default", position)
            branches = tuple((args[i], args[i + 1]) for i in range(0, len(args) - 1, 2))
            for guard, _ in branches:
                if not isinstance(guard, Compare):
                    raise ParseError("piecewise guards must be comparisons", position)
            return Piecewise(branches, args[-1])
        if name in ARITY:
            if len(args) != ARITY[name]:
                raise ParseError(f"{name} expects {ARITY[name]} argument(s), got {len(args)}", position)
            return Call(name, tuple(args))
        if name in self.functions:
            fn = self.functions[name]
            if len(args) != fn.arity:
                raise ParseError(f"{name} expects {fn.arity} argument(s), got {len(args)}", position)
            return Opaque(fn, tuple(args))
        raise ParseError(f"Unknown function {name!r}", position)

    def identifier(self, name: str, position: int) -> Node:
        if name in self.coords:
            return Var(self.coords.index(name), name)
        if name == "pi":
            return Num(math.pi)
        if name in self.parameters:
            return Num(float(self.parameters[name]))
        if name in self.definitions:
            if name in self.stack:
                raise ParseError(f"Recursive definition of {name!r}", position)
            body = self.definitions[name]
            text = str(body) if isinstance(body, Expression) else body
            sub = _Parser(text, self.coords, self.definitions, self.parameters,
                          self.functions, self.stack + (name,))
            try:
                return sub.parse()
            except ParseError as err:
                raise ParseError(f"in definition {name!r}: {err}", position)
        raise ParseError(f"Unknown identifier {name!r}", position)


def _reject_stray_comparisons(node: Node, guard: bool, position: int):
    if isinstance(node, Compare) and not guard:
        raise ParseError("Comparison outside a piecewise guard", position)
    if isinstance(node, Piecewise):
        for g, value in node.branches:
            _reject_stray_comparisons(g.left, False, position)
            _reject_stray_comparisons(g.right, False, position)
            _reject_stray_comparisons(value, False, position)
        _reject_stray_comparisons(node.default, False, position)
        return
    for child in node.children():
        _reject_stray_comparisons(child, False, position)


def parse(source: str, coords: Sequence[str],
          definitions: Optional[Mapping[str, Union[str, Expression]]] = None,
          parameters: Optional[Mapping[str, float]] = None,
          functions: Optional[Mapping[str, OpaqueFunction]] = None) -> Expression:
    """
    Parse expression text over the given coordinates.

    Args:
        source: expression text in the documented grammar
        coords: ordered coordinate names of the chart
        definitions: named sub-expressions, inlined at parse time
        parameters: named constants
        functions: opaque numeric functions callable by name

    Returns:
        Expression bound to ``coords``
    """
    if not isinstance(source, str):
        source = repr(float(source))
    parser = _Parser(source, coords, dict(definitions or {}), dict(parameters or {}),
                     dict(functions or {}), ())
    return Expression(parser.parse(), coords)


def constant_value(source: Union[str, float], parameters: Optional[Mapping[str, float]] = None) -> float:
    """Evaluate a coordinate-free expression such as ``2*pi - 0.05``."""
    if isinstance(source, (int, float)):
        return float(source)
    return parse(source, (), parameters=parameters).evaluate(np.zeros(0))


def eval_dual(expr: Expression, point, seed) -> Dual:
    return expr.eval_dual(point, seed)


def gradient(expr: Expression, point) -> np.ndarray:
    return expr.gradient(point)


def call(name: str, *args: Expression) -> Expression:
    """Apply a builtin function to expressions sharing one coordinate list."""
    if ARITY.get(name) != len(args) or name == "diff":
        raise ParseError(f"{name} cannot be applied to {len(args)} argument(s)")
    coords = args[0].coords
    if any(a.coords != coords for a in args):
        raise ValueError("expressions live on different coordinate lists")
    return Expression(Call(name, tuple(a.root for a in args)), coords)
