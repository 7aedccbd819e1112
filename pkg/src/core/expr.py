"""Arithmetic expressions over (t, x1..xd, v) used for problem coefficients.

Grammar, loosest binding first::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' unary)?
    primary := number | variable | name '(' expr (',' expr)* ')' | '(' expr ')'

`^` is right-associative and binds tighter than unary minus, so ``-x1^2``
is ``-(x1^2)`` and ``2^-t`` is accepted.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterator, NamedTuple, Optional, Sequence, Union

import numpy as np

from ..utils.exceptions import (
    ArityError, BindingError, DomainError, ExpressionSyntaxError,
    NonFiniteError, UnknownIdentifierError
)

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class Number:
    value: float

    @property
    def arity(self) -> int:
        return 0

    def __str__(self) -> str:
        return repr(float(self.value))


@dataclass(frozen=True)
class Variable:
    """`t`, `v`, or `xk` (index k, 1-based)."""
    name: str
    index: int = 0

    @property
    def arity(self) -> int:
        return 0

    def __str__(self) -> str:
        return f"x{self.index}" if self.name == "x" else self.name


@dataclass(frozen=True)
class Negate:
    operand: "Node"

    @property
    def arity(self) -> int:
        return 1

    def __str__(self) -> str:
        return f"(-({self.operand}))"


@dataclass(frozen=True)
class BinaryOp:
    op: str
    left: "Node"
    right: "Node"

    @property
    def arity(self) -> int:
        return 2

    def __str__(self) -> str:
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple

    @property
    def arity(self) -> int:
        return len(self.args)

    def __str__(self) -> str:
        return f"{self.name}({', '.join(str(arg) for arg in self.args)})"


Node = Union[Number, Variable, Negate, BinaryOp, Call]

# name -> (minimum arity, maximum arity or None for variadic)
BUILTINS: dict[str, tuple[int, Optional[int]]] = {
    "exp": (1, 1),
    "log": (1, 1),
    "sin": (1, 1),
    "cos": (1, 1),
    "tanh": (1, 1),
    "sqrt": (1, 1),
    "abs": (1, 1),
    "min": (2, None),
    "max": (2, None),
    "clip": (3, 3),
}

_UNARY_FUNCTIONS: dict[str, Callable[[ArrayLike], ArrayLike]] = {
    "exp": np.exp,
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "abs": np.abs,
}

_TOKEN_RE = re.compile(
    r"(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),])"
)
_X_RE = re.compile(r"x([1-9]\d*)")

_PRIMARY_START = ("number", "identifier", "'('", "'-'")


class Token(NamedTuple):
    kind: str
    text: str
    column: int


def tokenize(source: str) -> list[Token]:
    """Split source into tokens; columns are 1-based."""
    tokens: list[Token] = []
    idx = 0
    while idx < len(source):
        if source[idx].isspace():
            idx += 1
            continue
        match = _TOKEN_RE.match(source, idx)
        if not match:
            raise ExpressionSyntaxError(f"unexpected character '{source[idx]}'", idx + 1,
                                        source=source)
        kind = match.lastgroup
        tokens.append(Token(kind, match.group(kind), idx + 1))
        idx = match.end()
    tokens.append(Token("end", "", len(source) + 1))
    return tokens


class _Parser:
    """Recursive descent parser producing Node trees."""

    def __init__(self, source: str, dimension: int, allow_v: bool):
        self.source = source
        self.dimension = dimension
        self.allow_v = allow_v
        self.tokens = tokenize(source)
        self.pos = 0

    def parse(self) -> Node:
        node = self._expr()
        token = self._peek()
        if token.kind != "end":
            raise self._error(f"unexpected token '{token.text}'", token,
                              ("operator", "end of input"))
        return node

    def _peek(self) -> Token:
        return self.tokens[self.pos]

    def _advance(self) -> Token:
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def _at_op(self, *ops: str) -> bool:
        token = self._peek()
        return token.kind == "op" and token.text in ops

    def _error(self, message: str, token: Token, expected: Sequence[str]) -> ExpressionSyntaxError:
        if token.kind == "end":
            message = "unexpected end of input"
        return ExpressionSyntaxError(message, token.column, expected, source=self.source)

    def _expect(self, text: str) -> Token:
        token = self._peek()
        if token.kind == "op" and token.text == text:
            return self._advance()
        raise self._error(f"unexpected token '{token.text}'", token, (f"'{text}'",))

    def _expr(self) -> Node:
        node = self._term()
        while self._at_op("+", "-"):
            op = self._advance().text
            node = BinaryOp(op, node, self._term())
        return node

    def _term(self) -> Node:
        node = self._unary()
        while self._at_op("*", "/"):
            op = self._advance().text
            node = BinaryOp(op, node, self._unary())
        return node

    def _unary(self) -> Node:
        if self._at_op("-"):
            self._advance()
            return Negate(self._unary())
        return self._power()

    def _power(self) -> Node:
        base = self._primary()
        if self._at_op("^"):
            self._advance()
            return BinaryOp("^", base, self._unary())
        return base

    def _primary(self) -> Node:
        token = self._peek()
        if token.kind == "number":
            self._advance()
            return Number(float(token.text))
        if token.kind == "name":
            self._advance()
            if self._at_op("("):
                return self._call(token)
            return self._variable(token)
        if self._at_op("("):
            self._advance()
            node = self._expr()
            self._expect(")")
            return node
        raise self._error(f"unexpected token '{token.text}'", token, _PRIMARY_START)

    def _call(self, name_token: Token) -> Node:
        name = name_token.text
        if name not in BUILTINS:
            raise UnknownIdentifierError(name, "unknown function")
        self._expect("(")
        args = [self._expr()]
        while self._at_op(","):
            self._advance()
            args.append(self._expr())
        self._expect(")")

        low, high = BUILTINS[name]
        if len(args) < low or (high is not None and len(args) > high):
            expected = str(low) if low == high else f"{low} or more"
            raise ArityError(name, expected, len(args))
        return Call(name, tuple(args))

    def _variable(self, token: Token) -> Node:
        name = token.text
        if name == "t":
            return Variable("t")
        if name == "v":
            if not self.allow_v:
                raise UnknownIdentifierError(name, "the solution value 'v' is not allowed here")
            return Variable("v")
        match = _X_RE.fullmatch(name)
        if match:
            index = int(match.group(1))
            if index > self.dimension:
                raise UnknownIdentifierError(
                    name, f"state index exceeds dimension {self.dimension}"
                )
            return Variable("x", index)
        if name in BUILTINS:
            raise UnknownIdentifierError(name, "function used without arguments")
        raise UnknownIdentifierError(name)


def walk(node: Node) -> Iterator[Node]:
    """Yield every node of the tree, parents first."""
    yield node
    if isinstance(node, Negate):
        yield from walk(node.operand)
    elif isinstance(node, BinaryOp):
        yield from walk(node.left)
        yield from walk(node.right)
    elif isinstance(node, Call):
        for arg in node.args:
            yield from walk(arg)


def literal(value: float) -> Node:
    """Literal node for value; negatives become a negated literal."""
    value = float(value)
    if value < 0 or (value == 0 and np.signbit(value)):
        return Negate(Number(-value))
    return Number(value)


@dataclass(frozen=True)
class Bindings:
    """Point at which a scalar expression is evaluated."""
    t: float
    x: tuple
    v: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(value) for value in self.x))


@dataclass(frozen=True, eq=False)
class Expression:
    """Parsed expression with its declared dimension and v-usage."""
    root: Node
    dimension: int
    allows_v: bool
    source: str

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Expression):
            return NotImplemented
        return self.root == other.root and self.dimension == other.dimension

    def __hash__(self) -> int:
        return hash((self.root, self.dimension))

    def __str__(self) -> str:
        return self.source

    @cached_property
    def variables(self) -> frozenset:
        return frozenset(str(node) for node in walk(self.root) if isinstance(node, Variable))

    @property
    def uses_v(self) -> bool:
        return "v" in self.variables

    @property
    def is_constant(self) -> bool:
        return not self.variables

    def pretty(self) -> str:
        """Fully parenthesised source that re-parses to the same tree."""
        return str(self.root)

    def fix_v(self, value: float) -> "Expression":
        """The expression with `v` replaced by a literal."""
        root = _substitute_v(self.root, literal(value))
        return Expression(root, self.dimension, False, str(root))

    def shifted(self, offset: float) -> "Expression":
        """The expression plus a constant."""
        if offset < 0:
            root: Node = BinaryOp("-", self.root, Number(-float(offset)))
        else:
            root = BinaryOp("+", self.root, Number(float(offset)))
        return Expression(root, self.dimension, self.allows_v, str(root))

    def evaluate_batch(self, t: ArrayLike, x: np.ndarray, v: Optional[ArrayLike] = None,
                       counter=None) -> np.ndarray:
        """
        Evaluate at N points at once.

        Args:
            t: Time, scalar or shape (N,)
            x: States, shape (N, d) or a single state of shape (d,)
            v: Solution values, scalar or shape (N,); required iff `v` is referenced
            counter: Optional WorkCounter charged with N evaluations

        Returns:
            Array of shape (N,)

        Raises:
            DomainError: If an operation leaves its domain
            NonFiniteError: If the result contains NaN or Inf
        """
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        if x.ndim != 2 or x.shape[1] != self.dimension:
            raise BindingError(
                f"expression '{self.source}' expects states of dimension {self.dimension}, "
                f"got shape {x.shape}"
            )
        if self.uses_v and v is None:
            raise BindingError(f"expression '{self.source}' references v but no value was bound")

        count = x.shape[0]
        env = {"t": t, "x": x, "v": v}
        with np.errstate(all="ignore"):
            result = _evaluate(self.root, env)
        result = np.array(np.broadcast_to(result, (count,)), dtype=float)

        if not np.all(np.isfinite(result)):
            raise NonFiniteError(f"expression '{self.source}' produced a non-finite value")
        if counter is not None:
            counter.add(count)
        return result


def _substitute_v(node: Node, replacement: Node) -> Node:
    if isinstance(node, Variable) and node.name == "v":
        return replacement
    if isinstance(node, Negate):
        return Negate(_substitute_v(node.operand, replacement))
    if isinstance(node, BinaryOp):
        return BinaryOp(node.op, _substitute_v(node.left, replacement),
                        _substitute_v(node.right, replacement))
    if isinstance(node, Call):
        return Call(node.name, tuple(_substitute_v(arg, replacement) for arg in node.args))
    return node


def _evaluate(node: Node, env: dict) -> ArrayLike:
    if isinstance(node, Number):
        return np.float64(node.value)

    if isinstance(node, Variable):
        if node.name == "x":
            return env["x"][:, node.index - 1]
        return np.asarray(env[node.name], dtype=float)

    if isinstance(node, Negate):
        return -_evaluate(node.operand, env)

    if isinstance(node, BinaryOp):
        left = _evaluate(node.left, env)
        right = _evaluate(node.right, env)
        if node.op == "+":
            return left + right
        if node.op == "-":
            return left - right
        if node.op == "*":
            return left * right
        if node.op == "/":
            if np.any(right == 0):
                raise DomainError("division by zero", node)
            return left / right
        if np.any((left < 0) & (right != np.floor(right))):
            raise DomainError("negative base with non-integer exponent", node)
        if np.any((left == 0) & (right < 0)):
            raise DomainError("zero raised to a negative power", node)
        return np.power(left, right)

    args = [_evaluate(arg, env) for arg in node.args]
    if node.name in _UNARY_FUNCTIONS:
        return _UNARY_FUNCTIONS[node.name](args[0])
    if node.name == "log":
        if np.any(args[0] <= 0):
            raise DomainError("logarithm of a nonpositive number", node)
        return np.log(args[0])
    if node.name == "sqrt":
        if np.any(args[0] < 0):
            raise DomainError("square root of a negative number", node)
        return np.sqrt(args[0])
    if node.name == "min":
        return np.minimum.reduce(np.broadcast_arrays(*args))
    if node.name == "max":
        return np.maximum.reduce(np.broadcast_arrays(*args))
    value, low, high = args
    if np.any(low > high):
        raise DomainError("clip with lower bound above upper bound", node)
    return np.minimum(np.maximum(value, low), high)


def parse(source: str, d: int, allow_v: bool = False) -> Expression:
    """
    Parse source into an Expression over t, x1..xd and optionally v.

    Raises:
        ExpressionSyntaxError: With the 1-based column and the expected tokens
        ArityError: If a builtin receives the wrong number of arguments
        UnknownIdentifierError: For unknown names, `xk` with k > d, or `v` when disallowed
    """
    if d < 1:
        raise ValueError("dimension must be positive")
    if not source or not source.strip():
        raise ExpressionSyntaxError("empty expression", 1, _PRIMARY_START, source=source)
    root = _Parser(source, d, allow_v).parse()
    return Expression(root, d, allow_v, source)


def evaluate(e: Expression, b: Bindings) -> float:
    """Evaluate at a single point; v must be bound iff the expression references it."""
    if len(b.x) != e.dimension:
        raise BindingError(f"expected {e.dimension} state components, got {len(b.x)}")
    if b.v is not None and not e.uses_v:
        raise BindingError(f"expression '{e.source}' does not reference v")
    value = e.evaluate_batch(np.array([b.t]), np.array([b.x]), None if b.v is None else np.array([b.v]))
    return float(value[0])


def evaluate_gradient_fd(e: Expression, b: Bindings, step: float) -> np.ndarray:
    """Central finite-difference gradient with respect to x."""
    if step <= 0:
        raise ValueError("finite-difference step must be positive")
    if len(b.x) != e.dimension:
        raise BindingError(f"expected {e.dimension} state components, got {len(b.x)}")

    d = e.dimension
    base = np.array(b.x, dtype=float)
    shifts = np.eye(d) * step
    points = np.concatenate([base + shifts, base - shifts])
    v = None if b.v is None else np.full(2 * d, b.v)
    values = e.evaluate_batch(np.full(2 * d, b.t), points, v)
    return (values[:d] - values[d:]) / (2.0 * step)
