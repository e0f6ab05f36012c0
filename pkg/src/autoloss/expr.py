"""Loss expressions: immutable trees, the prefix-call DSL, and tree utilities.

Node references are preorder indices (root is 0).  Trees are the mutable
representation; sharing of identical subtrees happens at evaluation time.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterator, Union

import numpy as np

from autoloss import ops

BRANCHES = ("cls", "reg")
INPUTS = {"cls": ("x", "y", "w"), "reg": ("i", "u", "e")}
CONSTANTS = (1, 2, 3)

MAX_NODES = 40
MAX_DEPTH = 10

_BRANCH_ALIASES = {
    "cls": "cls", "classification": "cls",
    "reg": "reg", "regression": "reg",
}


def normalize_branch(branch: str) -> str:
    try:
        return _BRANCH_ALIASES[branch.lower()]
    except (KeyError, AttributeError):
        raise ValueError(f"unknown branch {branch!r}") from None


# -- errors -------------------------------------------------------------------

class ExprError(Exception):
    pass


class DslSyntaxError(ExprError):
    def __init__(self, message: str, text: str = "", pos: int = 0):
        self.message = message
        self.text = text
        self.pos = pos
        super().__init__(f"{message} at position {pos}")

    def pretty(self) -> str:
        """Message with the offending text and a caret under ``pos``."""
        return f"{self.message} at position {self.pos}\n  {self.text}\n  {' ' * self.pos}^"


class UnknownOperator(DslSyntaxError):
    pass


class ArityMismatch(DslSyntaxError):
    pass


class WrongBranchSymbol(DslSyntaxError):
    pass


class LimitExceeded(ExprError):
    pass


class DepthLimitExceeded(LimitExceeded):
    pass


class NodeNotFound(ExprError, IndexError):
    pass


# -- nodes --------------------------------------------------------------------

@dataclass(frozen=True)
class Limits:
    max_nodes: int = MAX_NODES
    max_depth: int = MAX_DEPTH

    def admits(self, size: int, depth: int) -> bool:
        return size <= self.max_nodes and depth <= self.max_depth


DEFAULT_LIMITS = Limits()


@dataclass(frozen=True)
class _Node:
    size: int = field(init=False, compare=False, repr=False)
    depth: int = field(init=False, compare=False, repr=False)
    _hash: int = field(init=False, compare=False, repr=False)

    def __hash__(self):
        return self._hash

    def children(self) -> tuple["Node", ...]:
        return ()


@dataclass(frozen=True, eq=True)
class Input(_Node):
    symbol: str

    def __post_init__(self):
        object.__setattr__(self, "size", 1)
        object.__setattr__(self, "depth", 1)
        object.__setattr__(self, "_hash", hash(("in", self.symbol)))

    __hash__ = _Node.__hash__


@dataclass(frozen=True, eq=True)
class Const(_Node):
    value: int

    def __post_init__(self):
        if self.value not in CONSTANTS:
            raise ValueError(f"constants are restricted to {CONSTANTS}, got {self.value!r}")
        object.__setattr__(self, "size", 1)
        object.__setattr__(self, "depth", 1)
        object.__setattr__(self, "_hash", hash(("const", self.value)))

    __hash__ = _Node.__hash__


@dataclass(frozen=True, eq=True)
class Unary(_Node):
    op: str
    child: "Node"

    def __post_init__(self):
        object.__setattr__(self, "size", 1 + self.child.size)
        object.__setattr__(self, "depth", 1 + self.child.depth)
        object.__setattr__(self, "_hash", hash((self.op, self.child._hash)))

    __hash__ = _Node.__hash__

    def children(self):
        return (self.child,)


@dataclass(frozen=True, eq=True)
class Binary(_Node):
    op: str
    left: "Node"
    right: "Node"

    def __post_init__(self):
        object.__setattr__(self, "size", 1 + self.left.size + self.right.size)
        object.__setattr__(self, "depth", 1 + max(self.left.depth, self.right.depth))
        object.__setattr__(self, "_hash", hash((self.op, self.left._hash, self.right._hash)))

    __hash__ = _Node.__hash__

    def children(self):
        return (self.left, self.right)


Node = Union[Input, Const, Unary, Binary]


@dataclass(frozen=True)
class LossExpr:
    """A rooted expression tree tagged with the branch it belongs to."""

    root: Node
    branch: str

    @property
    def size(self) -> int:
        return self.root.size

    @property
    def depth(self) -> int:
        return self.root.depth

    def nodes(self) -> list[Node]:
        """Nodes in preorder; list index is the node reference."""
        return list(iter_preorder(self.root))

    def node_at(self, ref: int) -> Node:
        nodes = self.nodes()
        if not 0 <= ref < len(nodes):
            raise NodeNotFound(f"node {ref} not in expression of size {len(nodes)}")
        return nodes[ref]

    def symbols(self) -> set[str]:
        return {n.symbol for n in iter_preorder(self.root) if isinstance(n, Input)}

    def __str__(self):
        return to_string(self)


def iter_preorder(node: Node) -> Iterator[Node]:
    stack = [node]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(reversed(n.children()))


def make(root: Node, branch: str, limits: Limits = DEFAULT_LIMITS) -> LossExpr:
    """Wrap ``root`` as a LossExpr after branch and limit checks."""
    branch = normalize_branch(branch)
    allowed = ops.registry(branch)
    for n in iter_preorder(root):
        if isinstance(n, Input) and n.symbol not in INPUTS[branch]:
            raise WrongBranchSymbol(f"symbol {n.symbol.upper()} is not a {branch} input")
        if isinstance(n, (Unary, Binary)) and n.op not in allowed:
            raise UnknownOperator(f"operator {n.op} is not available in the {branch} branch")
    if root.depth > limits.max_depth:
        raise DepthLimitExceeded(f"depth {root.depth} exceeds {limits.max_depth}")
    if root.size > limits.max_nodes:
        raise LimitExceeded(f"size {root.size} exceeds {limits.max_nodes}")
    return LossExpr(root, branch)


# -- DSL ----------------------------------------------------------------------

_OP_NAMES = {name.lower(): name for name in ops.UNARY_OPS + ops.BINARY_OPS}
_INPUT_NAMES = {s for b in BRANCHES for s in INPUTS[b]}


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos, n = 0, len(text)
    while pos < n:
        ch = text[pos]
        if ch.isspace():
            pos += 1
        elif ch in "(),":
            tokens.append((ch, ch, pos))
            pos += 1
        elif ch.isascii() and ch.isalpha():
            start = pos
            while pos < n and text[pos].isascii() and text[pos].isalnum():
                pos += 1
            tokens.append(("ident", text[start:pos], start))
        elif ch.isdigit():
            start = pos
            while pos < n and text[pos].isdigit():
                pos += 1
            tokens.append(("int", text[start:pos], start))
        else:
            raise DslSyntaxError(f"unexpected character {ch!r}", text, pos)
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str, branch: str, limits: Limits):
        self.text = text
        self.branch = branch
        self.limits = limits
        self.allowed = ops.registry(branch)
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self, kind: str):
        tok = self.tokens[self.i]
        if tok[0] != kind:
            want = "end of input" if kind == "end" else repr(kind)
            got = "end of input" if tok[0] == "end" else repr(tok[1])
            raise DslSyntaxError(f"expected {want}, found {got}", self.text, tok[2])
        self.i += 1
        return tok

    def expr(self, depth: int) -> Node:
        if depth > self.limits.max_depth:
            raise DepthLimitExceeded(
                f"expression deeper than {self.limits.max_depth}", self.text, self.peek()[2])
        kind, value, pos = self.peek()
        if kind == "int":
            self.i += 1
            if value not in ("1", "2", "3"):
                raise DslSyntaxError(f"integer constant must be 1, 2 or 3, got {value}", self.text, pos)
            return Const(int(value))
        if kind != "ident":
            got = "end of input" if kind == "end" else repr(value)
            raise DslSyntaxError(f"expected an expression, found {got}", self.text, pos)
        self.i += 1
        lower = value.lower()
        if self.peek()[0] != "(":
            if lower in _OP_NAMES:
                raise ArityMismatch(
                    f"operator {_OP_NAMES[lower]} takes {ops.arity(_OP_NAMES[lower])} argument(s), got 0",
                    self.text, pos)
            if lower in _INPUT_NAMES:
                if lower not in INPUTS[self.branch]:
                    raise WrongBranchSymbol(
                        f"symbol {value} is not a {self.branch} input", self.text, pos)
                return Input(lower)
            raise UnknownOperator(f"unknown identifier {value!r}", self.text, pos)
        name = _OP_NAMES.get(lower)
        if name is None:
            raise UnknownOperator(f"unknown operator {value!r}", self.text, pos)
        if name not in self.allowed:
            raise UnknownOperator(
                f"operator {name} is not available in the {self.branch} branch", self.text, pos)
        self.take("(")
        args = [self.expr(depth + 1)]
        while self.peek()[0] == ",":
            self.i += 1
            args.append(self.expr(depth + 1))
        self.take(")")
        want = ops.arity(name)
        if len(args) != want:
            raise ArityMismatch(
                f"operator {name} takes {want} argument(s), got {len(args)}", self.text, pos)
        if want == 1:
            return Unary(name, args[0])
        return Binary(name, args[0], args[1])


def parse(text: str, branch: str, limits: Limits = DEFAULT_LIMITS) -> LossExpr:
    """Parse a prefix-call DSL string such as ``Add(1,Neg(Div(I,U)))``."""
    branch = normalize_branch(branch)
    p = _Parser(text, branch, limits)
    root = p.expr(1)
    p.take("end")
    if root.size > limits.max_nodes:
        raise LimitExceeded(f"size {root.size} exceeds {limits.max_nodes}")
    return LossExpr(root, branch)


def _node_string(node: Node) -> str:
    if isinstance(node, Input):
        return node.symbol.upper()
    if isinstance(node, Const):
        return str(node.value)
    return f"{node.op}({','.join(_node_string(c) for c in node.children())})"


def to_string(expr: LossExpr | Node) -> str:
    root = expr.root if isinstance(expr, LossExpr) else expr
    return _node_string(root)


# -- canonical form -----------------------------------------------------------

def _canonical(node: Node) -> str:
    if isinstance(node, (Input, Const)):
        return _node_string(node)
    parts = [_canonical(c) for c in node.children()]
    if node.op in ops.COMMUTATIVE:
        parts.sort()
    return f"{node.op}({','.join(parts)})"


def canonical_string(expr: LossExpr) -> str:
    return _canonical(expr.root)


def canonical_key(expr: LossExpr) -> str:
    """Process-stable key; Add/Mul children are order-normalized."""
    text = f"{expr.branch}:{_canonical(expr.root)}"
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# -- structural edits ---------------------------------------------------------

def _replace(node: Node, target: int, new: Node, counter: list[int]) -> Node:
    here = counter[0]
    counter[0] += 1
    if here == target:
        counter[0] += node.size - 1
        return new
    if here + node.size <= target:
        counter[0] += node.size - 1
        return node
    if isinstance(node, Unary):
        return Unary(node.op, _replace(node.child, target, new, counter))
    if isinstance(node, Binary):
        left = _replace(node.left, target, new, counter)
        right = _replace(node.right, target, new, counter)
        return Binary(node.op, left, right)
    return node


def replace_subtree(expr: LossExpr, at: int, with_: LossExpr | Node,
                    limits: Limits = DEFAULT_LIMITS) -> LossExpr:
    """Return a copy of ``expr`` with the subtree at preorder ``at`` replaced."""
    if not 0 <= at < expr.size:
        raise NodeNotFound(f"node {at} not in expression of size {expr.size}")
    if isinstance(with_, LossExpr):
        if with_.branch != expr.branch:
            raise WrongBranchSymbol(f"cannot graft a {with_.branch} subtree into a {expr.branch} expression")
        new = with_.root
    else:
        new = with_
    root = _replace(expr.root, at, new, [0])
    if root.depth > limits.max_depth:
        raise DepthLimitExceeded(f"depth {root.depth} exceeds {limits.max_depth}")
    if root.size > limits.max_nodes:
        raise LimitExceeded(f"size {root.size} exceeds {limits.max_nodes}")
    return make(root, expr.branch, limits)


def subtree_depths(expr: LossExpr) -> list[int]:
    """Depth (root = 1) of every node, in preorder."""
    out = []
    stack = [(expr.root, 1)]
    while stack:
        n, d = stack.pop()
        out.append(d)
        stack.extend((c, d + 1) for c in reversed(n.children()))
    return out


# -- random generation --------------------------------------------------------

def leaves(branch: str) -> list[Node]:
    branch = normalize_branch(branch)
    return [Input(s) for s in INPUTS[branch]] + [Const(c) for c in CONSTANTS]


def symbol_table(branch: str) -> list[tuple[str, int]]:
    """All (name, arity) choices of ``branch``, in a fixed order."""
    branch = normalize_branch(branch)
    table = [(s.upper(), 0) for s in INPUTS[branch]] + [(str(c), 0) for c in CONSTANTS]
    allowed = ops.registry(branch)
    table += [(op, 1) for op in ops.UNARY_OPS if op in allowed]
    table += [(op, 2) for op in ops.BINARY_OPS if op in allowed]
    return table


def symbol_distribution(branch: str, budget: int, depth_left: int | None = None) -> np.ndarray:
    """Probability of each ``symbol_table`` entry at a node with ``budget`` nodes left.

    Choices are uniform over the symbols whose minimal subtree fits: leaves
    always, unary ops when at least 2 nodes and 2 levels remain, binary ops
    when at least 3 nodes and 2 levels remain.
    """
    table = symbol_table(branch)
    can_grow = depth_left is None or depth_left >= 2
    fits = np.array([
        a == 0 or (can_grow and budget >= a + 1) for _, a in table
    ], dtype=float)
    return fits / fits.sum()


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _grow(branch: str, table, budget: int, depth_left: int, rng: np.random.Generator) -> Node:
    p = symbol_distribution(branch, budget, depth_left)
    name, a = table[rng.choice(len(table), p=p)]
    if a == 0:
        return Const(int(name)) if name.isdigit() else Input(name.lower())
    if a == 1:
        return Unary(name, _grow(branch, table, budget - 1, depth_left - 1, rng))
    left_budget = int(rng.integers(1, budget - 1))
    left = _grow(branch, table, left_budget, depth_left - 1, rng)
    right = _grow(branch, table, budget - 1 - left_budget, depth_left - 1, rng)
    return Binary(name, left, right)


def random_node(branch: str, rng, budget: int, max_depth: int = MAX_DEPTH) -> Node:
    if budget < 1:
        raise ValueError("size budget must be at least 1")
    branch = normalize_branch(branch)
    return _grow(branch, symbol_table(branch), budget, max_depth, _as_rng(rng))


def random_expr(branch: str, seed, budget: int, limits: Limits = DEFAULT_LIMITS) -> LossExpr:
    """Sample a tree of at most ``min(budget, max_nodes)`` nodes.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    branch = normalize_branch(branch)
    budget = min(budget, limits.max_nodes)
    return LossExpr(random_node(branch, seed, budget, limits.max_depth), branch)
