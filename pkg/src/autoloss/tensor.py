"""Forward evaluation of loss expressions and reverse-mode differentiation.

Values are float64 numpy arrays shaped ``()``, ``(B,)`` or ``(B, C)``.  A
forward pass records every primitive on a :class:`Tape`; identical subtrees
are evaluated once and their adjoints accumulate at the shared entry.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from autoloss import ops
from autoloss.expr import INPUTS, Const, Input, LossExpr, Node, Unary, normalize_branch
from autoloss.ops import ShapeMismatch

__all__ = [
    "EvalContext", "Tape", "Evaluation", "TapeConsumed", "ShapeMismatch",
    "forward", "backward", "gradient", "numerical_gradient", "kink_distance",
]


class TapeConsumed(RuntimeError):
    """A tape supports exactly one backward pass."""


@dataclass(frozen=True)
class EvalContext:
    """Bindings of the branch's input symbols to arrays."""

    bindings: dict[str, np.ndarray]
    branch: str

    def __post_init__(self):
        object.__setattr__(self, "branch", normalize_branch(self.branch))
        missing = set(INPUTS[self.branch]) - set(self.bindings)
        if missing:
            raise ValueError(f"context is missing {sorted(missing)}")

    @property
    def batch_size(self) -> int:
        return int(self.bindings[INPUTS[self.branch][0]].shape[0])

    def __getitem__(self, symbol: str) -> np.ndarray:
        return self.bindings[symbol]

    def replace(self, **updates: np.ndarray) -> "EvalContext":
        b = dict(self.bindings)
        for k, v in updates.items():
            b[k] = np.asarray(v, dtype=np.float64)
        return EvalContext(b, self.branch)

    @classmethod
    def classification(cls, x, y, w=None) -> "EvalContext":
        """``x`` logits and ``y`` targets as B x C; ``w`` per-sample IoU (default 1)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        y = np.atleast_2d(np.asarray(y, dtype=np.float64))
        if x.shape != y.shape:
            raise ShapeMismatch(f"x {x.shape} and y {y.shape} differ")
        if w is None:
            w = np.ones(x.shape[0])
        w = np.asarray(w, dtype=np.float64).reshape(-1)
        if w.shape[0] != x.shape[0]:
            raise ShapeMismatch(f"w has {w.shape[0]} rows, x has {x.shape[0]}")
        return cls({"x": x, "y": y, "w": w}, "cls")

    @classmethod
    def regression(cls, i, u, e, validate: bool = True) -> "EvalContext":
        i, u, e = (np.atleast_1d(np.asarray(a, dtype=np.float64)) for a in (i, u, e))
        if not i.shape == u.shape == e.shape or i.ndim != 1:
            raise ShapeMismatch(f"i, u, e must be equal vectors, got {i.shape}, {u.shape}, {e.shape}")
        if validate:
            tol = 1e-9 * np.maximum(1.0, e)
            if np.any(i < -tol) or np.any(i > u + tol) or np.any(u > e + tol) or np.any(u <= 0):
                raise ValueError("regression inputs must satisfy 0 <= i <= u <= e, u > 0")
        return cls({"i": i, "u": u, "e": e}, "reg")


@dataclass
class Tape:
    """Primitive records in execution order.

    ``entries[k]`` is ``(kind, op, args)`` where kind is one of "input",
    "const", "unary", "binary" and args are indices of earlier entries (or the
    symbol name for inputs).
    """

    entries: list[tuple] = field(default_factory=list)
    values: list[np.ndarray] = field(default_factory=list)
    inputs: dict[str, int] = field(default_factory=dict)
    shapes: dict[str, tuple] = field(default_factory=dict)
    output: int = -1
    batch_size: int = 0
    epsilon: float = ops.DEFAULT_EPSILON
    consumed: bool = False

    def push(self, entry: tuple, value: np.ndarray) -> int:
        self.entries.append(entry)
        self.values.append(value)
        return len(self.entries) - 1


class Evaluation(NamedTuple):
    value: float
    tape: Tape
    per_sample: np.ndarray

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.value))


def _eval(node: Node, ctx: EvalContext, tape: Tape, memo: dict | None) -> int:
    if memo is not None:
        hit = memo.get(node)
        if hit is not None:
            return hit
    if isinstance(node, Input):
        if node.symbol in tape.inputs:
            return tape.inputs[node.symbol]
        idx = tape.push(("input", node.symbol, ()), ctx[node.symbol])
        tape.inputs[node.symbol] = idx
    elif isinstance(node, Const):
        idx = tape.push(("const", node.value, ()), np.asarray(float(node.value)))
    elif isinstance(node, Unary):
        a = _eval(node.child, ctx, tape, memo)
        idx = tape.push(("unary", node.op, (a,)), ops.apply_unary(node.op, tape.values[a]))
    else:
        a = _eval(node.left, ctx, tape, memo)
        b = _eval(node.right, ctx, tape, memo)
        out = ops.apply_binary(node.op, tape.values[a], tape.values[b], tape.epsilon)
        idx = tape.push(("binary", node.op, (a, b)), out)
    if memo is not None:
        memo[node] = idx
    return idx


def _per_sample(out: np.ndarray, batch: int) -> np.ndarray:
    if out.ndim == 2:
        return out.sum(axis=1)
    if out.ndim == 1:
        if out.shape[0] != batch:
            raise ShapeMismatch(f"vector output of length {out.shape[0]} for batch {batch}")
        return out
    return np.full(batch, float(out))


def forward(expr: LossExpr, ctx: EvalContext, *, epsilon: float = ops.DEFAULT_EPSILON,
            memoize: bool = True) -> Evaluation:
    """Evaluate ``expr`` on ``ctx``.

    Matrix outputs are summed over classes, then all per-sample losses are
    averaged over the batch.  NaN and inf are returned, not raised.
    """
    if normalize_branch(expr.branch) != ctx.branch:
        raise ValueError(f"{expr.branch} expression evaluated on a {ctx.branch} context")
    tape = Tape(batch_size=ctx.batch_size, epsilon=epsilon,
                shapes={s: ctx[s].shape for s in INPUTS[ctx.branch]})
    tape.output = _eval(expr.root, ctx, tape, {} if memoize else None)
    with np.errstate(all="ignore"):
        per_sample = _per_sample(tape.values[tape.output], tape.batch_size)
        value = float(per_sample.mean())
    return Evaluation(value, tape, per_sample)


def backward(tape: Tape, wrt: Iterable[str] | None = None) -> dict[str, np.ndarray]:
    """Adjoints of the batch-mean loss with respect to input symbols.

    Symbols absent from the expression get zero adjoints.
    """
    if tape.consumed:
        raise TapeConsumed("backward already ran on this tape")
    tape.consumed = True
    wrt = list(tape.shapes) if wrt is None else list(wrt)
    out = tape.values[tape.output]
    b = tape.batch_size
    adj: list[np.ndarray | None] = [None] * len(tape.entries)
    adj[tape.output] = np.full(out.shape, 1.0 / b) if out.ndim else np.asarray(1.0)

    with np.errstate(all="ignore"):
        for k in range(tape.output, -1, -1):
            g = adj[k]
            if g is None:
                continue
            kind, op, args = tape.entries[k]
            if kind == "unary":
                (a,) = args
                ga = ops.unary_vjp(op, tape.values[a], tape.values[k], g)
                _accumulate(adj, a, ga)
            elif kind == "binary":
                a, c = args
                ga, gc = ops.binary_vjp(op, tape.values[a], tape.values[c], g, tape.epsilon)
                _accumulate(adj, a, ga)
                _accumulate(adj, c, gc)

    grads = {}
    for s in wrt:
        if s not in tape.shapes:
            raise KeyError(f"{s!r} is not an input of this tape")
        idx = tape.inputs.get(s)
        g = adj[idx] if idx is not None else None
        grads[s] = np.zeros(tape.shapes[s]) if g is None else np.array(g, dtype=np.float64)
    return grads


def _accumulate(adj: list, idx: int, g: np.ndarray) -> None:
    if adj[idx] is None:
        adj[idx] = np.array(g, dtype=np.float64)
    else:
        adj[idx] = adj[idx] + g


def gradient(expr: LossExpr, ctx: EvalContext, wrt: Iterable[str] | None = None
             ) -> tuple[float, dict[str, np.ndarray]]:
    ev = forward(expr, ctx)
    return ev.value, backward(ev.tape, wrt)


def _central_difference(expr: LossExpr, ctx: EvalContext, symbol: str, h: float) -> np.ndarray:
    base = ctx[symbol]
    grad = np.zeros_like(base)
    flat = grad.reshape(-1)
    for j in range(base.size):
        bumped = base.copy().reshape(-1)
        bumped[j] += h
        up = forward(expr, ctx.replace(**{symbol: bumped.reshape(base.shape)})).value
        bumped[j] -= 2 * h
        down = forward(expr, ctx.replace(**{symbol: bumped.reshape(base.shape)})).value
        flat[j] = (up - down) / (2 * h)
    return grad


def numerical_gradient(expr: LossExpr, ctx: EvalContext, symbol: str, h: float = 1e-5,
                       richardson: bool = True) -> np.ndarray:
    """Finite-difference derivative of the batch-mean loss w.r.t. ``symbol``.

    With ``richardson`` the central differences at h and h/2 are combined into
    a fourth-order estimate, which stays accurate for inputs not much larger
    than h (e.g. Log of a small intersection area).
    """
    coarse = _central_difference(expr, ctx, symbol, h)
    if not richardson:
        return coarse
    fine = _central_difference(expr, ctx, symbol, h / 2)
    return (4.0 * fine - coarse) / 3.0


_KINKED_UNARY = ("Abs", "Relu", "Sqrt", "Log")


def kink_distance(tape: Tape) -> float:
    """Smallest distance of any intermediate value to a non-smooth point or pole.

    Covers Abs/Relu/Sqrt/Log arguments and Div denominators.
    """
    best = np.inf
    for kind, op, args in tape.entries:
        if kind == "unary" and op in _KINKED_UNARY:
            arg = tape.values[args[0]]
        elif kind == "binary" and op == "Div":
            arg = tape.values[args[1]] + tape.epsilon
        else:
            continue
        if arg.size:
            with np.errstate(invalid="ignore"):
                best = min(best, float(np.min(np.abs(arg))))
    return best
