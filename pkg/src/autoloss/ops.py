"""Primitive operators: forward semantics, vector-Jacobian products, registries.

Arrays follow three layouts only: scalar ``()``, vector ``(B,)`` and matrix
``(B, C)``.  A vector meets a matrix row-wise (it expands along the class
axis).  Non-finite values are never masked here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

UNARY_OPS: tuple[str, ...] = (
    "Neg", "Exp", "Log", "Abs", "Sqrt", "Softmax", "Softplus", "Sig",
    "Gd", "Alf", "Erf", "Erfc", "Tanh", "Relu", "Sin", "Cos",
)
BINARY_OPS: tuple[str, ...] = ("Add", "Sub", "Mul", "Div", "Dot")

REGRESSION_UNARY: tuple[str, ...] = ("Neg", "Exp", "Log", "Abs", "Sqrt")
REGRESSION_BINARY: tuple[str, ...] = ("Add", "Sub", "Mul", "Div")

COMMUTATIVE: frozenset[str] = frozenset({"Add", "Mul"})

DEFAULT_EPSILON = 1e-12
SQRT_GRAD_EPS = 1e-12

_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)


class ShapeMismatch(ValueError):
    """Operands cannot be combined under the broadcasting rules."""


@dataclass(frozen=True)
class OpConfig:
    epsilon: float = DEFAULT_EPSILON
    registry_cls: frozenset[str] = field(
        default_factory=lambda: frozenset(UNARY_OPS + BINARY_OPS))
    registry_reg: frozenset[str] = field(
        default_factory=lambda: frozenset(REGRESSION_UNARY + REGRESSION_BINARY))

    def __post_init__(self):
        if not self.registry_reg <= self.registry_cls:
            raise ValueError("regression registry must be a subset of the classification registry")


DEFAULT_CONFIG = OpConfig()


def registry(branch: str, config: OpConfig = DEFAULT_CONFIG) -> frozenset[str]:
    """Operator names available to ``branch`` ("cls" or "reg")."""
    if branch == "cls":
        return config.registry_cls
    if branch == "reg":
        return config.registry_reg
    raise ValueError(f"unknown branch {branch!r}")


def arity(op: str) -> int:
    if op in _UNARY:
        return 1
    if op in _BINARY:
        return 2
    raise KeyError(op)


# -- broadcasting -------------------------------------------------------------

def broadcast_shape(sa: tuple, sb: tuple) -> tuple:
    """Result shape of an element-wise op, or ShapeMismatch."""
    if sa == sb:
        return sa
    if sa == ():
        return sb
    if sb == ():
        return sa
    if len(sa) == 1 and len(sb) == 2 and sa[0] == sb[0]:
        return sb
    if len(sa) == 2 and len(sb) == 1 and sb[0] == sa[0]:
        return sa
    raise ShapeMismatch(f"cannot broadcast {sa} with {sb}")


def _lift(a: np.ndarray, out_shape: tuple) -> np.ndarray:
    # vector[B] against matrix[B, C] expands along C
    if a.ndim == 1 and len(out_shape) == 2:
        return a[:, None]
    return a


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum an adjoint back down to an operand's shape."""
    if g.shape == shape:
        return g
    if shape == ():
        return np.asarray(g.sum())
    # vector[B] that was expanded along C
    return g.sum(axis=1)


def broadcast_binary(op: str, a: np.ndarray, b: np.ndarray,
                     epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    out_shape = broadcast_shape(a.shape, b.shape)
    x, y = _lift(a, out_shape), _lift(b, out_shape)
    with np.errstate(all="ignore"):
        if op == "Add":
            r = x + y
        elif op == "Sub":
            r = x - y
        elif op == "Mul":
            r = x * y
        elif op == "Div":
            r = x / (y + epsilon)
        else:
            raise KeyError(op)
    return np.broadcast_to(r, out_shape).astype(np.float64, copy=True)


# -- unary forward ------------------------------------------------------------

def _softmax(a: np.ndarray) -> np.ndarray:
    if a.ndim == 0:
        return np.asarray(1.0)
    axis = -1
    with np.errstate(all="ignore"):
        z = a - np.max(a, axis=axis, keepdims=True)
        ez = np.exp(z)
        return ez / ez.sum(axis=axis, keepdims=True)


def _alf_raw(a: np.ndarray) -> np.ndarray:
    big = np.abs(a) > 1.0
    safe = np.where(big, a, 1.0)
    return np.where(big, np.sign(a) / np.sqrt(1.0 + 1.0 / (safe * safe)),
                    a / np.sqrt(1.0 + a * a))


def apply_unary(op: str, a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    with np.errstate(all="ignore"):
        if op == "Neg":
            return -a
        if op == "Exp":
            return np.exp(a)
        if op == "Log":
            return np.log(a)
        if op == "Abs":
            return np.abs(a)
        if op == "Sqrt":
            return np.sqrt(a)
        if op == "Softmax":
            return _softmax(a)
        if op == "Softplus":
            return np.logaddexp(0.0, a)
        if op == "Sig":
            return special.expit(a)
        if op == "Gd":
            return 2.0 * np.arctan(np.tanh(a / 2.0)) / math.pi + 0.5
        if op == "Alf":
            return (_alf_raw(a) + 1.0) / 2.0
        if op == "Erf":
            return (special.erf(a) + 1.0) / 2.0
        if op == "Erfc":
            return special.erfc(a) / 2.0
        if op == "Tanh":
            return np.tanh(a)
        if op == "Relu":
            return np.maximum(a, 0.0)
        if op == "Sin":
            return np.sin(a)
        if op == "Cos":
            return np.cos(a)
    raise KeyError(op)


def apply_binary(op: str, a: np.ndarray, b: np.ndarray,
                 epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if op == "Dot":
        if a.ndim != 2 or b.ndim != 2 or a.shape != b.shape:
            raise ShapeMismatch(f"Dot needs two equal matrices, got {a.shape} and {b.shape}")
        with np.errstate(all="ignore"):
            return np.einsum("bc,bc->b", a, b)
    return broadcast_binary(op, a, b, epsilon)


# -- vector-Jacobian products -------------------------------------------------

def unary_vjp(op: str, a: np.ndarray, out: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Adjoint of ``a`` given output adjoint ``g``."""
    with np.errstate(all="ignore"):
        if op == "Neg":
            return -g
        if op == "Exp":
            return g * out
        if op == "Log":
            return g / a
        if op == "Abs":
            return g * np.sign(a)
        if op == "Sqrt":
            return g * 0.5 / np.sqrt(a + SQRT_GRAD_EPS)
        if op == "Softmax":
            if a.ndim == 0:
                return np.zeros_like(a)
            s = out
            return s * (g - np.sum(g * s, axis=-1, keepdims=True))
        if op == "Softplus":
            return g * special.expit(a)
        if op == "Sig":
            return g * out * (1.0 - out)
        if op == "Gd":
            # d gd/dx = sech(x)
            return g / (np.cosh(a) * math.pi)
        if op == "Alf":
            return g * 0.5 * np.power(1.0 + a * a, -1.5)
        if op == "Erf":
            return g * 0.5 * _TWO_OVER_SQRT_PI * np.exp(-a * a)
        if op == "Erfc":
            return -g * 0.5 * _TWO_OVER_SQRT_PI * np.exp(-a * a)
        if op == "Tanh":
            return g * (1.0 - out * out)
        if op == "Relu":
            return g * (a > 0.0)
        if op == "Sin":
            return g * np.cos(a)
        if op == "Cos":
            return -g * np.sin(a)
    raise KeyError(op)


def binary_vjp(op: str, a: np.ndarray, b: np.ndarray, g: np.ndarray,
               epsilon: float = DEFAULT_EPSILON) -> tuple[np.ndarray, np.ndarray]:
    """Adjoints of ``(a, b)`` given output adjoint ``g``."""
    with np.errstate(all="ignore"):
        if op == "Dot":
            return g[:, None] * b, g[:, None] * a
        shape = g.shape
        x, y = _lift(a, shape), _lift(b, shape)
        if op == "Add":
            ga, gb = g, g
        elif op == "Sub":
            ga, gb = g, -g
        elif op == "Mul":
            ga, gb = g * y, g * x
        elif op == "Div":
            d = y + epsilon
            ga, gb = g / d, -g * x / (d * d)
        else:
            raise KeyError(op)
        ga = np.broadcast_to(ga, shape)
        gb = np.broadcast_to(gb, shape)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)


_UNARY = frozenset(UNARY_OPS)
_BINARY = frozenset(BINARY_OPS)
