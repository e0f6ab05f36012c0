"""Named loss functions as DSL expressions, with closed-form references.

The closed forms below use plain numpy/scipy and never touch the expression
machinery, so they can serve as oracles for it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import special

from autoloss import boxes
from autoloss.expr import LossExpr, parse
from autoloss.tensor import EvalContext, forward


class UnknownLoss(KeyError):
    pass


# -- closed forms -------------------------------------------------------------

def _log_softmax(x: np.ndarray) -> np.ndarray:
    return x - special.logsumexp(x, axis=1, keepdims=True)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _gd01(x):
    return 2.0 * np.arctan(np.tanh(x / 2.0)) / math.pi + 0.5


def _erf01(x):
    return (np.vectorize(math.erf)(x) + 1.0) / 2.0


def _ce(ctx: EvalContext) -> float:
    return float(np.mean(-np.sum(ctx["y"] * _log_softmax(ctx["x"]), axis=1)))


def _cei(ctx: EvalContext) -> float:
    wy = ctx["w"][:, None] * ctx["y"]
    return float(np.mean(-np.sum(wy * _log_softmax(ctx["x"]), axis=1)))


def _bce(ctx: EvalContext) -> float:
    x, y = ctx["x"], ctx["y"]
    s = _sigmoid(x)
    per = -(y * np.log(s) + (1.0 - y) * np.log(1.0 - s))
    return float(np.mean(per.sum(axis=1)))


def _fli_terms(ctx: EvalContext) -> np.ndarray:
    x, y = ctx["x"], ctx["y"]
    s = _sigmoid(x)
    return y * (1.0 - s) * np.log(s) + (1.0 - y) * s * np.log(1.0 - s)


def _fl(ctx: EvalContext) -> float:
    return float(np.mean(-_fli_terms(ctx).sum(axis=1)))


def _fli(ctx: EvalContext) -> float:
    return float(np.mean(-ctx["w"] * _fli_terms(ctx).sum(axis=1)))


def _iou_loss(ctx: EvalContext) -> float:
    return float(np.mean(1.0 - ctx["i"] / ctx["u"]))


def _giou_loss(ctx: EvalContext) -> float:
    i, u, e = ctx["i"], ctx["u"], ctx["e"]
    return float(np.mean(1.0 - i / u + (e - u) / e))


def _a_cls(ctx: EvalContext) -> float:
    wy = (1.0 + np.sin(ctx["w"]))[:, None] * ctx["y"]
    return float(np.mean(-np.sum(wy * _log_softmax(ctx["x"]), axis=1)))


def _a_reg(ctx: EvalContext) -> float:
    i, u, e = ctx["i"], ctx["u"], ctx["e"]
    return float(np.mean((1.0 - i / u) + (1.0 - (i + 2.0) / e)))


def _b_cls(ctx: EvalContext) -> float:
    x, y = ctx["x"], ctx["y"]
    wy = ctx["w"][:, None] * y
    s = _sigmoid(x)
    per = -(wy * (1.0 + _erf01(_sigmoid(1.0 - y))) * np.log(s)
            + (_gd01(x) - wy) * (s - wy) * np.log(1.0 - s))
    return float(np.mean(per.sum(axis=1)))


def _b_reg(ctx: EvalContext) -> float:
    i, u, e = ctx["i"], ctx["u"], ctx["e"]
    num = 3 * e * u + 12 * e + 3 * i + 3 * u + 18
    den = -3 * e * u + i * u + u ** 2 - 15 * e + 5 * i + 5 * u
    return float(np.mean(num / den))


# -- registry -----------------------------------------------------------------

@dataclass(frozen=True)
class NamedLoss:
    name: str
    branch: str
    dsl: str
    role: str
    reference: Callable[[EvalContext], float] | None = None

    @cached_property
    def expr(self) -> LossExpr:
        return parse(self.dsl, self.branch)

    def __call__(self, ctx: EvalContext) -> float:
        return forward(self.expr, ctx).value


_FL_BODY = ("Add(Mul(Mul(Y,Sub(1,Sig(X))),Log(Sig(X))),"
            "Mul(Mul(Sub(1,Y),Sig(X)),Log(Sub(1,Sig(X)))))")

_ENTRIES = [
    NamedLoss("CE", "cls", "Neg(Dot(Y,Log(Softmax(X))))", "baseline", _ce),
    NamedLoss("BCE", "cls",
              "Neg(Add(Mul(Y,Log(Sig(X))),Mul(Sub(1,Y),Log(Sub(1,Sig(X))))))",
              "baseline", _bce),
    NamedLoss("FL", "cls", f"Neg({_FL_BODY})", "baseline", _fl),
    NamedLoss("CEI", "cls", "Neg(Dot(Mul(W,Y),Log(Softmax(X))))", "initial", _cei),
    NamedLoss("FLI", "cls", f"Neg(Mul(W,{_FL_BODY}))", "initial", _fli),
    NamedLoss("IoU", "reg", "Add(1,Neg(Div(I,U)))", "baseline", _iou_loss),
    NamedLoss("GIoU", "reg", "Add(Add(1,Neg(Div(I,U))),Div(Sub(E,U),E))", "initial", _giou_loss),
    NamedLoss("CSE-Autoloss-A-cls", "cls",
              "Neg(Dot(Mul(Add(1,Sin(W)),Y),Log(Softmax(X))))", "searched", _a_cls),
    NamedLoss("CSE-Autoloss-A-reg", "reg",
              "Add(Add(1,Neg(Div(I,U))),Add(1,Neg(Div(Add(I,2),E))))", "searched", _a_reg),
    NamedLoss("CSE-Autoloss-B-cls", "cls",
              "Neg(Add(Mul(Mul(Mul(W,Y),Add(1,Erf(Sig(Sub(1,Y))))),Log(Sig(X))),"
              "Mul(Mul(Sub(Gd(X),Mul(W,Y)),Sub(Sig(X),Mul(W,Y))),Log(Sub(1,Sig(X))))))",
              "searched", _b_cls),
    # 3(e(u+4)+i+u+6) / ((u+5)(i+u-3e)), the factored rational function
    NamedLoss("CSE-Autoloss-B-reg", "reg",
              "Div(Mul(3,Add(Add(Mul(E,Add(U,Add(1,3))),Add(I,U)),Add(3,3))),"
              "Mul(Add(U,Add(2,3)),Sub(Add(I,U),Mul(3,E))))",
              "searched", _b_reg),
]

LOSSES: dict[str, NamedLoss] = {entry.name: entry for entry in _ENTRIES}
_LOOKUP = {name.lower().replace("_", "-"): name for name in LOSSES}


def names(branch: str | None = None) -> list[str]:
    return [n for n, entry in LOSSES.items() if branch is None or entry.branch == branch]


def get(name: str) -> NamedLoss:
    key = _LOOKUP.get(name.lower().replace("_", "-"))
    if key is None:
        raise UnknownLoss(name)
    return LOSSES[key]


def reference_value(name: str, ctx: EvalContext) -> float:
    entry = get(name)
    if entry.reference is None:
        raise UnknownLoss(f"{name} has no closed-form reference")
    return entry.reference(ctx)


# Published search results in the prefix notation.  Strings using Z, Q or
# Square reference symbols that are never defined and do not parse.
PUBLISHED_STRINGS: list[tuple[str, str, str]] = [
    ("search reg loss3", "reg",
     "Add(1,Neg(Add(Div(I,U),Neg(Div(Add(Div(E,2),Neg(U)),E)))))"),
    ("finding1 loss1", "cls", "Neg(Dot(Mul(Y,Add(1,Z)),Log(Softmax(X))))"),
    ("find reg 2", "reg",
     "Add(1,Neg(Add(Div(I,U),Neg(Div(Add(E,Neg(U)),Exp(Exp(Add(Abs(E),Add(U,E)))))))))"),
    ("find reg 4", "reg",
     "Add(1,Neg(Add(Div(I,U),Neg(Div(Add(E,Neg(U)),Square(Neg(Sqrt(Square(I)))))))))"),
    ("find reg 6", "reg",
     "Add(1,Neg(Add(Div(I,U),Neg(Div(Add(E,Neg(U)),Sqrt(Div(Add(Exp(I),Abs(3)),Add(Abs(E),Sqrt(E)))))))))"),
    ("find reg 11", "reg", "Add(1,Neg(Add(Div(I,U),Sqrt(Div(Exp(3),I)))))"),
    ("search cls 16", "cls",
     "Neg(Add(Mul(Q,Mul(Add(1,Sig(Neg(Abs(Exp(X))))),Log(Sig(X)))),Mul(Add(1,Neg(Q)),"
     "Mul(Add(Add(1,Neg(Q)),Neg(Add(1,Neg(Sig(X))))),Log(Add(1,Neg(Sig(X))))))))"),
    ("find reg 9", "reg", "Add(Div(U,I),Neg(Add(Div(I,U),Neg(Div(Add(E,Neg(U)),E)))))"),
    ("search cls loss no iou 9", "cls",
     "Neg(Mul(Y,Log(Softmax(Add(X,Softmax(Softmax(Add(Div(Y,2),Y))))))))"),
]


# -- contexts -----------------------------------------------------------------

def random_boxes(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    xy = rng.uniform(0.0, scale, size=(n, 2))
    wh = rng.uniform(0.1 * scale, 0.6 * scale, size=(n, 2))
    return np.concatenate([xy, xy + wh], axis=1)


def random_context(branch: str, rng: np.random.Generator, batch: int = 5,
                   classes: int = 4, box_scale: float = 5.0) -> EvalContext:
    """A random, valid context: Gaussian logits or geometric (i, u, e).

    Boxes live in ``[0, box_scale]``; the default keeps areas well above the
    Div epsilon so closed forms and expressions agree to ~1e-11.
    """
    if branch == "cls":
        x = rng.normal(0.0, 3.0, size=(batch, classes))
        y = np.eye(classes)[rng.integers(0, classes, size=batch)]
        w = rng.uniform(0.05, 1.0, size=batch)
        return EvalContext.classification(x, y, w)
    target = random_boxes(rng, batch, box_scale)
    # predictions near the targets so that many pairs overlap
    jitter = rng.normal(0.0, 0.15 * box_scale, size=(batch, 4))
    pred = target + jitter
    pred[:, 2:] = np.maximum(pred[:, 2:], pred[:, :2] + 0.05 * box_scale)
    i, u, e = boxes.iue(pred, target)
    return EvalContext.regression(i, u, e)


def smoke_context(branch: str) -> EvalContext:
    return random_context(branch, np.random.default_rng(0))
