"""Cheap property checks that reject candidate losses before any training.

Classification candidates are probed on a two-class problem where column 0
holds the ground-truth ("positive") logit and column 1 the other one, with
the IoU input fixed at 1.  Regression candidates are probed on boxes moved
away from, or rescaled around, a unit target box.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass

import numpy as np

from autoloss import boxes
from autoloss.expr import LossExpr, to_string
from autoloss.ops import ShapeMismatch
from autoloss.tensor import EvalContext, backward, forward

SCORE_GRID = np.linspace(-10.0, 10.0, 1001)
FIXED_LOGITS = (-2.0, 0.0, 2.0)
TAIL_POINTS = (20.0, 30.0)
TRANSLATIONS = np.linspace(0.0, 5.0, 21)
DIRECTIONS = np.array([(np.cos(a), np.sin(a)) for a in np.arange(8) * np.pi / 4])
SCALES = np.geomspace(0.2, 5.0, 21)
UNIT_BOX = np.array([0.0, 0.0, 1.0, 1.0])

MONOTONE_TOL = 1e-9
TAIL_GRAD_MAX = 1e-3


@dataclass
class VerificationReport:
    """Outcome of each check; ``None`` marks a check that was not run."""

    expr: str
    branch: str
    validness: bool
    validness_probe: str | None = None
    monotonicity: bool | None = None
    monotonicity_violations: int = 0
    convergence: bool | None = None
    tail_gradients: tuple[float, ...] | None = None
    distance_consistency: bool | None = None
    distance_violation: str | None = None
    millis: float = 0.0

    @property
    def overall(self) -> bool:
        checks = (self.validness, self.monotonicity, self.convergence, self.distance_consistency)
        return all(c is not False for c in checks) and self.validness

    def failed_check(self) -> str | None:
        for name in ("validness", "monotonicity", "convergence", "distance_consistency"):
            if getattr(self, name) is False:
                return name
        return None

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["overall"] = self.overall
        if rec["tail_gradients"] is not None:
            rec["tail_gradients"] = list(rec["tail_gradients"])
        return rec

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)


# -- probe construction -------------------------------------------------------

def _sweep_logits() -> tuple[np.ndarray, np.ndarray]:
    """Positive-logit sweeps then negative-logit sweeps, one row per probe."""
    n = SCORE_GRID.size
    pos = np.concatenate([np.stack([SCORE_GRID, np.full(n, f)], axis=1) for f in FIXED_LOGITS])
    neg = np.concatenate([np.stack([np.full(n, f), SCORE_GRID], axis=1) for f in FIXED_LOGITS])
    return pos, neg


def _two_class(x: np.ndarray) -> EvalContext:
    y = np.tile([1.0, 0.0], (x.shape[0], 1))
    return EvalContext.classification(x, y, np.ones(x.shape[0]))


_POS_SWEEP, _NEG_SWEEP = _sweep_logits()
SWEEP_CONTEXT = _two_class(np.concatenate([_POS_SWEEP, _NEG_SWEEP]))
TAIL_CONTEXTS = tuple(_two_class(np.array([[t, 0.0]])) for t in TAIL_POINTS)


def _translated_boxes() -> np.ndarray:
    out = []
    for d in DIRECTIONS:
        for t in TRANSLATIONS:
            out.append(UNIT_BOX + np.array([d[0], d[1], d[0], d[1]]) * t)
    return np.array(out)


def _scaled_boxes() -> np.ndarray:
    centre = (UNIT_BOX[:2] + UNIT_BOX[2:]) / 2
    half = (UNIT_BOX[2:] - UNIT_BOX[:2]) / 2
    return np.array([np.concatenate([centre - s * half, centre + s * half]) for s in SCALES])


PROBE_BOXES = np.concatenate([_translated_boxes(), _scaled_boxes()])
REGRESSION_CONTEXT = EvalContext.regression(*boxes.iue(PROBE_BOXES, np.tile(UNIT_BOX, (len(PROBE_BOXES), 1))))


def _describe_cls_probe(row: int) -> str:
    x = SWEEP_CONTEXT["x"][row]
    return f"x_pos={x[0]:g}, x_neg={x[1]:g}"


def _describe_reg_probe(row: int) -> str:
    n_t = TRANSLATIONS.size
    if row < len(DIRECTIONS) * n_t:
        d, t = divmod(row, n_t)
        return f"direction={d * 45}deg, t={TRANSLATIONS[t]:g}"
    return f"scale={SCALES[row - len(DIRECTIONS) * n_t]:.4g}"


# -- individual checks --------------------------------------------------------

def _classification_sweep(expr: LossExpr):
    """Per-sample losses and x-gradients on the sweep probes, or the failure text."""
    try:
        ev = forward(expr, SWEEP_CONTEXT)
    except ShapeMismatch as exc:
        return None, None, f"shape mismatch: {exc}"
    grad = backward(ev.tape, ["x"])["x"]
    return ev.per_sample, grad, None


def _tail_gradients(expr: LossExpr) -> tuple[list[float], list[float]]:
    values, grads = [], []
    for ctx in TAIL_CONTEXTS:
        ev = forward(expr, ctx)
        values.append(ev.value)
        grads.append(float(backward(ev.tape, ["x"])["x"][0, 0]))
    return values, grads


def check_validness(expr: LossExpr, probes: list[EvalContext] | None = None) -> tuple[bool, str | None]:
    """No NaN or infinity in the loss (or, for classification, its x-gradient)."""
    if probes is not None:
        for k, ctx in enumerate(probes):
            try:
                ev = forward(expr, ctx)
            except ShapeMismatch as exc:
                return False, f"shape mismatch: {exc}"
            bad = ~np.isfinite(ev.per_sample)
            if expr.branch == "cls":
                g = backward(ev.tape, ["x"])["x"]
                bad = bad | ~np.all(np.isfinite(g), axis=1)
            if bad.any():
                return False, f"probe {k}, row {int(np.argmax(bad))}"
        return True, None

    if expr.branch == "reg":
        try:
            ev = forward(expr, REGRESSION_CONTEXT)
        except ShapeMismatch as exc:
            return False, f"shape mismatch: {exc}"
        bad = ~np.isfinite(ev.per_sample)
        if bad.any():
            return False, _describe_reg_probe(int(np.argmax(bad)))
        return True, None

    per_sample, grad, err = _classification_sweep(expr)
    if err:
        return False, err
    bad = ~np.isfinite(per_sample) | ~np.all(np.isfinite(grad), axis=1)
    if bad.any():
        return False, _describe_cls_probe(int(np.argmax(bad)))
    values, grads = _tail_gradients(expr)
    for t, v, g in zip(TAIL_POINTS, values, grads):
        if not (np.isfinite(v) and np.isfinite(g)):
            return False, f"x_pos={t:g}, x_neg=0"
    return True, None


def _monotone_violations(per_sample: np.ndarray) -> int:
    n = SCORE_GRID.size
    k = len(FIXED_LOGITS)
    pos = per_sample[: k * n].reshape(k, n)
    neg = per_sample[k * n:].reshape(k, n)
    rising = np.diff(pos, axis=1) > MONOTONE_TOL
    falling = np.diff(neg, axis=1) < -MONOTONE_TOL
    return int(rising.sum() + falling.sum())


def check_monotonicity(expr: LossExpr) -> tuple[bool, int]:
    """Loss non-increasing in the positive logit and non-decreasing in the other."""
    per_sample, _, err = _classification_sweep(expr)
    if err:
        return False, -1
    violations = _monotone_violations(per_sample)
    return violations == 0, violations


def check_convergence(expr: LossExpr) -> tuple[bool, tuple[float, float]]:
    """Positive-logit gradient below threshold at both tail points and not growing."""
    _, grads = _tail_gradients(expr)
    g20, g30 = (abs(g) for g in grads)
    ok = g20 < TAIL_GRAD_MAX and g30 < TAIL_GRAD_MAX and g30 <= g20
    return bool(ok), (g20, g30)


def _distance_violation(per_sample: np.ndarray) -> str | None:
    n_t = TRANSLATIONS.size
    n_dir = len(DIRECTIONS)
    trans = per_sample[: n_dir * n_t].reshape(n_dir, n_t)
    for d in range(n_dir):
        steps = np.diff(trans[d])
        bad = np.nonzero(steps < -MONOTONE_TOL)[0]
        if bad.size:
            return f"direction={d * 45}deg, t={TRANSLATIONS[bad[0] + 1]:g}"
    scaled = per_sample[n_dir * n_t:]
    at_one = scaled[np.argmin(np.abs(np.log(SCALES)))]
    below = np.nonzero(scaled < at_one - MONOTONE_TOL)[0]
    if below.size:
        return f"scale={SCALES[below[0]]:.4g} beats scale=1"
    return None


def check_distance_consistency(expr: LossExpr) -> tuple[bool, str | None]:
    """Loss grows with translation away from the target and is minimal at scale 1."""
    try:
        ev = forward(expr, REGRESSION_CONTEXT)
    except ShapeMismatch as exc:
        return False, f"shape mismatch: {exc}"
    violation = _distance_violation(ev.per_sample)
    return violation is None, violation


def verify(expr: LossExpr) -> VerificationReport:
    """Run validness, then the branch's property checks."""
    start = time.perf_counter()
    report = VerificationReport(expr=to_string(expr), branch=expr.branch, validness=False)

    if expr.branch == "cls":
        per_sample, grad, err = _classification_sweep(expr)
        if err:
            report.validness_probe = err
        else:
            bad = ~np.isfinite(per_sample) | ~np.all(np.isfinite(grad), axis=1)
            values, grads = _tail_gradients(expr)
            if bad.any():
                report.validness_probe = _describe_cls_probe(int(np.argmax(bad)))
            elif not all(np.isfinite(values)) or not all(np.isfinite(grads)):
                report.validness_probe = "tail probes"
            else:
                report.validness = True
                violations = _monotone_violations(per_sample)
                report.monotonicity = violations == 0
                report.monotonicity_violations = violations
                g20, g30 = abs(grads[0]), abs(grads[1])
                report.tail_gradients = (g20, g30)
                report.convergence = bool(g20 < TAIL_GRAD_MAX and g30 < TAIL_GRAD_MAX and g30 <= g20)
    else:
        try:
            ev = forward(expr, REGRESSION_CONTEXT)
        except ShapeMismatch as exc:
            report.validness_probe = f"shape mismatch: {exc}"
        else:
            bad = ~np.isfinite(ev.per_sample)
            if bad.any():
                report.validness_probe = _describe_reg_probe(int(np.argmax(bad)))
            else:
                report.validness = True
                report.distance_violation = _distance_violation(ev.per_sample)
                report.distance_consistency = report.distance_violation is None

    report.millis = (time.perf_counter() - start) * 1e3
    return report
