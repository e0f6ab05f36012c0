"""Small training tasks that score how well a candidate loss optimizes a model.

Classification trains a linear softmax-free classifier on Gaussian blobs;
regression trains a linear box-delta regressor on anchor/target pairs.  The
candidate loss supplies the only training signal through reverse-mode
gradients of its inputs, chained into the model by hand.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from autoloss import boxes
from autoloss.boxes import DegenerateBox
from autoloss.expr import LossExpr, canonical_key
from autoloss.ops import ShapeMismatch
from autoloss.tensor import EvalContext, backward, forward

__all__ = [
    "SynthClsDataset", "SynthRegDataset", "SimResult", "DegenerateBox",
    "simulate", "proxy_fitness", "ap_at_50", "cls_dataset", "reg_dataset",
    "candidate_rng", "untrained_metric",
]

CLS_LR = 0.1
REG_LR = 0.05
SIM_STEPS = 300
PROXY_STEPS = 2000
PROXY_BATCH = 64

VERIFY_N = 64
TRAIN_N = 2000
VAL_N = 500


# -- datasets -----------------------------------------------------------------

@dataclass(frozen=True)
class Split:
    features: np.ndarray
    labels: np.ndarray      # one-hot (cls) or target boxes (reg)
    extra: np.ndarray       # per-sample IoU (cls) or anchor boxes (reg)

    def __len__(self):
        return self.features.shape[0]

    def take(self, idx: np.ndarray) -> "Split":
        return Split(self.features[idx], self.labels[idx], self.extra[idx])


@dataclass(frozen=True)
class SynthClsDataset:
    """Gaussian blobs, one per class, with a per-sample localization quality."""

    verify: Split
    train: Split
    val: Split
    centers: np.ndarray
    sigma: float

    @property
    def n_classes(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    @classmethod
    def generate(cls, seed: int = 0, n_classes: int = 4, dim: int = 8, sigma: float = 2.0,
                 radius: float = 7.0) -> "SynthClsDataset":
        if n_classes > dim:
            raise ValueError("need dim >= n_classes for orthogonal blob centers")
        rng = np.random.default_rng(seed)
        q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
        # orthogonal centers at equal radius: pairwise distance radius * sqrt(2)
        centers = radius * q[:, :n_classes].T

        def draw(per_class: int) -> Split:
            labels = np.repeat(np.arange(n_classes), per_class)
            order = rng.permutation(labels.size)
            labels = labels[order]
            feats = centers[labels] + sigma * rng.normal(size=(labels.size, dim))
            iou = rng.uniform(0.3, 1.0, size=labels.size)
            return Split(feats, np.eye(n_classes)[labels], iou)

        verify = draw(VERIFY_N // n_classes)
        train = draw(TRAIN_N // n_classes)
        val = draw(VAL_N // n_classes)
        return cls(verify, train, val, centers, sigma)


def _decode(anchors: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    aw = anchors[:, 2] - anchors[:, 0]
    ah = anchors[:, 3] - anchors[:, 1]
    cx = (anchors[:, 0] + anchors[:, 2]) / 2 + deltas[:, 0] * aw
    cy = (anchors[:, 1] + anchors[:, 3]) / 2 + deltas[:, 1] * ah
    with np.errstate(over="ignore", invalid="ignore"):
        w = aw * np.exp(deltas[:, 2])
        h = ah * np.exp(deltas[:, 3])
    return np.stack([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], axis=1)


def _encode(anchors: np.ndarray, targets: np.ndarray) -> np.ndarray:
    aw = anchors[:, 2] - anchors[:, 0]
    ah = anchors[:, 3] - anchors[:, 1]
    tw = targets[:, 2] - targets[:, 0]
    th = targets[:, 3] - targets[:, 1]
    dx = ((targets[:, 0] + targets[:, 2]) - (anchors[:, 0] + anchors[:, 2])) / 2 / aw
    dy = ((targets[:, 1] + targets[:, 3]) - (anchors[:, 1] + anchors[:, 3])) / 2 / ah
    return np.stack([dx, dy, np.log(tw / aw), np.log(th / ah)], axis=1)


@dataclass(frozen=True)
class SynthRegDataset:
    """Anchor/target box pairs in pixel coordinates with noisy delta features.

    Pixel scale matters: searched losses carry integer constants that are
    negligible next to pixel areas but dominate unit-square areas.
    """

    verify: Split
    train: Split
    val: Split
    projection: np.ndarray

    @property
    def dim(self) -> int:
        return self.projection.shape[1]

    @classmethod
    def generate(cls, seed: int = 0, dim: int = 8, noise: float = 0.1,
                 feature_scale: float = 2.0, image_size: float = 512.0) -> "SynthRegDataset":
        rng = np.random.default_rng(seed)
        projection = feature_scale * rng.normal(size=(4, dim)) / np.sqrt(4)

        def draw(n: int) -> Split:
            targets, anchors = [], []
            while len(targets) < n:
                wh = rng.uniform(0.1, 0.4, size=2) * image_size
                xy = rng.uniform(0.0, image_size - wh)
                t = np.concatenate([xy, xy + wh])
                jitter = rng.normal(0.0, 0.25, size=4) * np.concatenate([wh, wh])
                a = t + jitter
                if a[2] - a[0] <= 0.02 * image_size or a[3] - a[1] <= 0.02 * image_size:
                    continue
                ov = boxes.iou(a[None], t[None])[0]
                if 0.1 <= ov <= 0.9:
                    targets.append(t)
                    anchors.append(a)
            targets, anchors = np.array(targets), np.array(anchors)
            deltas = _encode(anchors, targets)
            feats = deltas @ projection + noise * rng.normal(size=(n, dim))
            return Split(feats, targets, anchors)

        return cls(draw(VERIFY_N), draw(TRAIN_N), draw(VAL_N), projection)


@lru_cache(maxsize=8)
def cls_dataset(seed: int = 0) -> SynthClsDataset:
    return SynthClsDataset.generate(seed)


@lru_cache(maxsize=8)
def reg_dataset(seed: int = 0) -> SynthRegDataset:
    return SynthRegDataset.generate(seed)


def export_csv(split: Split, path: str, branch: str) -> None:
    """One row per sample: features, then label/target and IoU/anchor columns."""
    d = split.features.shape[1]
    if branch == "cls":
        header = [f"f{j}" for j in range(d)] + ["label", "iou"]
        rows = [list(f) + [int(np.argmax(y)), w]
                for f, y, w in zip(split.features, split.labels, split.extra)]
    else:
        header = ([f"f{j}" for j in range(d)] + ["tx1", "ty1", "tx2", "ty2"]
                  + ["ax1", "ay1", "ax2", "ay2"])
        rows = [list(f) + list(t) + list(a)
                for f, t, a in zip(split.features, split.labels, split.extra)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


# -- metrics ------------------------------------------------------------------

def ap_at_50(pred_boxes, scores, target_boxes, pred_groups=None, target_groups=None) -> float:
    """Single-class average precision at IoU 0.5.

    Predictions are ranked by score and greedily matched to the best unmatched
    target of the same group.  The precision envelope is integrated over
    recall (all-point interpolation).
    """
    pred_boxes = np.asarray(pred_boxes, dtype=np.float64).reshape(-1, 4)
    target_boxes = np.asarray(target_boxes, dtype=np.float64).reshape(-1, 4)
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    boxes.check_boxes(pred_boxes)
    boxes.check_boxes(target_boxes)
    n_targets = len(target_boxes)
    if n_targets == 0 or len(pred_boxes) == 0:
        return 0.0
    pg = np.zeros(len(pred_boxes), int) if pred_groups is None else np.asarray(pred_groups)
    tg = np.zeros(n_targets, int) if target_groups is None else np.asarray(target_groups)

    overlaps = boxes.iou_matrix(pred_boxes, target_boxes)
    overlaps[pg[:, None] != tg[None, :]] = -1.0
    order = np.argsort(-scores, kind="stable")
    taken = np.zeros(n_targets, bool)
    tp = np.zeros(len(order))
    for rank, p in enumerate(order):
        cand = np.where(taken, -1.0, overlaps[p])
        best = int(np.argmax(cand))
        if cand[best] >= 0.5:
            taken[best] = True
            tp[rank] = 1.0
    ctp = np.cumsum(tp)
    recall = ctp / n_targets
    precision = ctp / np.arange(1, len(order) + 1)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev) * envelope))


# -- models and training ------------------------------------------------------

@dataclass
class SimResult:
    metric: float
    steps_run: int
    diverged: bool
    extras: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {"metric": self.metric, "steps_run": self.steps_run,
                "diverged": self.diverged, **self.extras}


def candidate_rng(seed: int, expr: LossExpr) -> np.random.Generator:
    """RNG stream owned by one candidate: a function of (seed, canonical key)."""
    key = int(canonical_key(expr)[:16], 16)
    return np.random.default_rng([seed, key])


def _init_params(branch: str, dim: int, out: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if branch == "cls":
        # every class column is the same small vector: logits start tied
        # (accuracy exactly 1/C) yet non-zero, so curvature is visible
        rng = np.random.default_rng([seed, 17])
        col = rng.normal(0.0, 0.01, size=(dim, 1))
        return np.repeat(col, out, axis=1), np.zeros(out)
    return np.zeros((dim, out)), np.zeros(out)


def _cls_step(expr: LossExpr, W, b, batch: Split):
    with np.errstate(all="ignore"):
        logits = batch.features @ W + b
        ctx = EvalContext({"x": logits, "y": batch.labels, "w": batch.extra}, "cls")
        ev = forward(expr, ctx)
        g = backward(ev.tape, ["x"])["x"]
        return ev.value, batch.features.T @ g, g.sum(axis=0)


def _reg_step(expr: LossExpr, W, b, batch: Split):
    with np.errstate(all="ignore"):
        deltas = batch.features @ W + b
    anchors, targets = batch.extra, batch.labels
    pred = _decode(anchors, deltas)
    with np.errstate(all="ignore"):
        i, u, e = boxes.iue(pred, targets)
    ctx = EvalContext({"i": i, "u": u, "e": e}, "reg")
    ev = forward(expr, ctx)
    g = backward(ev.tape, ["i", "u", "e"])
    with np.errstate(all="ignore"):
        gbox = boxes.iue_vjp(pred, targets, g["i"], g["u"], g["e"])
        g_cx = gbox[:, 0] + gbox[:, 2]
        g_cy = gbox[:, 1] + gbox[:, 3]
        g_w = (gbox[:, 2] - gbox[:, 0]) / 2
        g_h = (gbox[:, 3] - gbox[:, 1]) / 2
        aw = anchors[:, 2] - anchors[:, 0]
        ah = anchors[:, 3] - anchors[:, 1]
        g_delta = np.stack([g_cx * aw, g_cy * ah,
                            g_w * (pred[:, 2] - pred[:, 0]), g_h * (pred[:, 3] - pred[:, 1])], axis=1)
        return ev.value, batch.features.T @ g_delta, g_delta.sum(axis=0)


def _evaluate(branch: str, W, b, split: Split) -> dict:
    if branch == "cls":
        pred = np.argmax(split.features @ W + b, axis=1)
        acc = float(np.mean(pred == np.argmax(split.labels, axis=1)))
        return {"metric": acc, "accuracy": acc}
    with np.errstate(all="ignore"):
        deltas = split.features @ W + b
    pred = _decode(split.extra, deltas)
    if not np.all(np.isfinite(pred)):
        return {"metric": 0.0, "mean_iou": 0.0, "ap50": 0.0}
    with np.errstate(all="ignore"):
        ious = boxes.iou(pred, split.labels)
    mean_iou = float(np.mean(ious))
    # confidence: predictions that barely move their anchor rank first
    scores = -np.linalg.norm(deltas, axis=1)
    groups = np.arange(len(split))
    try:
        with np.errstate(all="ignore"):
            ap = ap_at_50(pred, scores, split.labels, groups, groups)
    except DegenerateBox:
        ap = 0.0
    return {"metric": mean_iou, "mean_iou": mean_iou, "ap50": ap}


def _train(expr: LossExpr, branch: str, data, train: Split, eval_split: Split, steps: int,
           lr: float, batch_size: int | None, rng: np.random.Generator | None, seed: int) -> SimResult:
    out = data.n_classes if branch == "cls" else 4
    W, b = _init_params(branch, data.dim, out, seed)
    step_fn = _cls_step if branch == "cls" else _reg_step
    n = len(train)
    for step in range(steps):
        if batch_size is None or batch_size >= n:
            batch = train
        else:
            batch = train.take(rng.choice(n, size=batch_size, replace=False))
        try:
            value, gW, gb = step_fn(expr, W, b, batch)
        except ShapeMismatch:
            return SimResult(0.0, step, True, {"reason": "shape mismatch"})
        with np.errstate(all="ignore"):
            W = W - lr * gW
            b = b - lr * gb
        if not (np.isfinite(value) and np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            return SimResult(0.0, step + 1, True)
    scores = _evaluate(branch, W, b, eval_split)
    metric = scores.pop("metric")
    return SimResult(metric, steps, False, scores)


def simulate(expr: LossExpr, branch: str | None = None, seed: int = 0, budget: int = SIM_STEPS,
             data_seed: int = 0) -> SimResult:
    """Full-batch SGD on the verify split; metric measured on the same split."""
    branch = branch or expr.branch
    data = cls_dataset(data_seed) if branch == "cls" else reg_dataset(data_seed)
    lr = CLS_LR if branch == "cls" else REG_LR
    return _train(expr, branch, data, data.verify, data.verify, budget, lr, None, None, seed)


def proxy_fitness(expr: LossExpr, branch: str | None = None, seed: int = 0, steps: int = PROXY_STEPS,
                  batch_size: int = PROXY_BATCH, data_seed: int = 0) -> float:
    """Minibatch SGD on the train split; returns the validation metric."""
    return proxy_result(expr, branch, seed, steps, batch_size, data_seed).metric


def proxy_result(expr: LossExpr, branch: str | None = None, seed: int = 0, steps: int = PROXY_STEPS,
                 batch_size: int = PROXY_BATCH, data_seed: int = 0) -> SimResult:
    branch = branch or expr.branch
    data = cls_dataset(data_seed) if branch == "cls" else reg_dataset(data_seed)
    lr = CLS_LR if branch == "cls" else REG_LR
    return _train(expr, branch, data, data.train, data.val, steps, lr, batch_size,
                  candidate_rng(seed, expr), seed)


def untrained_metric(branch: str, split: str = "verify", data_seed: int = 0, seed: int = 0) -> float:
    data = cls_dataset(data_seed) if branch == "cls" else reg_dataset(data_seed)
    out = data.n_classes if branch == "cls" else 4
    W, b = _init_params(branch, data.dim, out, seed)
    return _evaluate(branch, W, b, getattr(data, split))["metric"]

