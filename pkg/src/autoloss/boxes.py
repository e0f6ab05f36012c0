"""Axis-aligned box geometry: intersection, union and enclosing area."""

from __future__ import annotations

import numpy as np


class DegenerateBox(ValueError):
    """A box with zero or negative width or height."""


def area(boxes: np.ndarray) -> np.ndarray:
    boxes = np.asarray(boxes, dtype=np.float64)
    return (boxes[..., 2] - boxes[..., 0]) * (boxes[..., 3] - boxes[..., 1])


def check_boxes(boxes: np.ndarray) -> None:
    boxes = np.asarray(boxes, dtype=np.float64)
    if not np.all(np.isfinite(boxes)):
        raise DegenerateBox("non-finite box coordinates")
    if np.any(boxes[..., 2] <= boxes[..., 0]) or np.any(boxes[..., 3] <= boxes[..., 1]):
        raise DegenerateBox("boxes must have positive width and height")


def iue(pred: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-wise intersection, union and enclosing area of (x1, y1, x2, y2) boxes."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    iw = np.maximum(np.minimum(pred[:, 2], target[:, 2]) - np.maximum(pred[:, 0], target[:, 0]), 0.0)
    ih = np.maximum(np.minimum(pred[:, 3], target[:, 3]) - np.maximum(pred[:, 1], target[:, 1]), 0.0)
    inter = iw * ih
    union = area(pred) + area(target) - inter
    ew = np.maximum(pred[:, 2], target[:, 2]) - np.minimum(pred[:, 0], target[:, 0])
    eh = np.maximum(pred[:, 3], target[:, 3]) - np.minimum(pred[:, 1], target[:, 1])
    return inter, union, ew * eh


def iou(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    i, u, _ = iue(pred, target)
    return i / u


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU, shape (len(a), len(b))."""
    a = np.asarray(a, dtype=np.float64)[:, None, :]
    b = np.asarray(b, dtype=np.float64)[None, :, :]
    iw = np.maximum(np.minimum(a[..., 2], b[..., 2]) - np.maximum(a[..., 0], b[..., 0]), 0.0)
    ih = np.maximum(np.minimum(a[..., 3], b[..., 3]) - np.maximum(a[..., 1], b[..., 1]), 0.0)
    inter = iw * ih
    return inter / (area(a) + area(b) - inter)


def iue_vjp(pred: np.ndarray, target: np.ndarray, gi: np.ndarray, gu: np.ndarray,
            ge: np.ndarray) -> np.ndarray:
    """Adjoint of the predicted box coordinates given adjoints of (i, u, e).

    Subgradients: the clamp at zero overlap passes no gradient, and ties in
    min/max send the gradient to the predicted box.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    px1, py1, px2, py2 = pred.T
    tx1, ty1, tx2, ty2 = target.T

    raw_w = np.minimum(px2, tx2) - np.maximum(px1, tx1)
    raw_h = np.minimum(py2, ty2) - np.maximum(py1, ty1)
    iw = np.maximum(raw_w, 0.0)
    ih = np.maximum(raw_h, 0.0)
    pw, ph = px2 - px1, py2 - py1
    ew = np.maximum(px2, tx2) - np.minimum(px1, tx1)
    eh = np.maximum(py2, ty2) - np.minimum(py1, ty1)

    # u = area(pred) + area(target) - i
    g_inter = gi - gu
    g_iw = g_inter * ih * (raw_w > 0)
    g_ih = g_inter * iw * (raw_h > 0)
    g_ew = ge * eh
    g_eh = ge * ew

    grad = np.zeros_like(pred)
    # area(pred) = pw * ph
    grad[:, 0] += -gu * ph
    grad[:, 2] += gu * ph
    grad[:, 1] += -gu * pw
    grad[:, 3] += gu * pw
    # iw = min(px2, tx2) - max(px1, tx1)
    grad[:, 2] += g_iw * (px2 <= tx2)
    grad[:, 0] -= g_iw * (px1 >= tx1)
    grad[:, 3] += g_ih * (py2 <= ty2)
    grad[:, 1] -= g_ih * (py1 >= ty1)
    # ew = max(px2, tx2) - min(px1, tx1)
    grad[:, 2] += g_ew * (px2 >= tx2)
    grad[:, 0] -= g_ew * (px1 <= tx1)
    grad[:, 3] += g_eh * (py2 >= ty2)
    grad[:, 1] -= g_eh * (py1 <= ty1)
    return grad
