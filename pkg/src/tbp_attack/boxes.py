"""Box geometry, both as plain arrays and as differentiable tensors."""

from __future__ import annotations

import numpy as np

from . import autograd as ag


def iou(a, b) -> float:
    """IoU of two ``(x, y, w, h)`` boxes (top-left corner plus size)."""
    ax, ay, aw, ah = (float(v) for v in a)
    bx, by, bw, bh = (float(v) for v in b)
    iw = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    ih = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = iw * ih
    union = aw * ah + bw * bh - inter
    # (x + w) - x can exceed w by an ulp; keep the ratio in [0, 1]
    return min(1.0, inter / union) if union > 0 else 0.0


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between ``(n, 4)`` and ``(m, 4)`` xywh arrays."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)))
    x1 = np.maximum(a[:, None, 0], b[None, :, 0])
    y1 = np.maximum(a[:, None, 1], b[None, :, 1])
    x2 = np.minimum(a[:, None, 0] + a[:, None, 2], b[None, :, 0] + b[None, :, 2])
    y2 = np.minimum(a[:, None, 1] + a[:, None, 3], b[None, :, 1] + b[None, :, 3])
    inter = np.clip(x2 - x1, 0, None) * np.clip(y2 - y1, 0, None)
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)
    return np.minimum(out, 1.0)


def cxcywh_to_xywh(b: np.ndarray, width: float, height: float) -> np.ndarray:
    """Normalized centre boxes to pixel top-left boxes."""
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    out = np.empty_like(b)
    out[:, 0] = (b[:, 0] - b[:, 2] / 2) * width
    out[:, 1] = (b[:, 1] - b[:, 3] / 2) * height
    out[:, 2] = b[:, 2] * width
    out[:, 3] = b[:, 3] * height
    return out


def xywh_to_cxcywh(b: np.ndarray, width: float, height: float) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    out = np.empty_like(b)
    out[:, 0] = (b[:, 0] + b[:, 2] / 2) / width
    out[:, 1] = (b[:, 1] + b[:, 3] / 2) / height
    out[:, 2] = b[:, 2] / width
    out[:, 3] = b[:, 3] / height
    return out


def _corners(b: ag.Tensor):
    cx, cy, w, h = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h


def pairwise_l1(pred: ag.Tensor, tgt: ag.Tensor) -> ag.Tensor:
    """``(n, m)`` L1 distances between ``(n, 4)`` and ``(m, 4)`` boxes."""
    diff = ag.reshape(pred, (pred.shape[0], 1, 4)) - ag.reshape(tgt, (1, tgt.shape[0], 4))
    return ag.sum_(ag.abs_(diff), axis=-1)


def pairwise_giou(pred: ag.Tensor, tgt: ag.Tensor, eps: float = 1e-9) -> ag.Tensor:
    """Generalized IoU between normalized ``(cx, cy, w, h)`` box sets."""
    p = ag.reshape(pred, (pred.shape[0], 1, 4))
    t = ag.reshape(tgt, (1, tgt.shape[0], 4))
    px1, py1, px2, py2 = _corners(p)
    tx1, ty1, tx2, ty2 = _corners(t)
    iw = ag.clamp(ag.minimum(px2, tx2) - ag.maximum(px1, tx1), 0.0, None)
    ih = ag.clamp(ag.minimum(py2, ty2) - ag.maximum(py1, ty1), 0.0, None)
    inter = iw * ih
    area_p = (px2 - px1) * (py2 - py1)
    area_t = (tx2 - tx1) * (ty2 - ty1)
    # eps floors degenerate areas only, so identical boxes give exactly 1
    union = ag.maximum(area_p + area_t - inter, eps)
    hull = ag.maximum((ag.maximum(px2, tx2) - ag.minimum(px1, tx1)) * (ag.maximum(py2, ty2) - ag.minimum(py1, ty1)),
                      eps)
    return inter / union - (hull - union) / hull
