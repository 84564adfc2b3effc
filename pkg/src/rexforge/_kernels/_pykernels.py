"""Pure-Python kernels: box IoU, best-region search, union-IoU, LCS.

Reference implementations of the hot loops. The Cython twin in
_cykernels.pyx runs the same arithmetic in the same order, so both
backends produce identical floats on identical inputs.
"""

from __future__ import annotations

import numpy as np


def iou(ax1, ay1, ax2, ay2, bx1, by1, bx2, by2):
    """Intersection over union of two corner-form boxes; 0 when the union is empty."""
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    inter = iw * ih if (iw > 0.0 and ih > 0.0) else 0.0
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def best_iou(x1, y1, x2, y2, regions):
    """Index and IoU of the region with the highest IoU against the box.

    regions is a C-contiguous (N, 4) float64 array. Ties keep the lowest
    index. Returns (-1, 0.0) when there are no regions.
    """
    best_idx = -1
    best = 0.0
    for i in range(regions.shape[0]):
        v = iou(x1, y1, x2, y2,
                regions[i, 0], regions[i, 1], regions[i, 2], regions[i, 3])
        if best_idx < 0 or v > best:
            best_idx = i
            best = v
    return best_idx, best


def union_iou(boxes_a, boxes_b):
    """IoU between the union area of boxes_a and the union area of boxes_b.

    Exact rectangle-decomposition sweep: the plane is cut on every box
    edge and each cell is classified by its center point. Inputs are
    (N, 4) float64 arrays; either may be empty.
    """
    na, nb = boxes_a.shape[0], boxes_b.shape[0]
    if na == 0 and nb == 0:
        return 0.0
    allb = np.concatenate([boxes_a, boxes_b]) if (na and nb) else (boxes_a if na else boxes_b)
    xs = np.unique(np.concatenate([allb[:, 0], allb[:, 2]]))
    ys = np.unique(np.concatenate([allb[:, 1], allb[:, 3]]))
    inter = 0.0
    union = 0.0
    for i in range(xs.shape[0] - 1):
        w = xs[i + 1] - xs[i]
        if w <= 0.0:
            continue
        cx = xs[i] + w * 0.5
        for j in range(ys.shape[0] - 1):
            h = ys[j + 1] - ys[j]
            if h <= 0.0:
                continue
            cy = ys[j] + h * 0.5
            in_a = False
            for k in range(na):
                if (boxes_a[k, 0] <= cx <= boxes_a[k, 2]
                        and boxes_a[k, 1] <= cy <= boxes_a[k, 3]):
                    in_a = True
                    break
            in_b = False
            for k in range(nb):
                if (boxes_b[k, 0] <= cx <= boxes_b[k, 2]
                        and boxes_b[k, 1] <= cy <= boxes_b[k, 3]):
                    in_b = True
                    break
            if in_a and in_b:
                inter += w * h
            if in_a or in_b:
                union += w * h
    if union <= 0.0:
        return 0.0
    return inter / union


def lcs_length(a, b):
    """Length of the longest common subsequence of two int32 arrays."""
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        return 0
    prev = [0] * (m + 1)
    cur = [0] * (m + 1)
    for i in range(1, n + 1):
        ai = a[i - 1]
        for j in range(1, m + 1):
            if ai == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = prev[j] if prev[j] >= cur[j - 1] else cur[j - 1]
        prev, cur = cur, prev
    return prev[m]
