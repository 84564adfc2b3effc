# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; same arithmetic and order as _pykernels."""

import numpy as np


cdef inline double _iou(double ax1, double ay1, double ax2, double ay2,
                        double bx1, double by1, double bx2, double by2) nogil:
    cdef double iw = (ax2 if ax2 < bx2 else bx2) - (ax1 if ax1 > bx1 else bx1)
    cdef double ih = (ay2 if ay2 < by2 else by2) - (ay1 if ay1 > by1 else by1)
    cdef double inter = iw * ih if (iw > 0.0 and ih > 0.0) else 0.0
    cdef double union_ = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    if union_ <= 0.0:
        return 0.0
    return inter / union_


def iou(double ax1, double ay1, double ax2, double ay2,
        double bx1, double by1, double bx2, double by2):
    return _iou(ax1, ay1, ax2, ay2, bx1, by1, bx2, by2)


def best_iou(double x1, double y1, double x2, double y2, double[:, ::1] regions):
    cdef Py_ssize_t i, best_idx = -1
    cdef double v, best = 0.0
    for i in range(regions.shape[0]):
        v = _iou(x1, y1, x2, y2,
                 regions[i, 0], regions[i, 1], regions[i, 2], regions[i, 3])
        if best_idx < 0 or v > best:
            best_idx = i
            best = v
    return best_idx, best


def union_iou(boxes_a, boxes_b):
    cdef Py_ssize_t na = boxes_a.shape[0], nb = boxes_b.shape[0]
    if na == 0 and nb == 0:
        return 0.0
    allb = np.concatenate([boxes_a, boxes_b]) if (na and nb) else (boxes_a if na else boxes_b)
    xs_arr = np.unique(np.concatenate([allb[:, 0], allb[:, 2]]))
    ys_arr = np.unique(np.concatenate([allb[:, 1], allb[:, 3]]))
    cdef double[::1] xs = np.ascontiguousarray(xs_arr)
    cdef double[::1] ys = np.ascontiguousarray(ys_arr)
    cdef double[:, ::1] av = np.ascontiguousarray(boxes_a) if na else np.empty((0, 4))
    cdef double[:, ::1] bv = np.ascontiguousarray(boxes_b) if nb else np.empty((0, 4))
    cdef double inter = 0.0, union_ = 0.0
    cdef double w, h, cx, cy
    cdef Py_ssize_t i, j, k
    cdef bint in_a, in_b
    with nogil:
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
                    if av[k, 0] <= cx <= av[k, 2] and av[k, 1] <= cy <= av[k, 3]:
                        in_a = True
                        break
                in_b = False
                for k in range(nb):
                    if bv[k, 0] <= cx <= bv[k, 2] and bv[k, 1] <= cy <= bv[k, 3]:
                        in_b = True
                        break
                if in_a and in_b:
                    inter += w * h
                if in_a or in_b:
                    union_ += w * h
    if union_ <= 0.0:
        return 0.0
    return inter / union_


def lcs_length(int[::1] a, int[::1] b):
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0]
    if n == 0 or m == 0:
        return 0
    prev_arr = np.zeros(m + 1, dtype=np.intc)
    cur_arr = np.zeros(m + 1, dtype=np.intc)
    cdef int[::1] prev = prev_arr
    cdef int[::1] cur = cur_arr
    cdef int[::1] tmp
    cdef Py_ssize_t i, j
    cdef int ai
    with nogil:
        for i in range(1, n + 1):
            ai = a[i - 1]
            for j in range(1, m + 1):
                if ai == b[j - 1]:
                    cur[j] = prev[j - 1] + 1
                else:
                    cur[j] = prev[j] if prev[j] >= cur[j - 1] else cur[j - 1]
            tmp = prev
            prev = cur
            cur = tmp
    return prev[m]
