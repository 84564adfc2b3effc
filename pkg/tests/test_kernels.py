"""Kernel backends: known values plus compiled/pure equivalence."""

import random

import numpy as np
import pytest

from rexforge._kernels import _pykernels

try:
    from rexforge._kernels import _cykernels
    BACKENDS = [("pure", _pykernels), ("cython", _cykernels)]
except ImportError:
    _cykernels = None
    BACKENDS = [("pure", _pykernels)]

pytestmark = pytest.mark.parametrize("label,impl", BACKENDS,
                                     ids=[b[0] for b in BACKENDS])


def test_iou_known_values(label, impl):
    assert impl.iou(0, 0, 10, 10, 0, 0, 10, 10) == 1.0
    assert impl.iou(0, 0, 10, 10, 20, 20, 30, 30) == 0.0
    assert impl.iou(0, 0, 10, 10, 5, 0, 15, 10) == pytest.approx(50 / 150, abs=1e-12)


def test_iou_degenerate_boxes(label, impl):
    # zero-area boxes give a zero union, hence IoU 0
    assert impl.iou(5, 5, 5, 5, 5, 5, 5, 5) == 0.0
    assert impl.iou(0, 0, 10, 10, 5, 5, 5, 5) == 0.0


def test_best_iou_argmax_and_ties(label, impl):
    regions = np.array([[5.0, 0, 15, 10], [0.0, 0, 10, 12]])
    idx, score = impl.best_iou(0, 0, 10, 10, regions)
    assert idx == 1
    assert score == pytest.approx(100 / 120, abs=1e-12)
    # equal-IoU duplicates resolve to the lowest index
    dup = np.array([[0.0, 0, 10, 10], [0.0, 0, 10, 10]])
    assert impl.best_iou(0, 0, 10, 10, dup)[0] == 0
    assert impl.best_iou(0, 0, 10, 10, np.empty((0, 4)))[0] == -1


def test_union_iou_rectangles(label, impl):
    a = np.array([[0.0, 0, 10, 10]])
    b = np.array([[0.0, 0, 10, 10], [10.0, 0, 20, 10]])
    assert impl.union_iou(a, b) == pytest.approx(0.5, abs=1e-12)
    assert impl.union_iou(a, a) == 1.0
    assert impl.union_iou(np.empty((0, 4)), b) == 0.0
    assert impl.union_iou(np.empty((0, 4)), np.empty((0, 4))) == 0.0


def test_union_iou_against_shapely(label, impl):
    shapely = pytest.importorskip("shapely")
    from shapely.geometry import box
    from shapely.ops import unary_union
    rng = random.Random(20240811)
    for _ in range(50):
        na, nb = rng.randint(1, 5), rng.randint(1, 5)
        boxes_a = np.array([sorted_box(rng) for _ in range(na)])
        boxes_b = np.array([sorted_box(rng) for _ in range(nb)])
        union_a = unary_union([box(*row) for row in boxes_a])
        union_b = unary_union([box(*row) for row in boxes_b])
        inter = union_a.intersection(union_b).area
        union = union_a.union(union_b).area
        expected = inter / union if union > 0 else 0.0
        assert impl.union_iou(boxes_a, boxes_b) == pytest.approx(expected, abs=1e-9)


def sorted_box(rng):
    x1, x2 = sorted(rng.uniform(0, 100) for _ in range(2))
    y1, y2 = sorted(rng.uniform(0, 100) for _ in range(2))
    return [x1, y1, x2, y2]


def test_lcs_known_values(label, impl):
    def lcs(a, b):
        return impl.lcs_length(np.array(a, dtype=np.intc),
                               np.array(b, dtype=np.intc))
    assert lcs([1, 2, 3, 4], [2, 4, 3]) == 2
    assert lcs([], [1, 2]) == 0
    assert lcs([7, 7, 7], [7, 7]) == 2
    assert lcs([1, 2, 3], [1, 2, 3]) == 3


@pytest.mark.skipif(_cykernels is None, reason="compiled kernels unavailable")
def test_backends_agree(label, impl):
    rng = random.Random(7)
    for _ in range(200):
        a = sorted_box(rng)
        b = sorted_box(rng)
        assert _pykernels.iou(*a, *b) == _cykernels.iou(*a, *b)
    for _ in range(50):
        regions = np.array([sorted_box(rng) for _ in range(rng.randint(1, 10))])
        target = sorted_box(rng)
        assert _pykernels.best_iou(*target, regions) == _cykernels.best_iou(*target, regions)
        boxes_a = np.array([sorted_box(rng) for _ in range(rng.randint(1, 4))])
        boxes_b = np.array([sorted_box(rng) for _ in range(rng.randint(1, 4))])
        pure = _pykernels.union_iou(boxes_a, boxes_b)
        fast = _cykernels.union_iou(boxes_a, boxes_b)
        assert pure == pytest.approx(fast, abs=1e-12)
        seq_a = np.array([rng.randint(0, 5) for _ in range(rng.randint(0, 30))],
                         dtype=np.intc)
        seq_b = np.array([rng.randint(0, 5) for _ in range(rng.randint(0, 30))],
                         dtype=np.intc)
        assert _pykernels.lcs_length(seq_a, seq_b) == _cykernels.lcs_length(seq_a, seq_b)
