"""Property-based checks of the algebraic laws the metrics rely on."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from parsingeval.combine import combine_or
from parsingeval.core import Box, InvalidInputError, LabelMap
from parsingeval.geometry import Grid, box_iou, resize_bilinear, resize_nearest
from parsingeval.instance import ap_from_flags
from parsingeval.rescoring import fuse_scores
from parsingeval.semantic import pixel_confusion

settings.register_profile("default", max_examples=200, deadline=None)
settings.load_profile("default")

unit = st.floats(0.0, 1.0)
coord = st.floats(-50.0, 50.0, allow_nan=False)
size = st.integers(1, 12)


@st.composite
def boxes(draw):
    x1, y1 = draw(coord), draw(coord)
    return Box(x1, y1, x1 + draw(st.floats(0.5, 40)), y1 + draw(st.floats(0.5, 40)))


def label_maps(h, w, c=5):
    return arrays(np.uint8, (h, w), elements=st.integers(0, c - 1)).map(LabelMap)


@given(boxes(), boxes())
def test_box_iou_symmetric_and_bounded(a, b):
    v = box_iou(a, b)
    assert v == box_iou(b, a)
    assert 0.0 <= v <= 1.0


@given(boxes())
def test_box_iou_self(a):
    assert box_iou(a, a) == 1.0


def test_box_iou_degenerate_pair():
    with pytest.raises(InvalidInputError):
        box_iou(Box(0, 0, 0, 0), Box(1, 1, 1, 3))
    assert box_iou(Box(0, 0, 0, 0), Box(0, 0, 2, 2)) == 0.0


@given(unit, unit)
def test_fuse_laws(a, b):
    f = fuse_scores(a, b)
    assert f == fuse_scores(b, a)
    assert min(a, b) <= f <= max(a, b)
    assert fuse_scores(a, a) == a


@given(unit, unit, unit)
def test_fuse_monotone(a, b, c):
    lo, hi = sorted((b, c))
    assert fuse_scores(a, lo) <= fuse_scores(a, hi)


@given(st.data(), size, size)
def test_combine_or_laws(data, h, w):
    a, b, c = (data.draw(label_maps(h, w)) for _ in range(3))
    zero = LabelMap.zeros(w, h)
    assert combine_or(a, zero) == a and combine_or(zero, a) == a
    assert combine_or(a, a) == a
    assert combine_or(combine_or(a, b), c) == combine_or(a, combine_or(b, c))
    out = combine_or(a, b).data
    assert ((out != 0) == ((a.data != 0) | (b.data != 0))).all()


@given(st.lists(st.tuples(st.floats(0.01, 1.0), st.booleans()), max_size=30), st.integers(0, 10))
def test_ap_invariant_under_monotone_rescaling(preds, extra_gt):
    n_gt = sum(f for _, f in preds) + extra_gt

    def ap(key):
        order = sorted(range(len(preds)), key=lambda i: (-key(preds[i][0]), i))
        return ap_from_flags([preds[i][1] for i in order], n_gt)

    base = ap(lambda s: s)
    assert 0.0 <= base <= 1.0
    # transforms that are strictly increasing even in floating point
    ranks = {v: r for r, v in enumerate(sorted({s for s, _ in preds}))}
    assert ap(lambda s: s / 4) == base
    assert ap(lambda s: ranks[s]) == base


@given(st.data(), size, size, size, size)
def test_nearest_values_subset(data, h, w, oh, ow):
    m = data.draw(label_maps(h, w))
    out = resize_nearest(m, ow, oh)
    assert out.shape == (oh, ow)
    assert set(np.unique(out.data)) <= set(np.unique(m.data))


@given(arrays(np.float64, st.tuples(size, size), elements=st.floats(-1e3, 1e3)), size, size)
def test_bilinear_within_range(arr, oh, ow):
    out = resize_bilinear(Grid(arr), ow, oh).data
    assert out.shape == (oh, ow)
    assert arr.min() <= out.min() and out.max() <= arr.max()


@given(st.data(), size, size)
def test_confusion_merge_is_concatenation(data, h, w):
    p1, g1, p2, g2 = (data.draw(label_maps(h, w)) for _ in range(4))
    merged = pixel_confusion(p1, g1, 5).merge(pixel_confusion(p2, g2, 5))
    whole = pixel_confusion(LabelMap(np.hstack([p1.data, p2.data])), LabelMap(np.hstack([g1.data, g2.data])), 5)
    assert (merged.counts == whole.counts).all()
    assert merged.total == 2 * h * w
