import numpy as np
import pytest

import oracles
from conftest import block, inst
from parsingeval.core import Box, Instance, InvalidInputError, LabelMap, ProbMap, ValidationError
from parsingeval.geometry import (
    Grid,
    box_iou,
    crop_label_map,
    max_pool,
    paste_instances,
    resize_bilinear,
    resize_nearest,
    resize_prob_map,
)


class TestBoxIou:
    def test_examples(self):
        assert box_iou(Box(0, 0, 2, 2), Box(0, 0, 2, 2)) == 1.0
        assert box_iou(Box(0, 0, 2, 2), Box(2, 0, 4, 2)) == 0.0
        assert box_iou(Box(0, 0, 2, 2), Box(1, 0, 3, 2)) == pytest.approx(1 / 3, abs=1e-15)

    def test_degenerate(self):
        with pytest.raises(InvalidInputError):
            box_iou(Box(1, 1, 1, 3), Box(0, 0, 0, 0))
        assert box_iou(Box(1, 1, 1, 3), Box(0, 0, 2, 2)) == 0.0


class TestCrop:
    def test_identity(self):
        m = LabelMap(np.arange(16).reshape(4, 4))
        assert crop_label_map(m, Box(0, 0, 4, 4)) == m

    def test_constant(self):
        out = crop_label_map(LabelMap(np.zeros((4, 4), np.uint8)), Box(1, 1, 3, 3))
        assert out.shape == (2, 2) and not out.data.any()

    def test_column(self):
        out = crop_label_map(LabelMap([[1, 2], [3, 4]]), Box(1, 0, 2, 2))
        assert out.data.tolist() == [[2], [4]]

    def test_rounding(self):
        m = LabelMap(np.arange(25).reshape(5, 5))
        assert crop_label_map(m, Box(0.5, 0.49, 2.49, 2.5)).data.tolist() == [[1], [6], [11]]

    def test_errors(self):
        m = LabelMap(np.zeros((4, 4), np.uint8))
        with pytest.raises(InvalidInputError):
            crop_label_map(m, Box(1.2, 1, 1.4, 3))
        with pytest.raises(InvalidInputError):
            crop_label_map(m, Box(0, 0, 5, 4))


class TestPaste:
    def test_empty(self):
        assert not paste_instances(5, 4, []).data.any()

    def test_constant(self):
        assert (paste_instances(4, 3, [inst(0, 0, 0, block(3, 4, 3))]).data == 3).all()

    def test_overlap_goes_to_higher_score(self):
        hi = inst(0, 0, 0, block(4, 4, 1), cls_score=0.9)
        lo = inst(1, 2, 2, block(4, 4, 2), cls_score=0.4)
        for order in ([hi, lo], [lo, hi]):
            out = paste_instances(6, 6, order).data
            assert (out[2:4, 2:4] == 1).all()
            assert out[5, 5] == 2 and out[0, 0] == 1

    def test_tie_lower_id_wins(self):
        a = inst(7, 0, 0, block(2, 2, 1), cls_score=0.5)
        b = inst(3, 0, 0, block(2, 2, 2), cls_score=0.5)
        assert (paste_instances(2, 2, [a, b]).data == 2).all()
        assert (paste_instances(2, 2, [b, a]).data == 2).all()

    def test_parsing_score_ranks(self):
        a = inst(0, 0, 0, block(2, 2, 1), cls_score=0.9, parsing_score=0.1)
        b = inst(1, 0, 0, block(2, 2, 2), cls_score=0.1, parsing_score=0.9)
        assert (paste_instances(2, 2, [a, b]).data == 2).all()

    def test_background_never_overwrites(self):
        top = inst(0, 0, 0, [[0, 5], [0, 5]], cls_score=0.9)
        under = inst(1, 0, 0, block(2, 2, 2), cls_score=0.1)
        assert paste_instances(2, 2, [top, under]).data.tolist() == [[2, 5], [2, 5]]

    def test_out_of_canvas(self):
        with pytest.raises(InvalidInputError):
            paste_instances(3, 3, [inst(0, 2, 2, block(2, 2, 1))])

    def test_matches_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            items = []
            for k in range(int(rng.integers(1, 6))):
                h, w = rng.integers(1, 8, size=2)
                x, y = rng.integers(0, 12 - w + 1), rng.integers(0, 12 - h + 1)
                local = rng.integers(0, 4, size=(h, w))
                items.append(inst(int(k), int(x), int(y), local, cls_score=float(rng.choice([0.2, 0.5, 0.7]))))
            assert paste_instances(12, 12, items).data.tolist() == oracles.paste(12, 12, items)

    def test_crop_of_paste(self):
        rng = np.random.default_rng(9)
        local = rng.integers(0, 3, size=(5, 7))
        i = inst(0, 3, 2, local)
        crop = crop_label_map(paste_instances(16, 16, [i]), i.box).data
        mask = local != 0
        assert np.array_equal(crop[mask], local[mask])


class TestResize:
    def test_bilinear_identity(self):
        g = Grid(np.random.default_rng(0).random((5, 7)))
        np.testing.assert_allclose(resize_bilinear(g, 7, 5).data, g.data, atol=1e-9)

    def test_bilinear_constant(self):
        out = resize_bilinear(Grid([[0.7]]), 5, 3).data
        assert out.shape == (3, 5) and (out == 0.7).all()
        assert (resize_bilinear(resize_bilinear(Grid(np.full((3, 4), 0.3)), 9, 7), 4, 3).data == 0.3).all()

    def test_bilinear_ramp(self):
        out = resize_bilinear(Grid([[0, 1], [0, 1]]), 4, 4).data
        want = oracles.bilinear([[0.0, 1.0], [0.0, 1.0]], 4, 4)
        np.testing.assert_allclose(out, want, atol=1e-12)
        assert out[0].tolist() == [0.0, 0.25, 0.75, 1.0]

    def test_bilinear_oracle_and_range(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            g = rng.random(tuple(rng.integers(1, 9, size=2)))
            oh, ow = (int(v) for v in rng.integers(1, 20, size=2))
            out = resize_bilinear(Grid(g), ow, oh).data
            np.testing.assert_allclose(out, oracles.bilinear(g.tolist(), oh, ow), atol=1e-12)
            assert out.min() >= g.min() and out.max() <= g.max()

    def test_prob_map(self):
        p = ProbMap(np.random.default_rng(2).dirichlet(np.ones(3), size=(4, 5)).transpose(2, 0, 1))
        out = resize_prob_map(p, 9, 6)
        assert (out.channels, out.height, out.width) == (3, 6, 9)

    def test_nearest(self):
        m = LabelMap([[1, 2], [3, 4]])
        assert resize_nearest(m, 2, 2) == m
        assert resize_nearest(m, 4, 4).data.tolist() == [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]]
        assert (resize_nearest(LabelMap(np.full((3, 3), 6)), 7, 2).data == 6).all()

    def test_nearest_oracle_and_subset(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            m = rng.integers(0, 9, size=tuple(rng.integers(1, 9, size=2)))
            oh, ow = (int(v) for v in rng.integers(1, 20, size=2))
            out = resize_nearest(LabelMap(m), ow, oh).data
            assert out.tolist() == oracles.nearest(m.tolist(), oh, ow)
            assert set(np.unique(out)) <= set(np.unique(m))

    def test_bad_size(self):
        with pytest.raises(InvalidInputError):
            resize_nearest(LabelMap([[1]]), 0, 3)
        with pytest.raises(InvalidInputError):
            resize_bilinear(Grid([[1.0]]), 2, 0)


class TestMaxPool:
    def test_examples(self):
        assert max_pool(Grid(np.full((4, 4), 0.5)), 4, 4).data.tolist() == [[0.5]]
        g = np.zeros((4, 4))
        g[2, 1] = 1.0
        assert max_pool(Grid(g), 4, 4).data.tolist() == [[1.0]]
        r = np.random.default_rng(4).random((8, 8))
        assert max_pool(Grid(r), 4, 4).data.tolist() == oracles.window_max(r.tolist(), 4)

    def test_contract(self):
        with pytest.raises(InvalidInputError):
            max_pool(Grid(np.zeros((6, 8))), 4, 4)
        with pytest.raises(InvalidInputError):
            max_pool(Grid(np.zeros((8, 8))), 2, 4)
        with pytest.raises(InvalidInputError):
            max_pool(Grid(np.zeros((8, 8))), 0, 0)


def test_grid_invariants():
    with pytest.raises(ValidationError):
        Grid([[np.inf]])
    with pytest.raises(ValidationError):
        Grid(np.zeros(3))
    with pytest.raises(ValueError):
        Grid([[1.0]]).data[0, 0] = 2
    assert Grid([[1, 2]]) == Grid([[1.0, 2.0]])
