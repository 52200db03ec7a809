import numpy as np
import pytest

import oracles
from conftest import block, inst, record
from parsingeval.core import InvalidInputError, ValidationError
from parsingeval.formats import table_columns
from parsingeval.harness import (
    MODES,
    SynthParams,
    associate,
    run_experiment,
    swap_gt_box,
    swap_gt_parsing,
    swap_gt_score,
    synth_dataset,
    synth_scene,
    upper_bound,
)
from parsingeval.rescoring import miou_target


def true_mious(recs):
    out = []
    for rec in recs:
        for p in rec.pred_instances:
            g = next(g for g in rec.gt_instances if g.id == p.id)
            out.append(oracles.instance_miou(p, g))
    return out


class TestSynth:
    def test_param_validation(self):
        with pytest.raises(ValidationError, match="miou_range"):
            SynthParams(miou_range=(0.9, 0.2))
        with pytest.raises(ValidationError, match="parts"):
            SynthParams(num_classes=4, parts=(2, 6))
        with pytest.raises(ValidationError) as e:
            SynthParams(score_model="bogus", perturb="melt")
        assert len(e.value.problems) == 2

    def test_perfect_predictions(self):
        rec = synth_scene(SynthParams(seed=2, miou_range=(1.0, 1.0), box_jitter=0))
        for p, g in zip(rec.pred_instances, rec.gt_instances):
            assert p.box == g.box and p.local_map == g.local_map

    def test_deterministic(self):
        params = SynthParams(seed=11)
        assert synth_dataset(params, 4) == synth_dataset(params, 4, threads=3)
        assert synth_scene(params, 1) != synth_scene(params, 2)

    def test_target_mean(self):
        params = SynthParams(seed=4, miou_range=(0.6, 0.6))
        values, n = [], 0
        while len(values) < 100:
            values += true_mious([synth_scene(params, n)])
            n += 1
        values = values[:100]
        assert 0.55 <= np.mean(values) <= 0.65
        assert all(abs(v - 0.6) <= 0.05 + 1e-12 for v in values)

    def test_valid_records(self):
        for rec in synth_dataset(SynthParams(seed=5, width=64, height=48, num_classes=8, parts=(1, 3)), 10):
            assert rec.gt_semantic.shape == (48, 64)
            assert rec.gt_semantic.data.max() < 8
            assert len(rec.pred_instances) == len(rec.gt_instances) >= 2
            for p in rec.pred_instances:
                assert 0.5 <= p.cls_score <= 1.0 and 0.0 <= p.iou_score <= 1.0
                assert p.parsing_score is None

    def test_infeasible_layout(self):
        with pytest.raises(InvalidInputError, match="infeasible"):
            synth_scene(SynthParams(width=32, height=32, instances=(9, 9), box_jitter=3))


class TestSwaps:
    def _rec(self):
        gts = [inst(0, 0, 0, np.vstack([block(4, 6, 1), block(4, 6, 2)])), inst(1, 10, 2, block(6, 4, 3))]
        preds = [
            inst(0, 1, 1, block(6, 6, 1), cls_score=0.9, iou_score=0.4),
            inst(1, 9, 2, np.vstack([block(3, 5, 3), block(3, 5, 2)]), cls_score=0.3, iou_score=0.6),
            inst(2, 20, 20, block(2, 2, 1), cls_score=0.5, iou_score=0.5),  # overlaps nothing
        ]
        return record(gts, preds, 24, 24)

    def test_associate(self):
        rec = self._rec()
        assert associate(rec.pred_instances[0], rec.gt_instances).id == 0
        assert associate(rec.pred_instances[2], rec.gt_instances) is None

    def test_fixed_points_on_perfect_predictions(self):
        gts = self._rec().gt_instances
        rec = record(gts, [g.replace(cls_score=0.8) for g in gts], 24, 24)
        assert swap_gt_box(rec) == rec
        assert swap_gt_parsing(rec) == rec

    def test_gt_box(self):
        rec = swap_gt_box(self._rec())
        for p, g in zip(rec.pred_instances, rec.gt_instances):
            assert p.box == g.box and p.local_map.shape == g.local_map.shape
            assert p.cls_score == self._rec().pred_instances[p.id].cls_score
        assert rec.pred_instances[2] == self._rec().pred_instances[2]

    def test_gt_parsing(self):
        rec = swap_gt_parsing(self._rec())
        for p in rec.pred_instances[:2]:
            assert miou_target(p, rec.gt_semantic) == 1.0
        assert rec.pred_instances[2] == self._rec().pred_instances[2]

    def test_gt_score(self):
        before = self._rec()
        rec = swap_gt_score(before)
        for p0, p in zip(before.pred_instances[:2], rec.pred_instances[:2]):
            assert p.iou_score is None
            assert p.parsing_score == miou_target(p0, before.gt_semantic)

    def test_no_ground_truth(self):
        rec = record([], [inst(0, 0, 0, block(2, 2, 1))])
        with pytest.raises(InvalidInputError, match="no ground truths"):
            swap_gt_parsing(rec)


@pytest.fixture(scope="module")
def recs():
    return synth_dataset(SynthParams(seed=7, width=128, height=128), 20)


class TestExperiment:
    def test_repeatable(self, recs):
        assert run_experiment(recs) == run_experiment(recs, threads=4)

    def test_unknown_mode(self, recs):
        with pytest.raises(InvalidInputError, match="gt-parsing"):
            run_experiment(recs, "gt-magic")
        with pytest.raises(InvalidInputError):
            run_experiment([])

    def test_gt_parsing_is_perfect(self, recs):
        cols = table_columns(run_experiment(recs, "gt-parsing"))
        assert all(v == 1.0 for v in cols.values())

    def test_delta_signs(self, recs):
        rows, deltas, notes = upper_bound(recs)
        assert [r.name for r in rows] == list(MODES)
        assert all(d > 0 for d in deltas["gt-parsing"].values())
        score = deltas["gt-score"]
        assert score["AP^p_50"] > 0 and score["AP^p_vol"] > 0 and score["PCP_50"] >= 0
        assert len(notes) == 3
