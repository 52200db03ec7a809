import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from parsingeval import kernels  # noqa: E402
from parsingeval.core import Box, CategorySet, ImageRecord, Instance, LabelMap  # noqa: E402
from parsingeval.geometry import paste_instances  # noqa: E402

ACCEPTANCE_LINES = []


def inst(id, x, y, local, cls_score=1.0, iou_score=None, parsing_score=None):
    """Instance whose box is exactly the integer extent of ``local`` placed at (x, y)."""
    local = np.asarray(local, np.uint8)
    h, w = local.shape
    return Instance(id, Box(x, y, x + w, y + h), cls_score, LabelMap(local), iou_score, parsing_score)


def block(h, w, label):
    return np.full((h, w), label, np.uint8)


def record(gts, preds=(), width=32, height=32, num_classes=8, pred_semantic=None, image_id="img"):
    gt_sem = paste_instances(width, height, gts)
    return ImageRecord(
        image_id, width, height, CategorySet.default(num_classes), gt_sem, tuple(gts), tuple(preds), pred_semantic
    )


@pytest.fixture(params=sorted(kernels.available_backends()))
def backend(request):
    return kernels.available_backends()[request.param]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
