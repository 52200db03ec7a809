import json

import pytest

from parsingeval.cli import dispatch
from parsingeval.core import PROTOCOL_VERSION

SMALL = ["--images", "4", "--width", "64", "--height", "64", "--classes", "8", "--parts", "1", "3"]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert dispatch(["synth", "--out", str(out), "--seed", "3", *SMALL]) == 0
    return out / "manifest.json"


def run(capsys, *argv):
    code = dispatch(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_version(capsys):
    code, out, _ = run(capsys, "--version")
    assert code == 0 and PROTOCOL_VERSION in out


def test_usage_errors(capsys, dataset):
    assert run(capsys, "eval-instance", "--manifest", str(dataset), "--bogus")[0] == 2
    assert run(capsys)[0] == 2
    assert run(capsys, "eval-instance", "--manifest", str(dataset), "--threads", "0")[0] == 2


def test_missing_manifest(capsys, tmp_path):
    missing = tmp_path / "absent.json"
    code, _, err = run(capsys, "eval-instance", "--manifest", str(missing))
    assert code == 1 and str(missing) in err


def test_perfect_semantic(capsys, tmp_path):
    code, out, _ = run(capsys, "synth", "--out", str(tmp_path), "--miou-range", "1", "1", "--box-jitter", "0", *SMALL)
    assert code == 0 and out.strip() == str(tmp_path / "manifest.json")
    code, out, _ = run(capsys, "eval-semantic", "--manifest", str(tmp_path / "manifest.json"),
                       "--source", "instance", "--format", "json")
    assert code == 0
    assert json.loads(out)["semantic"]["miou"] == 1.0


def test_global_source_missing(capsys, tmp_path):
    assert dispatch(["synth", "--out", str(tmp_path), "--no-global", *SMALL]) == 0
    code, _, err = run(capsys, "eval-semantic", "--manifest", str(tmp_path / "manifest.json"), "--source", "global")
    assert code == 1 and "pred_semantic" in err


def test_eval_instance_writes_reports(capsys, dataset, tmp_path):
    code, out, _ = run(capsys, "eval-instance", "--manifest", str(dataset), "--out", str(tmp_path))
    assert code == 0
    assert (tmp_path / "report.txt").read_text() == out
    assert json.loads((tmp_path / "report.json").read_text())["num_images"] == 4


def test_rescore_requires_out(capsys, dataset):
    code, _, err = run(capsys, "rescore", "--manifest", str(dataset))
    assert code == 1 and "--out" in err


def test_rescore_then_calibrate(capsys, dataset, tmp_path):
    assert run(capsys, "rescore", "--manifest", str(dataset), "--out", str(tmp_path / "r"), "--topk", "2")[0] == 0
    doc = json.loads((tmp_path / "r" / "manifest.json").read_text())
    assert all(len(im["predictions"]) <= 2 for im in doc["images"])
    assert all("parsing_score" in p for im in doc["images"] for p in im["predictions"])
    code, out, _ = run(capsys, "calibrate", "--manifest", str(tmp_path / "r" / "manifest.json"),
                       "--out", str(tmp_path / "c"))
    assert code == 0 and "pearson" in json.loads(out)
    assert (tmp_path / "c" / "calibration.csv").read_text().startswith("image_id,pred_id,gt_miou")


def test_combine_maps(capsys, dataset, tmp_path):
    code, out, _ = run(capsys, "combine", "--manifest", str(dataset), "--out", str(tmp_path), "--format", "json")
    assert code == 0
    assert [r["name"] for r in json.loads(out)["rows"]] == ["global", "instance", "combine"]
    for mode in ("global", "instance", "combine"):
        assert len(list((tmp_path / "maps" / mode).glob("*.png"))) == 4


def test_upper_bound_gt_parsing(capsys, dataset):
    code, out, _ = run(capsys, "upper-bound", "--manifest", str(dataset), "--mode", "gt-parsing")
    assert code == 0
    row = out.splitlines()[-1].split()
    assert row == ["gt-parsing", "100.0", "100.0", "100.0", "100.0"]


def test_identical_argv_identical_output(capsys, dataset, tmp_path):
    outs = []
    for name in ("a", "b"):
        code, out, _ = run(capsys, "upper-bound", "--manifest", str(dataset), "--out", str(tmp_path / name))
        assert code == 0
        outs.append(out)
    assert outs[0] == outs[1]
    for f in ("report.json", "report.txt"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
