import csv
import json
import math
import subprocess
import sys
from types import SimpleNamespace

import numpy as np
import pytest

from consensus.bench import (EvalRecord, ProblemFormatError, SyntheticSceneSpec, emit_report,
                             evaluate_run, generate_synthetic, load_problem, save_problem)
from consensus.bench.cli import main
from consensus.core import (CorrespondenceSet, EstimationModel, ModelKind, sampson_errors,
                            transfer_errors)


def _result(model, mask=None):
    return SimpleNamespace(best_model=model, wall_time=0.002, iterations_used=3,
                           inlier_count=0 if mask is None else int(mask.sum()))


def test_minimal_file(tmp_path):
    f = tmp_path / "p.txt"
    f.write_text("USAC-PROBLEM v1 h 640 480 640 480\n1 2 3 4\n5 6 7 8\n9 1 2 3\n4 5 6 9\n")
    p = load_problem(f)
    assert p.kind is ModelKind.HOMOGRAPHY and len(p.data) == 4
    assert p.gt_model is None and p.gt_mask is None and p.intrinsics is None


def test_gt_and_mask(tmp_path):
    f = tmp_path / "p.txt"
    f.write_text("USAC-PROBLEM v1 homography 640 480 640 480\nGT 1 0 0 0 1 0 0 0 1\nMASK 101\n"
                 "1 2 1 2 0.5\n5 6 7 8 0.1\n9 1 9 1 0.9\n")
    p = load_problem(f)
    assert p.gt_mask.tolist() == [True, False, True]
    np.testing.assert_allclose(p.data.quality, [0.5, 0.1, 0.9])
    assert p.gt_model.kind is ModelKind.HOMOGRAPHY


@pytest.mark.parametrize("body, line", [
    ("USAC-PROBLEM v1 h 640 480 640 480\n1 2 3\n", 2),
    ("USAC-PROBLEM v1 h 640 480 640 480\nMASK 10\n1 2 3 4\n", 2),
    ("USAC-PROBLEM v1 h 640 480 640 480\n1 2 3 4\nGT 1 0 0 0 1 0 0 0 1\n", 3),
    ("USAC-PROBLEM v1 h 640 480 640 480\n1 2 3 x\n", 2),
    ("USAC-PROBLEM v2 h 640 480 640 480\n", 1),
])
def test_malformed_files_report_line(tmp_path, body, line):
    f = tmp_path / "p.txt"
    f.write_text(body)
    with pytest.raises(ProblemFormatError) as info:
        load_problem(f)
    assert info.value.line_no == line and f":{line}:" in str(info.value)


@pytest.mark.parametrize("kind", ["h", "f", "e"])
def test_round_trip_bitwise(tmp_path, kind):
    p = generate_synthetic(SyntheticSceneSpec(kind=kind, n_points=120, seed=3, with_quality=True))
    path = tmp_path / "p.txt"
    save_problem(path, kind, p.data, p.gt_model, p.intrinsics, p.gt_mask)
    q = load_problem(path)
    assert np.array_equal(q.data.pts1, p.data.pts1) and np.array_equal(q.data.pts2, p.data.pts2)
    assert np.array_equal(q.data.quality, p.data.quality)
    assert np.array_equal(q.gt_mask, p.gt_mask)
    np.testing.assert_allclose(q.gt_model.m, p.gt_model.m, rtol=0, atol=1e-15)
    if kind == "e":
        assert np.array_equal(q.intrinsics.K1, p.intrinsics.K1)


@pytest.mark.parametrize("kind", ["h", "f", "e"])
@pytest.mark.parametrize("mode", ["global", "clustered"])
def test_noise_free_inliers_fit_exactly(kind, mode):
    p = generate_synthetic(SyntheticSceneSpec(kind=kind, n_points=200, inlier_ratio=1.0,
                                              noise_px=0.0, mode=mode, seed=1))
    if kind == "h":
        r = transfer_errors(p.gt_model, p.clean_pts1, p.clean_pts2)
        r = r / np.linalg.norm(p.gt_model.m)
    elif kind == "f":
        r = sampson_errors(p.gt_model, p.clean_pts1, p.clean_pts2)
    else:
        n = p.intrinsics.normalize(CorrespondenceSet(p.clean_pts1, p.clean_pts2))
        r = sampson_errors(p.gt_model, n.pts1, n.pts2)
    assert np.max(r) < 1e-9
    np.testing.assert_array_equal(p.data.pts1, p.clean_pts1)


def test_inlier_count_exact():
    p = generate_synthetic(SyntheticSceneSpec(kind="f", n_points=1000, inlier_ratio=0.4, seed=0))
    assert p.gt_mask.sum() == 400


def test_essential_trace_constraint():
    E = generate_synthetic(SyntheticSceneSpec(kind="e", n_points=50, seed=2)).gt_model.m
    assert np.max(np.abs(2 * E @ E.T @ E - np.trace(E @ E.T) * E)) < 1e-10


def test_dominant_plane_and_bad_specs():
    p = generate_synthetic(SyntheticSceneSpec(kind="f", n_points=200, inlier_ratio=0.5,
                                              plane_fraction=0.85, seed=0))
    assert p.gt_mask.sum() == 100
    with pytest.raises(ValueError):
        SyntheticSceneSpec(inlier_ratio=0.0)
    with pytest.raises(ValueError):
        SyntheticSceneSpec(noise_px=-1)
    with pytest.raises(ValueError):
        generate_synthetic(SyntheticSceneSpec(kind="f", n_points=50, depth=(-5.0, -4.0)))


def test_evaluate_gt_and_absent_model():
    p = generate_synthetic(SyntheticSceneSpec(kind="f", n_points=100, noise_px=0.0, seed=0))
    rec = evaluate_run(_result(p.gt_model, p.gt_mask), p.data, p.gt_mask, "f")
    assert rec.error < 1e-9 and not rec.failed and rec.wall_time_ms == pytest.approx(2.0)
    rec = evaluate_run(_result(None), p.data, p.gt_mask, "f")
    assert rec.failed and math.isinf(rec.error)


def test_evaluate_h_rmse_hand_case():
    p1 = np.array([[10.0, 10.0], [20.0, 20.0], [30.0, 30.0], [0.0, 0.0]])
    p2 = p1 + np.array([[1.0, 0], [2.0, 0], [3.0, 0], [50.0, 0]])
    data = CorrespondenceSet(p1, p2, (100, 100))
    mask = np.array([True, True, True, False])
    rec = evaluate_run(_result(EstimationModel("h", np.eye(3))), data, mask, "h")
    assert rec.error == pytest.approx(math.sqrt(14 / 3)) == pytest.approx(2.160, abs=1e-3)


def test_record_invariant():
    with pytest.raises(ValueError):
        EvalRecord("a", "m", 20.0, 1.0, 10.0, failed=False)


def test_report_hand_case(tmp_path):
    recs = [EvalRecord(f"p{k}", "usac", e, 1.0 + k, 10.0) for k, e in enumerate([1, 2, 3, 100])]
    files = emit_report(recs, tmp_path, {"seed": 0})
    rows = list(csv.DictReader(open(files["summary_csv"])))
    assert float(rows[0]["eps_med"]) == 2.5 and float(rows[0]["f_percent"]) == 25.0
    assert float(rows[0]["t_mean_ms"]) == 2.5
    cdf = list(csv.reader(open(tmp_path / "cdf_errors_usac.csv")))
    assert cdf[0] == ["value", "cumulative"] and float(cdf[-1][1]) == 1.0
    assert [float(r[0]) for r in cdf[1:]] == [1, 2, 3, 100]
    manifest = json.loads(files["manifest"].read_text())
    assert manifest["manifest"] == {"seed": 0} and len(manifest["records"]) == 4
    for r in manifest["records"]:
        assert r["failed"] == (float(r["error"]) > 0.01 * 1000)


def test_report_single_record(tmp_path):
    files = emit_report([EvalRecord("p", "m", 0.7, 3.0, 10.0)], tmp_path)
    assert float(list(csv.DictReader(open(files["summary_csv"])))[0]["eps_med"]) == 0.7
    with pytest.raises(ValueError):
        emit_report([], tmp_path)


def test_report_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit_report([EvalRecord("p", "m", 0.7, 3.0, 10.0)], blocker / "sub")


def _synth(tmp_path, kind="h", count=2):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": kind, "n_points": 150, "inlier_ratio": 0.6,
                                "count": count, "seed": 1}))
    out = tmp_path / "probs"
    assert main(["synth", str(spec), "--out", str(out)]) == 0
    return out


def test_cli_estimate_and_exit_codes(tmp_path, capsys):
    probs = _synth(tmp_path)
    out = tmp_path / "r.json"
    assert main(["estimate", str(probs / "problem_0000.txt"), "--model", "h", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["inlier_count"] > 0 and doc["error"] < doc["failure_limit"]
    bad = tmp_path / "bad.txt"
    bad.write_text("nonsense\n")
    assert main(["estimate", str(bad)]) == 1
    assert main(["estimate", str(tmp_path / "missing.txt")]) == 1
    degenerate = tmp_path / "same.txt"
    degenerate.write_text("USAC-PROBLEM v1 h 10 10 10 10\n" + "1 1 1 1\n" * 6)
    assert main(["estimate", str(degenerate), "--max-iters", "5"]) == 2


def test_cli_bench_deterministic_and_seed_env(tmp_path, monkeypatch):
    probs = _synth(tmp_path, count=2)
    for name in ("a", "b"):
        assert main(["bench", str(probs), "--methods", "usac,ransac", "--seed", "3",
                     "--out", str(tmp_path / name)]) == 0
    def errors(name):
        doc = json.loads((tmp_path / name / "manifest.json").read_text())
        return [r["error"] for r in doc["records"]], doc["manifest"]["seed"]
    assert errors("a") == errors("b")
    monkeypatch.setenv("USAC_SEED", "11")
    assert main(["bench", str(probs), "--methods", "usac", "--seed", "3", "--out",
                 str(tmp_path / "c")]) == 0
    assert errors("c")[1] == 11
    assert main(["bench", str(probs), "--methods", "nope", "--out", str(tmp_path / "d")]) == 1


def test_module_entry_point(tmp_path):
    probs = _synth(tmp_path, count=1)
    proc = subprocess.run([sys.executable, "-m", "consensus", "estimate",
                           str(next(probs.glob("*.txt")) if probs.is_dir() else probs)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and '"inlier_count"' in proc.stdout
