"""CLI surface: subcommand behavior, exit codes, and CLI/library parity."""

from __future__ import annotations

import json

import numpy as np
import pytest

from rulerkit import (
    Heatmap,
    Point2,
    PointAnnotation,
    estimate_batch,
    estimate_from_points,
    extract_peaks,
    render_gaussians,
)
from rulerkit.cli import main
from rulerkit.deepgp import load_model
from rulerkit.io_formats import (
    annotation_to_dict,
    read_detections,
    read_json,
    read_manifest,
    write_detections,
    write_image,
    write_manifest,
    write_pfm,
)


def _run(capsys, argv: list[str]) -> tuple[int, dict]:
    code = main(argv)
    out = capsys.readouterr().out.strip().splitlines()
    payload = json.loads(out[-1]) if out else {}
    return code, payload


def _collinear(n: int = 11, spacing: float = 12.0) -> list[Point2]:
    # Same parity-correct vertical fixture as the pipeline tests so the
    # dominant Hough bin lands on the exact angle.
    return [Point2(40.0, 100.0 + spacing * i) for i in range(n)]


def _write_point_entry(tmp_path, image_id: str, spacing: float) -> dict:
    img = np.zeros((120, 360, 3), dtype=np.uint8)
    write_image(tmp_path / f"{image_id}.png", img)
    marks = [Point2(20.0 + spacing * i, 60.0) for i in range(9)]
    annotation = annotation_to_dict(PointAnnotation([(0, marks)]))
    det_name = f"{image_id}_det.json"
    write_detections(tmp_path / det_name, image_id, marks, source="ground-truth")
    return {
        "id": image_id,
        "image": f"{image_id}.png",
        "size": [360, 120],
        "annotation": annotation,
        "detections": det_name,
    }


def _eval_manifest(tmp_path) -> str:
    entries = [
        _write_point_entry(tmp_path, "img0", 12.0),
        _write_point_entry(tmp_path, "img1", 20.0),
        _write_point_entry(tmp_path, "img2", 33.0),
    ]
    manifest = tmp_path / "manifest.json"
    write_manifest(manifest, entries)
    return str(manifest)


# --------------------------------------------------------------------- synth


def test_synth_writes_samples_and_manifest(tmp_path, capsys) -> None:
    out_dir = tmp_path / "synth"
    code, payload = _run(
        capsys,
        ["synth", "--count", "2", "--seed", "11", "--out", str(out_dir)],
    )
    assert code == 0
    assert payload == {"count": 2, "out": str(out_dir)}
    entries = read_manifest(out_dir / "manifest.json")
    assert len(entries) == 2
    for i, entry in enumerate(entries):
        assert entry["id"] == i
        assert entry["image"] == f"sample_{i:05d}.png"
        assert entry["size"] == [768, 768]
        assert entry["annotation"]["type"] == "points"
        assert len(entry["cm_marks"]) >= 2
        assert (out_dir / entry["image"]).is_file()


def test_synth_seed_7_twice_byte_identical(tmp_path, capsys) -> None:
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        code, _ = _run(capsys, ["synth", "--count", "3", "--seed", "7", "--out", str(d)])
        assert code == 0
    names = sorted(p.name for p in dirs[0].iterdir())
    assert names == sorted(p.name for p in dirs[1].iterdir())
    for name in names:
        assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()


# --------------------------------------------------------------------- peaks


def test_peaks_matches_library_extraction(tmp_path, capsys) -> None:
    marks = [Point2(15.0 + 18.0 * i, 40.0) for i in range(6)]
    hm = render_gaussians(marks, sigma=2.0, width=140, height=80)
    pfm = tmp_path / "scores.pfm"
    write_pfm(pfm, hm.values)
    det = tmp_path / "det.json"
    code, payload = _run(
        capsys,
        ["peaks", "--heatmap", str(pfm), "--tau", "0.5", "--kernel", "5",
         "--sigma", "1.0", "--out", str(det)],
    )
    assert code == 0
    image_id, points, source = read_detections(det)
    assert image_id == "scores.pfm"
    assert source == "heatmap"
    expected = extract_peaks(Heatmap(np.clip(hm.values, 0.0, 1.0)), 0.5, 5, 1.0)
    assert points == expected
    assert payload["points"] == len(expected)


def test_peaks_missing_file_exits_3(tmp_path, capsys) -> None:
    code = main(["peaks", "--heatmap", str(tmp_path / "nope.pfm")])
    assert code == 3
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "OSError"


# ----------------------------------------------------------------------- fit


def test_fit_two_mark_gp_de_exit_zero_status_failed(tmp_path, capsys) -> None:
    det = tmp_path / "det.json"
    write_detections(det, "two", [Point2(0.0, 0.0), Point2(10.0, 0.0)], source="heatmap")
    code, payload = _run(capsys, ["fit", "--points", str(det), "--method", "gp-de"])
    assert code == 0
    assert payload["status"] == "failed"
    assert payload["pixels_per_cm"] == 0.0


def test_fit_direct_parity_with_library(tmp_path, capsys) -> None:
    points = _collinear()
    det = tmp_path / "det.json"
    write_detections(det, "ruler", points, source="heatmap")
    res_path = tmp_path / "res.json"
    code, payload = _run(
        capsys,
        ["fit", "--points", str(det), "--method", "direct", "--out", str(res_path)],
    )
    assert code == 0
    lib = estimate_from_points(points, method="direct")
    assert payload["pixels_per_cm"] == lib.estimate.pixels_per_cm
    assert payload["status"] == lib.estimate.status == "ok"
    assert payload["marks_used"] == lib.estimate.marks_used
    assert payload["line"]["rho"] == lib.detection.line.rho
    assert payload["line"]["theta"] == lib.detection.line.theta
    assert payload["line"]["support"] == lib.detection.support
    # The --out file carries the same payload as stdout.
    assert read_json(res_path) == payload


def test_fit_deepgp_without_model_is_usage_failure(tmp_path, capsys) -> None:
    det = tmp_path / "det.json"
    write_detections(det, "ruler", _collinear(), source="heatmap")
    code = main(["fit", "--points", str(det), "--method", "deepgp"])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert "model" in err["message"]


# -------------------------------------------------------------- deepgp-train


def test_deepgp_train_writes_model_and_log(tmp_path, capsys) -> None:
    model_path = tmp_path / "tiny.dgp1"
    log_path = tmp_path / "loss.jsonl"
    code, payload = _run(
        capsys,
        ["deepgp-train", "--steps", "4", "--batch", "8", "--seed", "3",
         "--out", str(model_path), "--log", str(log_path)],
    )
    assert code == 0
    assert payload == {"out": str(model_path), "steps": 4, "batch": 8}
    model = load_model(model_path)
    assert model.dims == (128, 256, 256, 256, 3)
    lines = log_path.read_text(encoding="utf-8").strip().splitlines()
    assert len(lines) == 4
    for i, line in enumerate(lines):
        rec = json.loads(line)
        assert rec["step"] == i
        assert np.isfinite(rec["loss"])


# ---------------------------------------------------------------------- eval


def test_eval_report_matches_library_batch(tmp_path, capsys) -> None:
    manifest = _eval_manifest(tmp_path)
    report_path = tmp_path / "report.json"
    csv_path = tmp_path / "report.csv"
    code, payload = _run(
        capsys,
        ["eval", "--manifest", manifest, "--method", "direct",
         "--source", "detections", "--out", str(report_path), "--csv", str(csv_path)],
    )
    assert code == 0
    lib = estimate_batch(manifest, "direct", source="detections", n=768.0)
    assert payload["mape"] == pytest.approx(lib["mape"], abs=1e-12)
    report = read_json(report_path)
    assert report["mape"] == lib["mape"]
    assert report["n"] == lib["n"]
    assert [rec["predicted"] for rec in report["records"]] == [
        rec["predicted"] for rec in lib["records"]
    ]
    csv_lines = csv_path.read_text(encoding="utf-8").strip().splitlines()
    assert csv_lines[0] == "id,predicted,ground_truth,size,elapsed_ms"
    assert len(csv_lines) == 1 + len(lib["records"])


def test_eval_requires_manifest(capsys) -> None:
    code = main(["eval", "--method", "direct"])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "RulerkitError"


# --------------------------------------------------------------------- bench


def test_bench_reports_each_method(tmp_path, capsys) -> None:
    manifest = _eval_manifest(tmp_path)
    code, payload = _run(
        capsys,
        ["bench", "--manifest", manifest, "--methods", "direct,median"],
    )
    assert code == 0
    assert set(payload["methods"]) == {"direct", "median"}
    for stats in payload["methods"].values():
        assert stats["mape"] <= 0.01
        assert stats["ms_per_sample"] >= 0.0


def test_bench_unknown_method_exits_2(tmp_path, capsys) -> None:
    manifest = _eval_manifest(tmp_path)
    code = main(["bench", "--manifest", manifest, "--methods", "direct,warp"])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert "warp" in err["message"]


# ------------------------------------------------------------ errors / config


def test_unknown_flag_exits_2_with_json_stderr(capsys) -> None:
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--bogus", "x"])
    assert exc.value.code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "UsageError"


def test_invalid_method_choice_exits_2(tmp_path, capsys) -> None:
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--points", "det.json", "--method", "warp"])
    assert exc.value.code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "UsageError"


def test_config_file_supplies_defaults_and_flags_win(tmp_path, capsys) -> None:
    # Two isolated single-pixel peaks with different heights: tau selects
    # between one and two detections.
    grid = np.zeros((40, 40), dtype=np.float32)
    grid[10, 10] = 1.0
    grid[30, 30] = 0.7
    pfm = tmp_path / "two.pfm"
    write_pfm(pfm, grid)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"tau": 0.9}), encoding="utf-8")

    det = tmp_path / "det.json"
    base = ["peaks", "--heatmap", str(pfm), "--out", str(det)]
    _, payload = _run(capsys, base)
    assert payload["points"] == 2  # built-in default tau 0.5
    _, payload = _run(capsys, base + ["--config", str(cfg)])
    assert payload["points"] == 1  # config raises tau to 0.9
    _, payload = _run(capsys, base + ["--config", str(cfg), "--tau", "0.4"])
    assert payload["points"] == 2  # explicit flag beats config
