"""Command-line pipeline tests, run in process through main(argv)."""

import json

import numpy as np
import pytest
from PIL import Image

from splatprune.cli import main
from splatprune.model import load_ply
from splatprune.quant import read_scores_csv


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """One synthesized scene shared by the read-only CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    code = main(
        [
            "synth",
            "--seed", "5",
            "--count", "30",
            "--mode", "layered",
            "--out-scene", str(root / "scene.ply"),
            "--out-views", str(root / "views.json"),
        ]
    )
    assert code == 0
    return root


def scene_args(workdir):
    return ["--scene", str(workdir / "scene.ply"), "--views", str(workdir / "views.json")]


class TestSynth:
    def test_outputs_and_manifest(self, workdir):
        assert (workdir / "scene.ply").exists()
        assert (workdir / "views.json").exists()
        manifest = json.loads((workdir / "scene.ply.manifest.json").read_text())
        assert manifest["tool"] == "splatprune"
        assert manifest["command"] == "synth"
        assert manifest["params"]["seed"] == 5
        assert manifest["params"]["count"] == 30
        assert str(workdir / "views.json") in manifest["outputs"]
        assert manifest["wall_time_seconds"] >= 0

    def test_rerun_is_byte_identical(self, workdir, tmp_path):
        code = main(
            [
                "synth",
                "--seed", "5",
                "--count", "30",
                "--mode", "layered",
                "--out-scene", str(tmp_path / "again.ply"),
                "--out-views", str(tmp_path / "again.json"),
            ]
        )
        assert code == 0
        assert (tmp_path / "again.ply").read_bytes() == (workdir / "scene.ply").read_bytes()

    def test_bad_mode_exits_2(self, tmp_path):
        with pytest.raises(SystemExit) as ei:
            main(
                [
                    "synth", "--seed", "0", "--count", "5", "--mode", "nope",
                    "--out-scene", str(tmp_path / "s.ply"),
                    "--out-views", str(tmp_path / "v.json"),
                ]
            )
        assert ei.value.code == 2


class TestRender:
    def test_png_views(self, workdir, tmp_path):
        out = tmp_path / "frames"
        code = main(["render", *scene_args(workdir), "--out-dir", str(out)])
        assert code == 0
        for name in ("view00", "view01", "view02"):
            img = Image.open(out / f"{name}.png")
            assert img.size == (64, 64)
            assert img.mode == "RGB"
        assert (out / "render.manifest.json").exists()

    def test_raw_format_is_deterministic(self, workdir, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out in (a, b):
            code = main(
                ["render", *scene_args(workdir), "--out-dir", str(out), "--format", "raw"]
            )
            assert code == 0
        blob_a = (a / "view00.raw").read_bytes()
        assert blob_a == (b / "view00.raw").read_bytes()
        assert len(blob_a) == 64 * 64 * 3 * 4
        img = np.frombuffer(blob_a, dtype="<f4").reshape(64, 64, 3)
        assert np.isfinite(img).all()
        assert img.max() > 0

    def test_threads_do_not_change_raw_bytes(self, workdir, tmp_path):
        seq = tmp_path / "seq"
        par = tmp_path / "par"
        main(["render", *scene_args(workdir), "--out-dir", str(seq), "--format", "raw"])
        main(
            [
                "render", *scene_args(workdir), "--out-dir", str(par),
                "--format", "raw", "--threads", "4",
            ]
        )
        for name in ("view00", "view01", "view02"):
            assert (seq / f"{name}.raw").read_bytes() == (par / f"{name}.raw").read_bytes()


class TestQuantify:
    def test_scores_histogram_manifest(self, workdir, tmp_path):
        scores = tmp_path / "scores.csv"
        hist = tmp_path / "hist.csv"
        code = main(
            [
                "quantify", *scene_args(workdir),
                "--out", str(scores), "--histogram", str(hist),
            ]
        )
        assert code == 0
        buf, meta = read_scores_csv(scores)
        assert len(buf) == 30
        assert (buf.delta_se >= 0).all()
        assert buf.touch_count.sum() > 0
        assert meta["epsilon"] == "1e-09"
        assert meta["n_max"] == "64"
        lines = hist.read_text().splitlines()
        assert lines[0] == "log10_lo,log10_hi,count"
        assert lines[1].startswith("-inf,-inf,")
        total = sum(int(l.split(",")[2]) for l in lines[1:])
        assert total == 30
        manifest = json.loads(scores.with_name("scores.csv.manifest.json").read_text())
        assert manifest["command"] == "quantify"
        assert manifest["params"]["epsilon"] == 1e-9
        assert manifest["params"]["n_max"] == 64
        assert str(workdir / "scene.ply") in manifest["inputs"]

    def test_reruns_and_threads_byte_identical(self, workdir, tmp_path):
        paths = [tmp_path / f"s{i}.csv" for i in range(3)]
        main(["quantify", *scene_args(workdir), "--out", str(paths[0])])
        main(["quantify", *scene_args(workdir), "--out", str(paths[1])])
        main(["quantify", *scene_args(workdir), "--out", str(paths[2]), "--threads", "4"])
        blobs = [p.read_bytes() for p in paths]
        assert blobs[0] == blobs[1]
        assert blobs[0] == blobs[2]


class TestPrune:
    def test_ratio_prune_with_report(self, workdir, tmp_path):
        out = tmp_path / "pruned.ply"
        report_path = tmp_path / "report.json"
        code = main(
            [
                "prune", *scene_args(workdir),
                "--out", str(out), "--ratio", "0.4", "--report", str(report_path),
            ]
        )
        assert code == 0
        pruned = load_ply(out)
        assert len(pruned) == 30 - 12
        report = json.loads(report_path.read_text())
        assert report["policy"] == "ratio"
        assert report["removed_total"] == 12

    def test_budget_prune_with_cycles(self, workdir, tmp_path):
        out = tmp_path / "pruned.ply"
        report_path = tmp_path / "report.json"
        code = main(
            [
                "prune", *scene_args(workdir),
                "--out", str(out), "--budget", "1e-3", "--cycles", "2",
                "--report", str(report_path),
            ]
        )
        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["policy"] == "budget"
        assert report["n_cycles"] == 2
        assert len(load_ply(out)) == 30 - report["removed_total"]

    def test_ratio_and_budget_mutually_exclusive(self, workdir, tmp_path):
        with pytest.raises(SystemExit) as ei:
            main(
                [
                    "prune", *scene_args(workdir),
                    "--out", str(tmp_path / "x.ply"), "--ratio", "0.4", "--budget", "1.0",
                ]
            )
        assert ei.value.code == 2


class TestEval:
    def test_metrics_json_and_table(self, workdir, tmp_path, capsys):
        pruned = tmp_path / "pruned.ply"
        main(["prune", *scene_args(workdir), "--out", str(pruned), "--ratio", "0.5"])
        out = tmp_path / "metrics.json"
        code = main(
            [
                "eval",
                "--scene-a", str(workdir / "scene.ply"),
                "--scene-b", str(pruned),
                "--views", str(workdir / "views.json"),
                "--out", str(out),
            ]
        )
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["view_count"] == 3
        assert doc["mean_psnr"] > 10.0
        table = capsys.readouterr().out
        assert "view00" in table
        assert "mean" in table


class TestAudit:
    def test_audit_csv_and_summary(self, workdir, tmp_path):
        out = tmp_path / "audit.csv"
        code = main(["audit", *scene_args(workdir), "--out", str(out)])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("gaussian_id,analytic_delta_se")
        assert len(lines) == 31
        summary = json.loads(out.with_suffix(".json").read_text())
        assert summary["gaussians"] == 30
        assert summary["max_rel_discrepancy"] <= 1e-4
        assert summary["flagged_pixels"] == 0

    def test_guard_exits_2(self, workdir, tmp_path):
        code = main(
            [
                "audit", *scene_args(workdir),
                "--out", str(tmp_path / "a.csv"), "--max-gaussians", "10",
            ]
        )
        assert code == 2


class TestErrors:
    def test_missing_scene_names_path(self, workdir, tmp_path, capsys):
        missing = tmp_path / "missing.ply"
        code = main(
            [
                "render", "--scene", str(missing),
                "--views", str(workdir / "views.json"),
                "--out-dir", str(tmp_path / "out"),
            ]
        )
        assert code == 2
        assert str(missing) in capsys.readouterr().err

    def test_corrupt_ply_reports_offset(self, workdir, tmp_path, capsys):
        bad = tmp_path / "bad.ply"
        bad.write_bytes(b"not a ply at all\nend_header\n")
        code = main(
            [
                "quantify", "--scene", str(bad),
                "--views", str(workdir / "views.json"),
                "--out", str(tmp_path / "s.csv"),
            ]
        )
        assert code == 2
        err = capsys.readouterr().err
        assert "byte offset" in err

    def test_bad_background_exits_2(self, workdir, tmp_path, capsys):
        code = main(
            [
                "render", *scene_args(workdir),
                "--out-dir", str(tmp_path / "out"), "--background", "1,2",
            ]
        )
        assert code == 2
        assert "background" in capsys.readouterr().err

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as ei:
            main(["--version"])
        assert ei.value.code == 0
        assert "splatprune" in capsys.readouterr().out
