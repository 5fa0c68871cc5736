import json

import numpy as np
import pytest

from vinemap.cli import main
from vinemap.fusion import DISEASE_PALETTE
from vinemap.raster import write_png
from vinemap.segmap import load_mask, save_mask
from vinemap.synth import make_pair


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    """Small synthetic pair on disk shared by the CLI tests."""
    root = tmp_path_factory.mktemp("demo")
    assert main(["synth", "--out-dir", str(root), "--count", "2",
                 "--seed", "3", "--width", "320", "--height", "240"]) == 0
    manifest = json.loads((root / "corpus.json").read_text())
    return root, manifest


class TestRegisterCommand:
    def test_register_writes_report_and_warp(self, demo, tmp_path):
        root, manifest = demo
        entry = manifest["pairs"][0]
        warped = tmp_path / "warped.png"
        report = tmp_path / "report.json"
        code = main(
            [
                "register",
                "--vis", str(root / entry["vis"]),
                "--ir", str(root / entry["ir"]),
                "--out-warped", str(warped),
                "--out-report", str(report),
                "--seed", "1",
            ]
        )
        assert code == 0
        assert warped.exists()
        payload = json.loads(report.read_text())
        assert payload["rmse"] ** 2 == pytest.approx(
            payload["rmse_x"] ** 2 + payload["rmse_y"] ** 2, abs=1e-9
        )
        assert payload["mode"] in ("standard", "optimized")
        assert len(payload["homography"]) == 9

    def test_missing_input_exits_2(self, tmp_path, capsys):
        code = main(
            [
                "register",
                "--vis", str(tmp_path / "nope.png"),
                "--ir", str(tmp_path / "nope2.png"),
                "--out-warped", str(tmp_path / "w.png"),
                "--out-report", str(tmp_path / "r.json"),
            ]
        )
        assert code == 2
        assert "nope.png" in capsys.readouterr().err

    def test_registration_failure_exits_3_and_cleans_up(self, tmp_path):
        flat = np.full((64, 64, 3), 100, dtype=np.uint8)
        vis_p = tmp_path / "v.png"
        ir_p = tmp_path / "i.png"
        write_png(vis_p, flat)
        write_png(ir_p, flat[:, :, 0])
        out_w = tmp_path / "w.png"
        out_r = tmp_path / "r.json"
        code = main(
            ["register", "--vis", str(vis_p), "--ir", str(ir_p),
             "--out-warped", str(out_w), "--out-report", str(out_r)]
        )
        assert code == 3
        assert not out_w.exists()
        assert not out_r.exists()


class TestTrainSegmentCommands:
    def test_train_then_segment(self, demo, tmp_path):
        root, manifest = demo
        e = manifest["pairs"][0]
        model = tmp_path / "model.json"
        code = main(
            ["train",
             "--image", str(root / e["vis"]), "--labels", str(root / e["labels_vis"]),
             "--out", str(model), "--epochs", "4", "--seed", "2"]
        )
        assert code == 0
        out_mask = tmp_path / "seg.png"
        code = main(
            ["segment", "--image", str(root / e["vis"]),
             "--model", str(model), "--out", str(out_mask)]
        )
        assert code == 0
        labels = load_mask(out_mask)
        truth = load_mask(root / e["labels_vis"])
        assert labels.shape == truth.shape
        assert np.mean(labels == truth) > 0.85

    def test_segment_external_mask_passthrough(self, demo, tmp_path):
        root, manifest = demo
        e = manifest["pairs"][0]
        out_mask = tmp_path / "ext.png"
        code = main(
            ["segment", "--image", str(root / e["vis"]),
             "--mask", str(root / e["labels_vis"]), "--out", str(out_mask)]
        )
        assert code == 0
        assert np.array_equal(load_mask(out_mask), load_mask(root / e["labels_vis"]))

    def test_model_and_mask_together_rejected(self, demo, tmp_path):
        root, manifest = demo
        e = manifest["pairs"][0]
        code = main(
            ["segment", "--image", str(root / e["vis"]),
             "--out", str(tmp_path / "o.png")]
        )
        assert code == 2


class TestFuseEvaluateCommands:
    def test_fuse_and_evaluate(self, demo, tmp_path):
        root, manifest = demo
        e = manifest["pairs"][0]
        disease = tmp_path / "disease.png"
        code = main(
            ["fuse", "--vis-mask", str(root / e["labels_vis"]),
             "--ir-mask", str(root / e["labels_vis"]), "--out", str(disease)]
        )
        assert code == 0
        report = tmp_path / "metrics.json"
        csv = tmp_path / "metrics.csv"
        code = main(
            ["evaluate", "--pred", str(disease), "--truth", str(disease),
             "--out", str(report), "--csv", str(csv),
             "--window", "32", "--stride", "32"]
        )
        assert code == 0
        payload = json.loads(report.read_text())
        assert len(payload["reports"]) == 4  # leaf+grapevine x AND+OR
        for r in payload["reports"]:
            assert r["accuracy"] == 1.0
        assert "accuracy" in csv.read_text()

    def test_fuse_dimension_mismatch_exits_2(self, demo, tmp_path):
        root, manifest = demo
        e = manifest["pairs"][0]
        small = tmp_path / "small.png"
        save_mask(np.zeros((8, 8), dtype=np.uint8), small)
        code = main(
            ["fuse", "--vis-mask", str(root / e["labels_vis"]),
             "--ir-mask", str(small), "--out", str(tmp_path / "d.png")]
        )
        assert code == 2


class TestAugmentCommand:
    def test_augment_writes_patches_and_manifest(self, tmp_path):
        pair = make_pair(11, width=1000, height=760)
        frame = tmp_path / "frame.png"
        labels = tmp_path / "labels.png"
        write_png(frame, pair.vis)
        save_mask(pair.labels_vis, labels)
        grid = tmp_path / "grid.json"
        grid.write_text(json.dumps({"rotations": [0.0], "scales": [1.0], "brightness": [1.0]}))
        out_dir = tmp_path / "patches"
        code = main(
            ["augment", "--frame", str(frame), "--labels", str(labels),
             "--out-dir", str(out_dir), "--grid", str(grid)]
        )
        assert code == 0
        manifest = json.loads((out_dir / "augment.json").read_text())
        assert len(manifest["patches"]) == 6  # 3 x-positions x 2 y-positions
        first = manifest["patches"][0]
        assert (out_dir / first["image"]).exists()
        assert (out_dir / first["labels"]).exists()


class TestPipelineCommand:
    def test_single_pair_with_external_masks(self, demo, tmp_path):
        root, manifest = demo
        e = manifest["pairs"][0]
        out_dir = tmp_path / "run"
        code = main(
            ["pipeline",
             "--vis", str(root / e["vis"]), "--ir", str(root / e["ir"]),
             "--vis-mask", str(root / e["labels_vis"]),
             "--ir-mask", str(root / e["labels_ir"]),
             "--truth-vis", str(root / e["labels_vis"]),
             "--truth-ir", str(root / e["labels_vis"]),
             "--out-dir", str(out_dir), "--seed", "5"]
        )
        assert code == 0
        for name in (
            "ir_registered.png",
            "ir_validity.png",
            "registration.json",
            "classmap_visible.png",
            "classmap_infrared.png",
            "disease_map.png",
            "overlay.png",
            "metrics.json",
            "manifest.json",
        ):
            assert (out_dir / name).exists(), name
        manifest_payload = json.loads((out_dir / "manifest.json").read_text())
        rt = manifest_payload["runtimes"]
        for stage in ("registration", "segmentation_visible", "segmentation_infrared",
                      "fusion", "total"):
            assert rt[stage] >= 0.0
        assert rt["total"] >= rt["registration"]
        disease = load_mask(out_dir / "disease_map.png", palette=DISEASE_PALETTE)
        assert disease.shape == (240, 320)

    def test_missing_modality_choice_rejected(self, demo, tmp_path):
        root, manifest = demo
        e = manifest["pairs"][0]
        code = main(
            ["pipeline", "--vis", str(root / e["vis"]), "--ir", str(root / e["ir"]),
             "--out-dir", str(tmp_path / "x")]
        )
        assert code == 2

    def test_corpus_mode_with_jobs(self, demo, tmp_path):
        root, _ = demo
        out_dir = tmp_path / "corpus_run"
        code = main(
            ["pipeline", "--corpus", str(root), "--out-dir", str(out_dir),
             "--seed", "0", "--jobs", "2"]
        )
        assert code == 0
        stats = json.loads((out_dir / "registration_stats.json").read_text())
        assert stats["count"] == 2
        for measure in ("rmse", "runtime_seconds", "iterations"):
            line = stats[measure]
            assert set(line) == {"mean", "std", "min", "max"}
            assert line["min"] <= line["mean"] <= line["max"]
        for i in range(2):
            assert (out_dir / f"pair_{i:03d}" / "disease_map.png").exists()
            assert (out_dir / f"pair_{i:03d}" / "metrics.json").exists()

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert "vinemap" in capsys.readouterr().out


class TestDebugFeaturesDump:
    def test_register_debug_dump(self, demo, tmp_path):
        root, manifest = demo
        e = manifest["pairs"][0]
        dump = tmp_path / "features.json"
        code = main(
            ["register",
             "--vis", str(root / e["vis"]), "--ir", str(root / e["ir"]),
             "--out-warped", str(tmp_path / "w.png"),
             "--out-report", str(tmp_path / "r.json"),
             "--debug-features", str(dump), "--seed", "1"]
        )
        assert code == 0
        payload = json.loads(dump.read_text())
        assert payload["visible"] and payload["infrared"] and payload["matches"]
        kp = payload["visible"][0]
        assert set(kp) == {"x", "y", "scale", "orientation", "response"}
        m = payload["matches"][0]
        assert set(m) == {"q", "t", "dist"}
        assert m["dist"] <= payload["match_threshold"]
