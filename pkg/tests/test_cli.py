import json
from pathlib import Path

import numpy as np
import pytest

from bathyseg.cli import run
from bathyseg.grid_io import GeoGrid, RasterFormat, read_grid, write_grid
from bathyseg.synthgen import DatasetManifest


def write_raster(path, depth, px=1.0):
    depth = np.asarray(depth, dtype=np.float32)
    g = GeoGrid(depth=depth, valid=np.ones_like(depth, dtype=bool),
                origin_easting=0.0, origin_northing=depth.shape[0] * px,
                pixel_size=px, crs_id=32616)
    Path(path).write_bytes(write_grid(g, RasterFormat.INTERNAL_BINARY))
    return g


def synth_and_train(tmp_path, seed=3, epochs=2):
    data = tmp_path / "data"
    assert run(["synth", "--out", str(data), "--synthetic", "8", "--terrain-only", "8",
                "--rows", "32", "--cols", "32", "--seed", str(seed)]) == 0
    weights = tmp_path / "model.swnn"
    assert run(["train", "--manifest", str(data / "manifest.tsv"), "--out", str(weights),
                "--epochs", str(epochs), "--stages", "1", "--base-channels", "2",
                "--batch-size", "4", "--seed", str(seed)]) == 0
    return data, weights


class TestConvert:
    def test_bgrd_to_asc_and_back(self, tmp_path, capsys):
        src = tmp_path / "a.bgrd"
        g = write_raster(src, np.arange(12.0).reshape(3, 4))
        out = tmp_path / "a.asc"
        assert run(["convert", "--input", str(src), "--output", str(out)]) == 0
        again = read_grid(out.read_bytes(), RasterFormat.ESRI_ASCII)
        assert np.abs(again.depth - g.depth).max() <= 1e-4

    def test_unknown_flag_exits_1_no_files(self, tmp_path):
        out = tmp_path / "x.bgrd"
        code = run(["convert", "--input", "a", "--output", str(out), "--bogus"])
        assert code == 1
        assert not out.exists()

    def test_missing_input_is_data_error(self, tmp_path):
        code = run(["convert", "--input", str(tmp_path / "none.bgrd"),
                    "--output", str(tmp_path / "o.asc")])
        assert code == 2

    def test_corrupt_input_no_partial_output(self, tmp_path):
        src = tmp_path / "bad.bgrd"
        src.write_bytes(b"BGRDgarbage")
        out = tmp_path / "out.asc"
        assert run(["convert", "--input", str(src), "--output", str(out)]) == 2
        assert not out.exists()
        assert not list(tmp_path.glob("*.tmp"))


class TestPipeline:
    def test_synth_train_infer_writes_artifacts(self, tmp_path):
        data, weights = synth_and_train(tmp_path)
        manifest = DatasetManifest.load(data / "manifest.tsv")
        sample = manifest.entries[0].sample_path
        prefix = tmp_path / "run"
        assert run(["infer", "--input", str(data / sample), "--weights", str(weights),
                    "--threshold", "0.5", "--min-area", "10",
                    "--out-prefix", str(prefix)]) == 0
        assert (tmp_path / "run.prob.bgrd").exists()
        assert (tmp_path / "run.mask.bgrd").exists()
        doc = json.loads((tmp_path / "run.boxes.geojson").read_text())
        assert doc["type"] == "FeatureCollection"

    def test_depression_backend_no_weights_needed(self, tmp_path):
        src = tmp_path / "flat.bgrd"
        depth = np.full((32, 32), 100.0, dtype=np.float32)
        depth[10:20, 10:20] = 99.5
        write_raster(src, depth)
        prefix = tmp_path / "dep"
        assert run(["infer", "--input", str(src), "--backend", "depression",
                    "--threshold", "0.5", "--min-area", "0",
                    "--out-prefix", str(prefix)]) == 0
        mask = read_grid((tmp_path / "dep.mask.bgrd").read_bytes(), RasterFormat.INTERNAL_BINARY)
        assert mask.depth[12, 12] == 1.0

    def test_cnn_requires_weights(self, tmp_path):
        src = tmp_path / "t.bgrd"
        write_raster(src, np.full((16, 16), 50.0))
        assert run(["infer", "--input", str(src), "--out-prefix", str(tmp_path / "x")]) == 1

    def test_determinism_byte_identical(self, tmp_path):
        outs = []
        for name in ("one", "two"):
            base = tmp_path / name
            base.mkdir()
            data, weights = synth_and_train(base, seed=11, epochs=1)
            sample = DatasetManifest.load(data / "manifest.tsv").entries[0].sample_path
            prefix = base / "run"
            assert run(["infer", "--input", str(data / sample), "--weights", str(weights),
                        "--out-prefix", str(prefix)]) == 0
            outs.append({
                "weights": weights.read_bytes(),
                "manifest": (data / "manifest.tsv").read_bytes(),
                "prob": (base / "run.prob.bgrd").read_bytes(),
                "mask": (base / "run.mask.bgrd").read_bytes(),
                "boxes": (base / "run.boxes.geojson").read_bytes(),
            })
        assert outs[0] == outs[1]


class TestEval:
    def test_perfect_predictions_score_one(self, tmp_path):
        data, _ = synth_and_train(tmp_path)
        manifest = DatasetManifest.load(data / "manifest.tsv")
        pred_dir = tmp_path / "preds"
        pred_dir.mkdir()
        wrote = 0
        for e in manifest.for_split("test"):
            label = read_grid((data / e.label_path).read_bytes(), RasterFormat.INTERNAL_BINARY)
            stem = Path(e.sample_path).stem
            (pred_dir / f"{stem}.mask.bgrd").write_bytes(
                write_grid(label, RasterFormat.INTERNAL_BINARY)
            )
            wrote += 1
        assert wrote > 0
        out = tmp_path / "report"
        assert run(["eval", "--manifest", str(data / "manifest.tsv"),
                    "--pred-dir", str(pred_dir), "--out", str(out)]) == 0
        text = (tmp_path / "report.txt").read_text()
        assert "iou_ship      1.0000" in text or "degenerate" in text
        records = [json.loads(x) for x in (tmp_path / "report.jsonl").read_text().splitlines()]
        summary = records[0]
        assert summary["fp"] == 0 and summary["fn"] == 0

    def test_group_by_resolution(self, tmp_path):
        data, _ = synth_and_train(tmp_path)
        manifest = DatasetManifest.load(data / "manifest.tsv")
        pred_dir = tmp_path / "preds"
        pred_dir.mkdir()
        for e in manifest.for_split("test"):
            label = read_grid((data / e.label_path).read_bytes(), RasterFormat.INTERNAL_BINARY)
            (pred_dir / f"{Path(e.sample_path).stem}.mask.bgrd").write_bytes(
                write_grid(label, RasterFormat.INTERNAL_BINARY)
            )
        assert run(["eval", "--manifest", str(data / "manifest.tsv"),
                    "--pred-dir", str(pred_dir), "--group-by", "resolution"]) == 0


class TestConfigFile:
    def test_config_overrides_flags(self, tmp_path):
        cfgfile = tmp_path / "cfg"
        cfgfile.write_text("synthetic=3\nterrain-only=2\n")
        data = tmp_path / "d"
        assert run(["synth", "--out", str(data), "--synthetic", "99", "--terrain-only", "99",
                    "--rows", "24", "--cols", "24", "--config", str(cfgfile)]) == 0
        manifest = DatasetManifest.load(data / "manifest.tsv")
        assert len(manifest.entries) == 5

    def test_bad_config_key_is_usage_error(self, tmp_path):
        cfgfile = tmp_path / "cfg"
        cfgfile.write_text("nonsense=1\n")
        assert run(["synth", "--out", str(tmp_path / "d"), "--config", str(cfgfile)]) == 1


class TestBench:
    def test_reports_runtime_per_mb(self, tmp_path, capsys):
        src = tmp_path / "flat.bgrd"
        depth = np.full((24, 24), 100.0, dtype=np.float32)
        write_raster(src, depth)
        assert run(["bench", "--input", str(src), "--backend", "depression"]) == 0
        out = capsys.readouterr().out
        assert "runtime per MB" in out
