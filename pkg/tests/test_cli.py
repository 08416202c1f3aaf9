from __future__ import annotations

import json

import numpy as np
import pytest
from typer.testing import CliRunner

from ipseg import (
    FeatureMap,
    ImageGeometry,
    SegMask,
    SourceTag,
    read_feature_map,
    read_prompts,
    write_feature_map,
    write_mask,
)
from ipseg.cli import app

runner = CliRunner()


@pytest.fixture
def pair(tmp_path, rng):
    geo = ImageGeometry(32, 32)
    sd = FeatureMap(rng.standard_normal((4, 4, 3)).astype(np.float32), SourceTag.SD, geo)
    dino = FeatureMap(rng.standard_normal((8, 8, 5)).astype(np.float32), SourceTag.DINO, geo)
    sd_path, dino_path = tmp_path / "sd.ipft", tmp_path / "dino.ipft"
    write_feature_map(sd, sd_path)
    write_feature_map(dino, dino_path)
    return sd_path, dino_path


class TestFuseCommand:
    def test_valid_pair_concatenates_channels(self, pair, tmp_path):
        sd, dino = pair
        out = tmp_path / "fused.ipft"
        result = runner.invoke(app, ["fuse", "--sd", str(sd), "--dino", str(dino), "--out", str(out)])
        assert result.exit_code == 0, result.output
        fused = read_feature_map(out)
        assert fused.channels == 8
        assert (fused.height, fused.width) == (8, 8)
        assert fused.source_tag == SourceTag.FUSED

    def test_geometry_mismatch_exits_2(self, pair, tmp_path, rng):
        sd, _ = pair
        other = FeatureMap(
            rng.standard_normal((4, 4, 2)).astype(np.float32), SourceTag.DINO, ImageGeometry(64, 64)
        )
        other_path = tmp_path / "other.ipft"
        write_feature_map(other, other_path)
        result = runner.invoke(
            app, ["fuse", "--sd", str(sd), "--dino", str(other_path), "--out", str(tmp_path / "x.ipft")]
        )
        assert result.exit_code == 2
        assert "GeometryError" in result.output

    def test_explicit_grid_flag(self, pair, tmp_path):
        sd, dino = pair
        out = tmp_path / "fused.ipft"
        result = runner.invoke(
            app, ["fuse", "--sd", str(sd), "--dino", str(dino), "--out", str(out), "--grid", "7x7"]
        )
        assert result.exit_code == 0
        fused = read_feature_map(out)
        assert (fused.height, fused.width) == (7, 7)

    def test_rerun_overwrites_identically(self, pair, tmp_path):
        sd, dino = pair
        out = tmp_path / "fused.ipft"
        args = ["fuse", "--sd", str(sd), "--dino", str(dino), "--out", str(out)]
        assert runner.invoke(app, args).exit_code == 0
        first = out.read_bytes()
        assert runner.invoke(app, args).exit_code == 0
        assert out.read_bytes() == first


class TestEmbedCommand:
    def test_mode_none_without_mask(self, pair, tmp_path):
        _, dino = pair
        out = tmp_path / "emb.ipft"
        result = runner.invoke(
            app, ["embed", "--features", str(dino), "--mode", "none", "--out", str(out)]
        )
        assert result.exit_code == 0
        emb = read_feature_map(out)
        assert (emb.height, emb.width, emb.channels) == (1, 1, 5)

    def test_mode_gt_without_mask_is_usage_error(self, pair, tmp_path):
        _, dino = pair
        result = runner.invoke(
            app, ["embed", "--features", str(dino), "--mode", "gt", "--out", str(tmp_path / "e.ipft")]
        )
        assert result.exit_code == 2

    def test_mode_gt_with_mask(self, pair, tmp_path):
        _, dino = pair
        mask_path = tmp_path / "mask.pgm"
        write_mask(SegMask(np.ones((32, 32), dtype=np.uint8)), mask_path)
        out = tmp_path / "emb.ipft"
        result = runner.invoke(
            app,
            ["embed", "--features", str(dino), "--mode", "gt", "--mask", str(mask_path), "--out", str(out)],
        )
        assert result.exit_code == 0
        assert read_feature_map(out).channels == 5


class TestPromptCommand:
    def _embed(self, tmp_path, dino):
        emb = tmp_path / "emb.ipft"
        assert (
            runner.invoke(
                app, ["embed", "--features", str(dino), "--mode", "none", "--out", str(emb)]
            ).exit_code
            == 0
        )
        return emb

    def test_defaults_emit_4_plus_4(self, pair, tmp_path):
        _, dino = pair
        emb = self._embed(tmp_path, dino)
        out = tmp_path / "prompts.json"
        result = runner.invoke(
            app, ["prompt", "--input", str(dino), "--embedding", str(emb), "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        pset = read_prompts(out)
        assert len(pset.positives) == 4 and len(pset.negatives) == 4
        assert pset.k == 32 and pset.c == 4

    def test_c_greater_than_k_exits_2(self, pair, tmp_path):
        _, dino = pair
        emb = self._embed(tmp_path, dino)
        result = runner.invoke(
            app,
            ["prompt", "--input", str(dino), "--embedding", str(emb),
             "--out", str(tmp_path / "p.json"), "--c", "8", "--k", "4"],
        )
        assert result.exit_code == 2

    def test_deterministic_bytes(self, pair, tmp_path):
        _, dino = pair
        emb = self._embed(tmp_path, dino)
        out = tmp_path / "prompts.json"
        args = ["prompt", "--input", str(dino), "--embedding", str(emb), "--out", str(out), "--k", "16"]
        assert runner.invoke(app, args).exit_code == 0
        first = out.read_bytes()
        assert runner.invoke(app, args).exit_code == 0
        assert out.read_bytes() == first


class TestEvalAndSweepCommands:
    @pytest.fixture
    def dataset(self, tmp_path):
        data = tmp_path / "data"
        result = runner.invoke(app, ["fixture", "--out", str(data), "--images", "8", "--seed", "3"])
        assert result.exit_code == 0
        return data / "manifest.json"

    def test_eval_simulated_fixture_perfect(self, dataset, tmp_path):
        report = tmp_path / "report"
        result = runner.invoke(
            app, ["eval", "--manifest", str(dataset), "--report", str(report), "--segmenter", "simulated"]
        )
        assert result.exit_code == 0, result.output
        assert "mean mIoU: 1.0" in result.output
        summary = json.loads((report / "report.json").read_text())
        assert summary["mean_miou"] == 1.0

    def test_external_without_adapter_exits_2(self, dataset, tmp_path):
        result = runner.invoke(
            app,
            ["eval", "--manifest", str(dataset), "--report", str(tmp_path / "r"), "--segmenter", "external"],
        )
        assert result.exit_code == 2

    def test_sweep_emits_5_config_groups(self, dataset, tmp_path):
        report = tmp_path / "sweep"
        result = runner.invoke(
            app,
            ["sweep", "--manifest", str(dataset), "--report", str(report),
             "--k-list", "32", "--c-list", "2,4,8,16,32"],
        )
        assert result.exit_code == 0, result.output
        lines = (report / "sweep.csv").read_text().splitlines()
        configs = {tuple(line.split(",")[3:5]) for line in lines[1:]}
        assert configs == {("32", "2"), ("32", "4"), ("32", "8"), ("32", "16"), ("32", "32")}

    def test_unknown_segmenter_exits_2(self, dataset, tmp_path):
        result = runner.invoke(
            app,
            ["eval", "--manifest", str(dataset), "--report", str(tmp_path / "r"), "--segmenter", "bogus"],
        )
        assert result.exit_code == 2


class TestConfigFile:
    def test_config_supplies_defaults_and_flags_override(self, tmp_path):
        data = tmp_path / "data"
        assert runner.invoke(app, ["fixture", "--out", str(data), "--images", "4"]).exit_code == 0
        manifest = data / "manifest.json"
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"k": 16, "c": 2, "mask_mode": "gt"}))

        report_a = tmp_path / "a"
        result = runner.invoke(
            app,
            ["eval", "--manifest", str(manifest), "--report", str(report_a), "--config", str(cfg)],
        )
        assert result.exit_code == 0, result.output
        echo = json.loads((report_a / "report.json").read_text())["config"]
        assert (echo["k"], echo["c"], echo["mask_mode"]) == (16, 2, "gt")

        report_b = tmp_path / "b"
        result = runner.invoke(
            app,
            ["eval", "--manifest", str(manifest), "--report", str(report_b),
             "--config", str(cfg), "--c", "4"],
        )
        assert result.exit_code == 0, result.output
        echo = json.loads((report_b / "report.json").read_text())["config"]
        assert (echo["k"], echo["c"]) == (16, 4)

    def test_unknown_config_key_exits_2(self, tmp_path, pair):
        sd, dino = pair
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"gird": "sd"}))
        result = runner.invoke(
            app,
            ["fuse", "--sd", str(sd), "--dino", str(dino),
             "--out", str(tmp_path / "f.ipft"), "--config", str(cfg)],
        )
        assert result.exit_code == 2

    def test_sweep_lists_from_config(self, tmp_path):
        data = tmp_path / "data"
        assert runner.invoke(app, ["fixture", "--out", str(data), "--images", "2",
                                   "--classes", "1", "--folds", "1"]).exit_code == 0
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"k_list": [8], "c_list": [2, 4]}))
        report = tmp_path / "sweep"
        result = runner.invoke(
            app,
            ["sweep", "--manifest", str(data / "manifest.json"),
             "--report", str(report), "--config", str(cfg)],
        )
        assert result.exit_code == 0, result.output
        lines = (report / "sweep.csv").read_text().splitlines()
        assert len(lines) == 3  # header + one class row per config
