import json

import numpy as np
import pytest

from xsplat.cli import main

CONFIG = {
    "seed": 5,
    "n_features": 4,
    "scanner": {
        "n_views": 6,
        "detector_width": 16,
        "detector_height": 16,
        "pixel_pitch": 12.0,
    },
    "cuboid": {"extent": [100.0, 100.0, 100.0], "grid": [32, 32, 32], "interval": 8},
    "phantom": {"noise_level": 0.02},
    "train": {
        "iterations": 25,
        "gamma": 0.0,
        "densify_until_iter": 0,
        "log_interval": 10,
        "eval_interval": 25,
    },
}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One gen-data -> train run shared by the read-only CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    cfg_path = root / "run.json"
    cfg_path.write_text(json.dumps(CONFIG))
    data = root / "data"
    out = root / "out"
    assert main(["gen-data", "--config", str(cfg_path), "--out", str(data)]) == 0
    rc = main(
        ["train", "--config", str(cfg_path), "--dataset", str(data),
         "--out", str(out), "--quiet"]
    )
    assert rc == 0
    return {"config": cfg_path, "data": data, "out": out,
            "checkpoint": out / "cloud_final.ply"}


class TestGenData:
    def test_reports_counts_and_normalization(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(CONFIG))
        assert main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 0
        msg = capsys.readouterr().out
        assert "wrote 6 projections (3 train / 3 test)" in msg
        assert "normalization constant:" in msg
        names = {p.name for p in (tmp_path / "d").iterdir()}
        assert {"meta.json", "proj_0000.f32", "clean_0005.f32"} <= names

    def test_views_override(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(CONFIG))
        main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "d"),
              "--views", "4"])
        assert "wrote 4 projections (2 train / 2 test)" in capsys.readouterr().out

    def test_deterministic(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(CONFIG))
        for d in ("d1", "d2"):
            main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / d)])
        for name in ("meta.json", "proj_0000.f32", "clean_0003.f32"):
            a = (tmp_path / "d1" / name).read_bytes()
            b = (tmp_path / "d2" / name).read_bytes()
            assert a == b, name


class TestTrain:
    def test_outputs(self, pipeline):
        assert pipeline["checkpoint"].exists()
        metrics = (pipeline["out"] / "metrics.tsv").read_text().splitlines()
        assert metrics[0] == "iteration\tloss\ttrain_psnr\ttest_psnr\ttest_ssim\tn_points"
        assert len(metrics) == 1 + 3  # rows at 10, 20, 25

    def test_iteration_override_and_config_json(self, pipeline, tmp_path):
        out = tmp_path / "out"
        rc = main(
            ["train", "--config", str(pipeline["config"]), "--dataset",
             str(pipeline["data"]), "--out", str(out), "--iterations", "8",
             "--quiet"]
        )
        assert rc == 0
        rows = (out / "metrics.tsv").read_text().splitlines()
        assert rows[-1].startswith("8\t")


class TestRender:
    def test_writes_image_pairs(self, pipeline, tmp_path):
        out = tmp_path / "r"
        rc = main(
            ["render", "--config", str(pipeline["config"]),
             "--checkpoint", str(pipeline["checkpoint"]),
             "--out", str(out), "--angles", "0,45.5"]
        )
        assert rc == 0
        for stem in ("render_0000.00deg", "render_0045.50deg"):
            pgm = (out / f"{stem}.pgm").read_bytes()
            assert pgm.startswith(b"P5\n16 16\n255\n")
            assert len(pgm) == len(b"P5\n16 16\n255\n") + 16 * 16
            raw = np.frombuffer((out / f"{stem}.f32").read_bytes(), dtype="<f4")
            assert raw.shape == (256,)
            assert np.all(np.isfinite(raw))

    def test_empty_angle_list(self, pipeline, tmp_path, capsys):
        rc = main(
            ["render", "--checkpoint", str(pipeline["checkpoint"]),
             "--out", str(tmp_path / "r"), "--angles", ""]
        )
        assert rc == 0
        assert "no angles" in capsys.readouterr().err


class TestEval:
    def test_text_output_both_splits(self, pipeline, capsys):
        rc = main(
            ["eval", "--dataset", str(pipeline["data"]),
             "--checkpoint", str(pipeline["checkpoint"]), "--split", "both"]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert "== train split ==" in out
        assert "== test split ==" in out
        assert "PSNR" in out or "psnr" in out

    def test_json_output(self, pipeline, capsys):
        rc = main(
            ["eval", "--dataset", str(pipeline["data"]),
             "--checkpoint", str(pipeline["checkpoint"]), "--split", "test",
             "--json"]
        )
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert set(payload) == {"test"}
        report = payload["test"]
        assert set(report) >= {"psnr", "ssim", "per_view"}
        assert len(report["per_view"]) == 3
        assert report["psnr"] > 0

    def test_noisy_reference_changes_scores(self, pipeline, capsys):
        scores = {}
        for flag in ([], ["--noisy-reference"]):
            main(["eval", "--dataset", str(pipeline["data"]), "--checkpoint",
                  str(pipeline["checkpoint"]), "--split", "test", "--json", *flag])
            scores[bool(flag)] = json.loads(capsys.readouterr().out)["test"]["psnr"]
        assert scores[False] != scores[True]


class TestExportAndBench:
    def test_export(self, pipeline, tmp_path):
        out = tmp_path / "viewer.ply"
        rc = main(["export", "--checkpoint", str(pipeline["checkpoint"]),
                   "--out", str(out)])
        assert rc == 0
        assert out.read_bytes().startswith(b"ply")

    def test_bench_lists_backends(self, capsys):
        rc = main(["bench", "--sizes", "64", "--repeats", "1", "--seed", "0"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "python" in out
        assert "64" in out


class TestErrors:
    def test_missing_dataset(self, pipeline, tmp_path, capsys):
        rc = main(
            ["eval", "--dataset", str(tmp_path / "nope"),
             "--checkpoint", str(pipeline["checkpoint"])]
        )
        assert rc == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_bad_config(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text('{"typo": 1}')
        rc = main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "d")])
        assert rc == 1
        assert "unknown" in capsys.readouterr().err

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert capsys.readouterr().out.startswith("xsplat ")
