import csv

import numpy as np
import pytest

from posrgan.cli import EXIT_IO, EXIT_OK, EXIT_USAGE, main
from posrgan.fixtures import smooth_image
from posrgan.imaging import ImagePlane, load_image, save_image
from posrgan.patches import read_manifest, write_manifest

TINY = ["--num-blocks", "2", "--channels", "8", "--patch-size", "16", "--synthetic-patches", "4",
        "--batch-size", "2", "--disc-channels", "4", "--log-every", "1"]


@pytest.fixture
def hr_dir(tmp_path, rng):
    d = tmp_path / "hr"
    d.mkdir()
    for i in range(3):
        save_image(ImagePlane(smooth_image(rng, 96, 96 + 8 * i)), d / f"img{i}.png")
    return d


@pytest.fixture(scope="module")
def stage1_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run1")
    assert main(["train", "--stage", "1", "--iterations", "3", "--output-dir", str(out), *TINY]) == EXIT_OK
    return out


class TestDegrade:
    def test_sizes_and_manifest(self, tmp_path, hr_dir):
        assert main(["degrade", "--in", str(hr_dir), "--out", str(tmp_path / "lr"), "--scale", "4"]) == EXIT_OK
        img = load_image(tmp_path / "lr" / "img0.png")
        assert (img.height, img.width) == (24, 24)
        assert [p.name for p in read_manifest(tmp_path / "lr" / "manifest.txt")] == ["img0.png", "img1.png",
                                                                                     "img2.png"]

    def test_rerun_is_bitwise(self, tmp_path, hr_dir):
        main(["degrade", "--in", str(hr_dir), "--out", str(tmp_path / "a")])
        main(["degrade", "--in", str(hr_dir), "--out", str(tmp_path / "b")])
        for name in ("img0.png", "img1.png", "img2.png"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_empty_directory(self, tmp_path):
        (tmp_path / "empty").mkdir()
        assert main(["degrade", "--in", str(tmp_path / "empty"), "--out", str(tmp_path / "o")]) == EXIT_OK
        assert read_manifest(tmp_path / "o" / "manifest.txt") == []

    def test_missing_directory(self, tmp_path):
        assert main(["degrade", "--in", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == EXIT_USAGE

    def test_corrupt_file_reported(self, tmp_path, hr_dir, capsys):
        (hr_dir / "bad.png").write_bytes(b"garbage")
        assert main(["degrade", "--in", str(hr_dir), "--out", str(tmp_path / "o")]) == EXIT_IO
        assert "bad.png" in capsys.readouterr().err
        assert len(read_manifest(tmp_path / "o" / "manifest.txt")) == 3


class TestParams:
    @pytest.mark.parametrize("flags,expected", [([], 5.14), (["--no-share"], 9.86), (["--no-attention"], 5.06)])
    def test_counts(self, capsys, flags, expected):
        assert main(["params", *flags]) == EXIT_OK
        assert f"({expected:.2f}M)" in capsys.readouterr().out


class TestTrain:
    def test_stage1_outputs(self, stage1_run):
        log_lines = (stage1_run / "train.log").read_text().splitlines()
        assert [line.split()[0] for line in log_lines] == ["iter=1", "iter=2", "iter=3"]
        assert (stage1_run / "stage1_final.ckpt").is_file()

    def test_region_with_stage1_is_usage_error(self, tmp_path, capsys):
        assert main(["train", "--stage", "1", "--region", "2", "--output-dir", str(tmp_path), *TINY]) == EXIT_USAGE
        assert "--region" in capsys.readouterr().err

    def test_stage2_without_checkpoint(self, tmp_path, capsys):
        assert main(["train", "--stage", "2", "--output-dir", str(tmp_path), *TINY]) == EXIT_USAGE
        assert "stage-1 checkpoint" in capsys.readouterr().err

    def test_missing_stage(self, capsys):
        assert main(["train"]) == EXIT_USAGE

    def test_region_preset_weights_logged(self, tmp_path, stage1_run, capsys):
        rc = main(["train", "--stage", "2", "--region", "2", "--iterations", "2", "--output-dir", str(tmp_path),
                   "--stage1-checkpoint", str(stage1_run / "stage1_final.ckpt"), *TINY])
        assert rc == EXIT_OK
        out = capsys.readouterr().out
        assert "lam=30 eta_pixel=0.005 eta_feature=0.005" in out
        assert "iter=2 stage=2" in out
        assert (tmp_path / "stage2_final.ckpt").is_file()

    def test_config_file(self, tmp_path, capsys):
        (tmp_path / "run.cfg").write_text("[train]\niterations = 2\nnum_blocks = 2\nchannels = 8\npatch_size = 16\n"
                                          "synthetic_patches = 4\nbatch_size = 2\noutput_dir = out\n")
        assert main(["train", "--stage", "1", "--config", str(tmp_path / "run.cfg")]) == EXIT_OK
        assert (tmp_path / "out" / "stage1_final.ckpt").is_file()


class TestInferEval:
    def test_infer(self, tmp_path, stage1_run, rng):
        save_image(ImagePlane(smooth_image(rng, 10, 12)), tmp_path / "lr.png")
        rc = main(["infer", "--ckpt", str(stage1_run / "stage1_final.ckpt"), "--in", str(tmp_path / "lr.png"),
                   "--out", str(tmp_path / "sr.png")])
        assert rc == EXIT_OK
        sr = load_image(tmp_path / "sr.png")
        assert (sr.height, sr.width) == (40, 48)

    def test_eval_rows(self, tmp_path, hr_dir, stage1_run):
        write_manifest(sorted(p.name for p in hr_dir.glob("*.png")), hr_dir / "m.txt")
        rc = main(["eval", "--ckpt", str(stage1_run / "stage1_final.ckpt"), "--manifest", str(hr_dir / "m.txt"),
                   "--out", str(tmp_path / "r.csv")])
        assert rc == EXIT_OK
        with open(tmp_path / "r.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["image"] for r in rows] == ["img0.png", "img1.png", "img2.png"]
        assert all(np.isfinite(float(r["psnr"])) for r in rows)

    def test_eval_sr_dir(self, tmp_path, hr_dir, capsys):
        write_manifest(sorted(p.name for p in hr_dir.glob("*.png")), hr_dir / "m.txt")
        rc = main(["eval", "--sr-dir", str(hr_dir), "--manifest", str(hr_dir / "m.txt"), "--out",
                   str(tmp_path / "r.csv")])
        assert rc == EXIT_OK
        assert capsys.readouterr().out.count("psnr=100.000 ssim=1.0000 rmse=0.000 region=1") == 3

    def test_eval_missing_checkpoint(self, tmp_path, hr_dir):
        write_manifest([], hr_dir / "m.txt")
        rc = main(["eval", "--ckpt", str(tmp_path / "none.ckpt"), "--manifest", str(hr_dir / "m.txt"),
                   "--out", str(tmp_path / "r.csv")])
        assert rc == EXIT_IO


def test_selfcheck(capsys):
    assert main(["selfcheck"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") >= 6
