"""End-to-end CLI runs through cli_dispatch (exit codes and files)."""

from __future__ import annotations

import inspect
import re

import numpy as np
import pandas as pd
import pytest

from plqlab import __version__
from plqlab.cli import cli_dispatch, train_toy_cmd
from plqlab.facemodel import load, train_toy
from plqlab.imageio import read_pixels, write_image

NUMBER = r"[-+]?[\d.]+(?:e[-+]?\d+)?"


@pytest.fixture
def face_file(tmp_path, face):
    return write_image(face, tmp_path / "face.ppm")


def _run(capsys, *argv):
    capsys.readouterr()
    code = cli_dispatch([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestEntry:
    def test_version_command(self, capsys):
        code, out, _ = _run(capsys, "version")
        assert code == 0
        assert out.strip().splitlines()[-1] == __version__

    def test_version_flag(self, capsys):
        assert _run(capsys, "--version")[0] == 0

    def test_unknown_flag_is_usage_error(self, capsys, face_file, model_file):
        code, _, err = _run(capsys, "quality", face_file, "--model", model_file, "--bogus")
        assert code == 1
        assert "bogus" in err

    def test_missing_required_model(self, capsys, face_file):
        assert _run(capsys, "quality", face_file)[0] == 1

    def test_missing_argument_is_usage_error(self, capsys, model_file):
        code, _, err = _run(capsys, "quality", "--model", model_file)
        assert code == 1
        assert "IMAGE" in err

    def test_bad_option_value_is_usage_error(self, capsys, face_file, model_file):
        assert _run(capsys, "quality", face_file, "--model", model_file, "--m", "many")[0] == 1


class TestQuality:
    def test_output_format(self, capsys, face_file, model_file):
        code, out, _ = _run(capsys, "quality", face_file, "--model", model_file, "--m", 20)
        assert code == 0
        assert re.fullmatch(rf"q_raw={NUMBER} q_scaled={NUMBER}\n", out)

    def test_repeats_line(self, capsys, face_file, model_file):
        code, out, _ = _run(capsys, "quality", face_file, "--model", model_file, "--m", 10, "--repeats", 3)
        assert code == 0
        assert re.fullmatch(rf"mean={NUMBER} std={NUMBER}", out.splitlines()[1])

    def test_same_seed_same_output(self, capsys, face_file, model_file):
        first = _run(capsys, "quality", face_file, "--model", model_file, "--m", 10, "--seed", 7)[1]
        second = _run(capsys, "quality", face_file, "--model", model_file, "--m", 10, "--seed", 7)[1]
        assert first == second

    def test_too_few_passes(self, capsys, face_file, model_file):
        code, _, err = _run(capsys, "quality", face_file, "--model", model_file, "--m", 1)
        assert code == 1
        assert "m must be at least 2" in err

    def test_missing_model_file(self, capsys, tmp_path, face_file):
        assert _run(capsys, "quality", face_file, "--model", tmp_path / "absent.plqm")[0] == 2

    def test_missing_image(self, capsys, tmp_path, model_file):
        assert _run(capsys, "quality", tmp_path / "absent.ppm", "--model", model_file)[0] == 2

    def test_accepts_map_flags_and_out(self, capsys, tmp_path, face_file, model_file):
        out_file = tmp_path / "q.txt"
        code, out, _ = _run(
            capsys, "quality", face_file, "--model", model_file, "--m", 10,
            "--gamma", 7, "--clip-norm", 0.5, "--weight-mode", "paper-literal", "--out", out_file,
        )
        assert code == 0
        assert out_file.read_text() == out

    def test_invalid_map_flag_still_rejected(self, capsys, face_file, model_file):
        assert _run(capsys, "quality", face_file, "--model", model_file, "--gamma", 1e4)[0] == 1


class TestMapAndRender:
    def test_map_is_reproducible(self, capsys, tmp_path, face_file, model_file):
        for name in ("a", "b"):
            code, _, _ = _run(capsys, "map", face_file, "--model", model_file, "--m", 10, "--out", tmp_path / name / "plq.csv")
            assert code == 0
        for filename in ("plq.csv", "plq.ppm"):
            assert (tmp_path / "a" / filename).read_bytes() == (tmp_path / "b" / filename).read_bytes()
        values = np.loadtxt(tmp_path / "a" / "plq.csv", delimiter=",")
        assert values.shape == (32, 32)
        assert ((values >= 0) & (values < 1)).all()

    def test_render_csv(self, capsys, tmp_path, face_file, model_file):
        csv = tmp_path / "plq.csv"
        _run(capsys, "map", face_file, "--model", model_file, "--m", 10, "--out", csv, "--heatmap", tmp_path / "h.png")
        code, _, _ = _run(capsys, "render", csv, "--out", tmp_path / "again.png")
        assert code == 0
        np.testing.assert_array_equal(read_pixels(tmp_path / "again.png"), read_pixels(tmp_path / "h.png"))

    def test_render_missing_csv(self, capsys, tmp_path):
        assert _run(capsys, "render", tmp_path / "none.csv", "--out", tmp_path / "x.ppm")[0] == 2

    def test_literal_weight_mode_spellings(self, capsys, tmp_path, face_file, model_file):
        for name, mode in (("default", None), ("literal", "paper-literal"), ("alias", "uniform")):
            extra = () if mode is None else ("--weight-mode", mode)
            code = _run(capsys, "map", face_file, "--model", model_file, "--m", 10, "--out", tmp_path / name / "plq.csv", *extra)[0]
            assert code == 0
        default = (tmp_path / "default" / "plq.csv").read_bytes()
        assert (tmp_path / "literal" / "plq.csv").read_bytes() == default
        assert (tmp_path / "alias" / "plq.csv").read_bytes() == default

    def test_bad_weight_mode(self, capsys, tmp_path, face_file, model_file):
        code = _run(capsys, "map", face_file, "--model", model_file, "--out", tmp_path / "p.csv", "--weight-mode", "nope")[0]
        assert code == 1


class TestCalibration:
    def test_calibrate_scale(self, capsys, corpus_dir, model_file):
        code, out, _ = _run(capsys, "calibrate-scale", corpus_dir, "--model", model_file, "--m", 10)
        assert code == 0
        assert re.fullmatch(rf"alpha={NUMBER} r={NUMBER}", out.strip())

    def test_calibrate_scale_out_file(self, capsys, tmp_path, corpus_dir, model_file):
        out_file = tmp_path / "cal" / "scale.txt"
        code, out, _ = _run(capsys, "calibrate-scale", corpus_dir, "--model", model_file, "--m", 10, "--out", out_file)
        assert code == 0
        assert out_file.read_text() == out

    def test_calibrate_gamma(self, capsys, corpus_dir, model_file):
        code, out, _ = _run(
            capsys, "calibrate-gamma", corpus_dir, "--model", model_file, "--m", 10, "--face-box", "2,2,28,28"
        )
        assert code == 0
        assert re.fullmatch(rf"gamma={NUMBER}", out.strip())

    def test_face_box_outside_image(self, capsys, corpus_dir, model_file):
        code = _run(capsys, "calibrate-gamma", corpus_dir, "--model", model_file, "--m", 10, "--face-box", "0,0,40,40")[0]
        assert code == 2


class TestExperiments:
    def test_mask_exp_rows(self, capsys, tmp_path, corpus_dir, model_file):
        out = tmp_path / "mask"
        code, _, _ = _run(capsys, "mask-exp", corpus_dir, "--model", model_file, "--m", 10, "--out", out)
        assert code == 0
        records = pd.read_csv(out / "records.csv")
        assert len(records) == 15
        assert sorted(records["size"].unique()) == [3, 6, 10, 13, 16]
        summary = pd.read_csv(out / "summary.csv")
        assert summary["n"].tolist() == [3] * 5

    def test_mask_exp_is_reproducible(self, capsys, tmp_path, corpus_dir, model_file):
        for name in ("a", "b"):
            _run(capsys, "mask-exp", corpus_dir, "--model", model_file, "--m", 10, "--sizes", "4,8", "--out", tmp_path / name)
        assert (tmp_path / "a" / "records.csv").read_bytes() == (tmp_path / "b" / "records.csv").read_bytes()

    def test_bad_sizes(self, capsys, tmp_path, corpus_dir, model_file):
        code = _run(capsys, "mask-exp", corpus_dir, "--model", model_file, "--sizes", "4,x", "--out", tmp_path)[0]
        assert code == 1

    def test_mismatched_corpus(self, capsys, tmp_path, model_file):
        write_image(np.zeros((16, 16, 3)), tmp_path / "small" / "tiny.ppm")
        code = _run(capsys, "mask-exp", tmp_path / "small", "--model", model_file, "--out", tmp_path / "o")[0]
        assert code == 2

    def test_restore_exp(self, capsys, tmp_path, corpus_dir, model_file):
        out = tmp_path / "restore"
        code, stdout, _ = _run(
            capsys, "restore-exp", corpus_dir, "--model", model_file, "--m", 10,
            "--size", 6, "--repeats", 2, "--fill-mode", "blur_fill", "--out", out,
        )
        assert code == 0
        assert re.fullmatch(rf"fraction_improved={NUMBER} median_gain={NUMBER}", stdout.strip())
        assert len(pd.read_csv(out / "restoration.csv")) == 3

    def test_restore_exp_bad_mode(self, capsys, tmp_path, corpus_dir, model_file):
        code = _run(
            capsys, "restore-exp", corpus_dir, "--model", model_file, "--size", 6, "--fill-mode", "inpaint", "--out", tmp_path
        )[0]
        assert code == 1


class TestTooling:
    def test_gen_synthetic(self, capsys, tmp_path):
        out = tmp_path / "synth"
        code = _run(capsys, "gen-synthetic", "--out", out, "--identities", 2, "--samples", 2)[0]
        assert code == 0
        assert len(list(out.glob("*.ppm"))) == 4
        faces = pd.read_csv(out / "faces.csv")
        assert list(faces.columns) == ["image_id", "label", "top", "left", "height", "width"]
        assert faces["label"].tolist() == [0, 0, 1, 1]

    def test_train_toy_writes_loadable_model(self, capsys, tmp_path):
        out = tmp_path / "toy.plqm"
        code = _run(capsys, "train-toy", "--out", out, "--identities", 2, "--samples", 4, "--epochs", 1)[0]
        assert code == 0
        assert load(out).input_shape == (32, 32, 3)

    def test_train_toy_defaults_follow_trainer(self):
        cli = inspect.signature(train_toy_cmd).parameters
        lib = inspect.signature(train_toy).parameters
        for option, argument in (("epochs", "epochs"), ("lr", "lr"), ("batch_size", "batch_size")):
            assert cli[option].default.default == lib[argument].default

    def test_check_grad_reports_error(self, capsys, face_file, model_file):
        code, out, _ = _run(capsys, "check-grad", face_file, "--model", model_file, "--m", 10, "--top-k", 10)
        assert code in (0, 3)
        assert re.fullmatch(rf"max_rel_error={NUMBER}", out.strip())
