import subprocess
import sys

import pytest

from dualview.cli import main

FAST = ["--epochs", "1", "--batch", "16", "--seed-crop", "256", "--seed", "1", "--split-seed", "1"]


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert main(["train", "--help"]) == 0
    assert "--dump-kernels" in capsys.readouterr().out


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "dualview", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "synth" in out.stdout


def test_unknown_flag_is_usage_error(capsys):
    assert main(["train", "--data", "x", "--out", "y", "--bogus"]) == 1
    assert "--bogus" in capsys.readouterr().err
    assert main([]) == 1


def test_missing_data_root_names_path(tmp_path, capsys):
    missing = tmp_path / "nowhere"
    assert main(["train", "--data", str(missing), "--out", str(tmp_path / "o")]) == 2
    assert str(missing) in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["train", "--config", str(tmp_path / "none.txt")]) == 1


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_training_is_numeric_failure(tiny_synth, tmp_path):
    root, _ = tiny_synth
    code = main(["train", "--data", str(root), "--out", str(tmp_path), "--lr", "1e30", "--epochs", "2",
                 "--seed-crop", "256", "--batch", "8"])
    assert code == 3


def test_config_file_with_flag_override(tiny_synth, tmp_path):
    root, _ = tiny_synth
    cfg = tmp_path / "run.txt"
    cfg.write_text(f"data = {root}\nout = {tmp_path / 'run'}\nepochs = 5\nseed-crop = 256\n")
    assert main(["train", "--config", str(cfg), "--epochs", "1", "--batch", "16"]) == 0
    written = (tmp_path / "run" / "config.txt").read_text()
    assert "epochs = 1\n" in written and "seed_crop = 256\n" in written
    assert len((tmp_path / "run" / "metrics.csv").read_text().splitlines()) == 2


def _pipeline(root, out):
    assert main(["train", "--data", str(root), "--out", str(out / "run"), *FAST]) == 0
    assert main(["eval", "--data", str(root), "--checkpoint", str(out / "run"),
                 "--out", str(out / "eval"), "--seed-crop", "256"]) == 0
    assert main(["report", str(out / "eval"), "--out", str(out / "table.txt")]) == 0
    case = sorted(root.iterdir())[0]
    assert main(["dream", "--checkpoint", str(out / "run" / "checkpoint.dvnc"), "--case", str(case),
                 "--iters", "2", "--seed", "3", "--out", str(out / "dream"), "--seed-crop", "256"]) == 0


def test_small_pipeline_is_byte_deterministic(tiny_synth, tmp_path):
    root, _ = tiny_synth
    _pipeline(root, tmp_path / "a")
    _pipeline(root, tmp_path / "b")
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert len(files) >= 12
    for rel in files:
        if rel.name == "config.txt":   # records the output path
            continue
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel


def test_synth_and_ensemble_layout(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path / "d"), "--cases", "12", "--seed", "2", "--size", "256"]) == 0
    assert "wrote 12 cases" in capsys.readouterr().out
    assert main(["train", "--data", str(tmp_path / "d"), "--out", str(tmp_path / "r"), "--ensemble", "2",
                 *FAST]) == 0
    assert (tmp_path / "r" / "member_01" / "checkpoint.dvnc").is_file()
    assert main(["eval", "--data", str(tmp_path / "d"), "--checkpoint", str(tmp_path / "r"),
                 "--out", str(tmp_path / "e"), "--seed-crop", "256", "--subset", "all"]) == 0
    assert "n_cases: 12" in (tmp_path / "e" / "summary.txt").read_text()


def test_bad_checkpoint_is_data_error(tiny_synth, tmp_path):
    root, _ = tiny_synth
    bad = tmp_path / "x.dvnc"
    bad.write_bytes(b"not a checkpoint")
    assert main(["eval", "--data", str(root), "--checkpoint", str(bad), "--out", str(tmp_path / "e"),
                 "--subset", "all"]) == 2
