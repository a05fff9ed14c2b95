import json
import subprocess
import sys

import pytest

from locs.cli import main
from locs.datasets import read_dataset

TINY = ["--hidden", "16", "--epochs", "1", "--batch-size", "4"]


@pytest.fixture
def synth(tmp_path):
    out = tmp_path / "syn"
    assert main(["gen-synth", "--out", str(out), "--num-scenes", "6", "--seed", "2"]) == 0
    return out


def test_gen_synth_is_deterministic(synth, tmp_path):
    main(["gen-synth", "--out", str(tmp_path / "again"), "--num-scenes", "6", "--seed", "2"])
    for f in synth.iterdir():
        assert f.read_bytes() == (tmp_path / "again" / f.name).read_bytes()
    assert read_dataset(synth).num_scenes == 6


def test_gen_charged_with_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"charged": {"num_nodes": 4, "num_steps": 12}}))
    assert main(["gen-charged", "--config", str(cfg), "--out", str(tmp_path / "ch"), "--num-scenes", "2"]) == 0
    b = read_dataset(tmp_path / "ch")
    assert b.num_nodes == 4 and b.num_steps == 12 and b.charges is not None


def test_train_eval_subset(synth, tmp_path, capsys):
    ckpt = tmp_path / "m.ckpt"
    assert main(["train", "--data", str(synth), "--out", str(ckpt), *TINY]) == 0
    assert ckpt.exists()
    assert main(["subset", "--data", str(synth), "--observed-len", "10", "--horizon", "10",
                 "--threshold", "0", "--out", str(tmp_path / "idx.json")]) == 0
    assert main(["eval", "--data", str(synth), "--checkpoint", str(ckpt), "--observed-len", "10",
                 "--horizon", "10", "--indices", str(tmp_path / "idx.json"),
                 "--csv", str(tmp_path / "e.csv"), "--json", str(tmp_path / "e.json")]) == 0
    out = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert out["horizon"] == 10
    assert len((tmp_path / "e.csv").read_text().splitlines()) == 11
    assert main(["eval", "--data", str(synth), "--baseline", "--observed-len", "10", "--horizon", "5"]) == 0


def test_errors_return_code_two(synth, tmp_path, capsys):
    assert main(["eval", "--data", str(synth), "--observed-len", "10", "--horizon", "5"]) == 2
    assert main(["eval", "--data", str(synth), "--baseline"]) == 2
    assert main(["eval", "--data", str(tmp_path / "missing"), "--baseline",
                 "--observed-len", "1", "--horizon", "1"]) == 2
    assert "error" in capsys.readouterr().err


def test_check_props_rotation(capsys):
    assert main(["check-props", "--suite", "rotation"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_ablate_command(synth, tmp_path):
    assert main(["ablate", "--train-data", str(synth), "--test-data", str(synth), "--out-dir",
                 str(tmp_path / "abl"), "--variants", "locs", "isotropic", "--observed-len", "10",
                 "--horizon", "5", *TINY]) == 0
    assert (tmp_path / "abl" / "isotropic.csv").exists()


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "locs.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "check-props" in res.stdout
