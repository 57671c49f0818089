import os
import subprocess
import sys
from pathlib import Path

import pytest

from amdlab import cli
from amdlab import io as amdio

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SMOKE = "world: ring8\nmethod: amd\nseed: 3\noperator:\n  omega: 1.0\ntraining:\n  iterations: 12\n  snapshot_every: 6\n  eval_samples: 100\n"


@pytest.fixture
def smoke(tmp_path):
    p = tmp_path / "smoke.yaml"
    p.write_text(SMOKE)
    return p


def test_train_writes_outputs(smoke, tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["train", str(smoke), "--out", str(out)]) == 0
    assert "nll/baseline" in capsys.readouterr().out
    snaps = amdio.read_snapshots(out / "snapshots.jsonl")
    assert [s["iteration"] for s in snaps] == [0, 6, 12]
    assert (out / "run.json").exists()
    assert amdio.load_config(out / "config.yaml").seed == 3
    assert sorted(p.name for p in (out / "figures").iterdir()) == [
        "cloud_00.svg", "cloud_06.svg", "cloud_12.svg", "curves.svg", "energy.svg", "reward.svg"]


def test_seed_override(smoke, tmp_path):
    assert cli.main(["train", str(smoke), "--out", str(tmp_path / "r"), "--seed", "9", "--no-figures"]) == 0
    assert amdio.load_config(tmp_path / "r" / "config.yaml").seed == 9
    assert not (tmp_path / "r" / "figures").exists()


def test_config_errors_exit_2(tmp_path, capsys):
    assert cli.main(["train", str(tmp_path / "missing.yaml"), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("world: ring8\nmethod: dmdx\n")
    assert cli.main(["train", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "dmdx" in capsys.readouterr().err


def test_io_error_exits_4(smoke, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["train", str(smoke), "--out", str(blocker / "sub")]) == 4


def test_numeric_failure_exits_3(tmp_path):
    p = tmp_path / "hot.yaml"
    p.write_text("world: ring8\nmethod: naive\noperator:\n  omega: 1.0\n"
                 "training:\n  iterations: 30\n  lr_student: 1e300\n  eval_samples: 50\n")
    code = cli.main(["train", str(p), "--out", str(tmp_path / "o"), "--no-figures"])
    assert code == 3


def test_landscape(tmp_path):
    assert cli.main(["landscape", str(CONFIGS / "shaping_selective.yaml"), "--out", str(tmp_path)]) == 0
    assert sorted(os.listdir(tmp_path)) == ["energy.svg", "reward.svg"]


def test_compare(smoke, tmp_path):
    other = tmp_path / "naive.yaml"
    other.write_text(SMOKE.replace("method: amd", "method: naive"))
    out = tmp_path / "cmp"
    assert cli.main(["compare", str(smoke), str(other), "--out", str(out), "--no-figures"]) == 0
    assert {"smoke", "naive", "overlay.svg", "curves.svg"} <= set(os.listdir(out))


def test_check_single_suite():
    assert cli.main(["check", "--suite", "advantages"]) == 0


def test_console_entry_point_runs():
    r = subprocess.run([sys.executable, "-m", "amdlab.cli", "check", "--suite", "decomposition"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "[PASS]" in r.stdout


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.yaml")))
def test_shipped_configs_parse(name):
    amdio.load_config(CONFIGS / name)
