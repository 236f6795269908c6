import subprocess
import sys

import pytest

from d2cspde.cli import ConfigError, main, parse_config_text, resolve_config
from d2cspde.harness import read_csv


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def test_spectra_run(tmp_path, capsys):
    code = run(tmp_path, "spectra", "k_list=16,32,64", "j_max=4")
    assert code == 0
    cols, data = read_csv(tmp_path / "spectra.csv")
    assert data.shape[0] == 12
    out = capsys.readouterr().out
    assert out.count("spectra: n=") == 12
    assert "PASS" in out
    man = (tmp_path / "spectra.manifest").read_text()
    assert "k_list = 16,32,64" in man and "sha256.spectra.csv" in man


def test_missing_required_key(tmp_path, capsys):
    assert run(tmp_path, "simulate") == 2
    assert "'s'" in capsys.readouterr().err


def test_unknown_key_and_bad_value(tmp_path, capsys):
    assert run(tmp_path, "spectra", "bogus=1") == 2
    assert "bogus" in capsys.readouterr().err
    assert run(tmp_path, "spectra", "j_max=four") == 2
    assert run(tmp_path, "spectra", "m=2") == 2
    assert run(tmp_path, "resolvent", "beta=0.2") == 2  # below m/(4s)


def test_seed_flag_beats_config(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# a comment\nexperiment = simulate\ns = 1\nk = 8\nK = 16\nseed = 7\n")
    assert main(["simulate", "--config", str(cfg), "--seed", "42", "--out", str(tmp_path)]) == 0
    man = (tmp_path / "simulate.manifest").read_text()
    assert "seed = 42" in man.splitlines()


def test_config_for_other_experiment(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("experiment = ou\n")
    assert main(["spectra", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_missing_config_file(tmp_path):
    assert main(["spectra", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path)]) == 3


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["spectra", "k_list=16,32", "j_max=2", "--out", str(blocker / "sub")]) == 3


def test_failing_check_exit_status(tmp_path, capsys):
    # a ratio threshold the data cannot meet
    assert run(tmp_path, "semigroup", "k_list=16,32", "max_ratio=0.1") == 1
    assert "FAIL" in capsys.readouterr().out


def test_byte_identical_reruns(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["allen-cahn", "k_list=8,16,32", "K=32", "T=0.25", "paths=100"]
    assert main([*args, "--out", str(a), "--threads", "1"]) == 0
    assert main([*args, "--out", str(b), "--threads", "2"]) == 0
    assert (a / "allen-cahn.csv").read_bytes() == (b / "allen-cahn.csv").read_bytes()


def test_simulate_outputs(tmp_path):
    assert run(tmp_path, "simulate", "s=0.8", "k=8", "K=16", "noise=independent", "scheme=B") == 0
    cols, data = read_csv(tmp_path / "simulate.csv")
    assert cols[0] == "t" and cols[1] == "node_1" and len(cols) == 9
    assert data.shape == (17, 9)
    assert run(tmp_path, "simulate", "s=0.8", "k=8", "K=16", "noise=independent", "J=4") == 2
    assert run(tmp_path, "simulate", "s=0.8", "k=8", "K=16", "scheme=B") == 2


def test_check_subcommand(tmp_path):
    assert run(tmp_path, "check") == 0


def test_parse_config_text():
    raw = parse_config_text("a = 1\n\n# skip\nk_list = 1, 2,3  # trailing\n")
    assert raw == {"a": "1", "k_list": "1, 2,3"}
    with pytest.raises(ConfigError):
        parse_config_text("novalue\n")
    cfg = resolve_config("resolvent", {"k_list": "8,16", "J": "auto"})
    assert cfg["k_list"] == [8, 16] and cfg["J"] is None and cfg["beta"] == 0.5


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "d2cspde", "spectra", "k_list=16,32", "j_max=2", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
