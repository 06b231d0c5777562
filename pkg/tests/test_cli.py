"""Command-line interface: subcommands, exit codes and deterministic output."""
import json
import subprocess
import sys

import pytest

from dunkl_hardy.cli import EXIT_CONFIG, EXIT_FAILED, EXIT_OK, main

SMALL_HERMITE = """\
[experiment]
id = atomic-hermite
[root_system]
multiplicity = 1
[grid]
extent = 6
resolution = 128
[battery]
size = 4
hermite_atoms = 4
{extra}
[certificates]
psi_train = 400
psi_validation = 100
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_list_experiments(capsys):
    assert main(["list-experiments"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 7
    assert out[0].split()[0] == "kernel-bounds"


def test_validate_config(tmp_path, capsys):
    good = write(tmp_path, "good.ini", "[experiment]\nid = t-lemma\n")
    assert main(["validate-config", "--config", good]) == EXIT_OK
    assert "config ok: experiment=t-lemma" in capsys.readouterr().out
    bad = write(tmp_path, "bad.ini", "[experiment]\nid = no-such-thing\n")
    assert main(["validate-config", "--config", bad]) == EXIT_CONFIG
    assert "invalid config" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "absent.ini")]) == EXIT_CONFIG


def test_run_passing_experiment(tmp_path, capsys):
    cfg = write(tmp_path, "t.ini", "[experiment]\nid = t-lemma\n")
    out = tmp_path / "out"
    assert main(["run", "--config", cfg, "--out", str(out), "--seed", "3"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert all(line.startswith("PASS  ") for line in lines[:-1])
    assert json.loads((out / "report.json").read_text())["config"]["seed"] == 3


def test_run_reports_failed_certificate(tmp_path, capsys):
    cfg = write(tmp_path, "bad.ini", SMALL_HERMITE.format(extra="claimed_defect = size"))
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_FAILED
    captured = capsys.readouterr()
    assert "FAIL  battery:atoms_valid" in captured.out
    assert "claimed-atom" in captured.err and "size:" in captured.err


def test_outputs_independent_of_threads(tmp_path):
    cfg = write(tmp_path, "ok.ini", SMALL_HERMITE.format(extra=""))
    outs = []
    for threads in ("1", "3"):
        out = tmp_path / f"o{threads}"
        assert main(["run", "--config", cfg, "--out", str(out), "--threads", threads]) == EXIT_OK
        outs.append(((out / "report.json").read_bytes(), (out / "tables.csv").read_bytes()))
    assert outs[0] == outs[1]
    assert b"\r" not in outs[0][1]


def test_bad_arguments_exit_nonzero():
    with pytest.raises(SystemExit) as exc:
        main(["run"])
    assert exc.value.code != 0


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, "t.ini", "[experiment]\nid = t-lemma\n")
    proc = subprocess.run([sys.executable, "-m", "dunkl_hardy.cli", "validate-config", "--config", cfg],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("config ok")
