import json
import subprocess
import sys

from robust_shadows.cli import main


def _write(tmp_path, **cfg):
    p = tmp_path / "cfg.json"
    cfg.setdefault("output_path", str(tmp_path / "out.csv"))
    p.write_text(json.dumps(cfg))
    return p


def test_validate_ok(tmp_path, capsys):
    assert main(["validate", str(_write(tmp_path, experiment="fidelity"))]) == 0
    assert '"experiment": "fidelity"' in capsys.readouterr().out


def test_config_error_exit_code(tmp_path):
    assert main(["validate", str(_write(tmp_path, experiment="fidelity", typo=1))]) == 2
    assert main(["run", str(tmp_path / "missing.json")]) == 2


def test_run_with_check(tmp_path, capsys):
    cfg = _write(tmp_path, experiment="naive_attack", n_qubits=2, n_copies=100000, M=4, gamma_grid=[0.01], repeats=1)
    assert main(["run", str(cfg), "--check"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and (tmp_path / "out.csv").exists()


def test_threshold_failure_exit_code(tmp_path):
    # Too few copies for the naive-attack error band to hold.
    cfg = _write(tmp_path, experiment="naive_attack", n_qubits=2, n_copies=40, M=4, gamma_grid=[0.2], repeats=1)
    assert main(["run", str(cfg), "--check"]) == 3


def test_moment_check_command(capsys):
    assert main(["moment-check", "--d", "2", "--k", "3", "--samples", "20000", "--observables", "2"]) == 0
    assert "within 5 standard errors" in capsys.readouterr().out


def test_console_module_entry(tmp_path):
    r = subprocess.run([sys.executable, "-m", "robust_shadows.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "moment-check" in r.stdout
