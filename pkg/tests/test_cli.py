import json

import pytest

from relgate import cli

SMALL_SWEEP = """
[cavity]
modes = 4

[numerics]
mode_check = false

[sweep]
a_steps = 3
a_max = 2.0
T_steps = 3
T_max = 1.0
theta_steps = 2
phi_steps = 2
refine_rounds = 1
"""


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text(SMALL_SWEEP, encoding="utf-8")
    return p


def test_convert_units(capsys):
    assert cli.main(["convert-units", "--a", "1", "--omega", "1e9"]) == 0
    out = capsys.readouterr().out
    g = float(out.split("=")[-1].split()[0])
    assert g == pytest.approx(9.74e15, rel=1e-3)


def test_simulate_without_coupling(tmp_path, capsys):
    p = tmp_path / "off.toml"
    p.write_text("[probe]\ncoupling = 0.0\n[target]\ncoupling = 0.0\n", encoding="utf-8")
    assert cli.main(["simulate", "--config", str(p)]) == 0
    out = capsys.readouterr().out
    initial = out.split("initial target state:\n")[1].split("final target state:")[0]
    final = out.split("final target state:\n")[1].split("bloch")[0]
    assert initial == final
    assert "d_theta = 0.0  d_phi = 0.0" in out


def test_missing_config_exits_1(tmp_path, capsys):
    assert cli.main(["simulate", "--config", str(tmp_path / "nope.toml")]) == 1
    assert "config error" in capsys.readouterr().err


def test_bad_key_exits_1(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text("[probe]\na = -1.0\n", encoding="utf-8")
    assert cli.main(["simulate", "--config", str(p)]) == 1
    assert "probe.a" in capsys.readouterr().err
    assert cli.main(["simulate", "--threads", "0"]) == 1


def test_nonconvergence_exits_2(tmp_path, capsys):
    p = tmp_path / "tight.toml"
    p.write_text("[cavity]\nmodes = 4\n[numerics]\nmode_tol = 1e-300\nmax_modes = 8\n", encoding="utf-8")
    assert cli.main(["simulate", "--config", str(p)]) == 2
    assert "numerical error" in capsys.readouterr().err


def test_maximize_is_byte_identical_and_config_untouched(cfg_file, tmp_path):
    before = cfg_file.read_bytes()
    outs = []
    for k, threads in enumerate(["1", "1", "4"]):
        out = tmp_path / f"o{k}"
        assert cli.main(["maximize", "--config", str(cfg_file), "--out", str(out), "--threads", threads, "--grid"]) == 0
        outs.append(((out / "maximize.csv").read_bytes(), (out / "maximize_grid.csv").read_bytes()))
    assert outs[0] == outs[1] == outs[2]
    assert cfg_file.read_bytes() == before
    man = json.loads((tmp_path / "o0" / "maximize.manifest.json").read_text())
    assert man["outputs"] == ["maximize.csv", "maximize_grid.csv"]
    assert man["theta_convention"] == "direction"
    assert man["sweep"]["a_steps"] == 3
    assert len(man["config_hash"]) == 64


def test_sweep_writes_csv(cfg_file, tmp_path):
    out = tmp_path / "s"
    assert cli.main(["sweep", "--config", str(cfg_file), "--out", str(out)]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert len(lines) == 1 + 9
    assert (out / "sweep.manifest.json").exists()


def test_dump_amplitudes(cfg_file, tmp_path):
    out = tmp_path / "d"
    assert cli.main(["dump-amplitudes", "--config", str(cfg_file), "--out", str(out)]) == 0
    assert (out / "amplitudes.csv").read_text().count("\n") == 1 + 4 * 40
    assert (out / "terms.csv").read_text().count("\n") == 1 + 168


def test_overrides(tmp_path, capsys):
    p = tmp_path / "c.toml"
    p.write_text("[cavity]\nmodes = 3\n[numerics]\nmode_check = false\n", encoding="utf-8")
    assert cli.main(["simulate", "--config", str(p), "--a", "0.0", "--T", "0.0"]) == 0
    assert "d_theta = 0.0  d_phi = 0.0" in capsys.readouterr().out


def test_oracle_check(tmp_path, capsys):
    out = tmp_path / "oc"
    p = tmp_path / "c.toml"
    p.write_text("[field]\nalpha_re = 0.5\n", encoding="utf-8")
    assert cli.main(["oracle-check", "--config", str(p), "--out", str(out), "--nmax", "6"]) == 0
    assert "status,ok" in (out / "oracle_report.csv").read_text()


def test_shipped_config_loads():
    from pathlib import Path

    from relgate.model import SimulationConfig
    from relgate.sweep import SweepSpec

    path = Path(__file__).resolve().parents[1] / "configs" / "default.toml"
    config, spec = cli.load_run_config(str(path))
    assert config == SimulationConfig() and spec == SweepSpec()
