import json
import subprocess
import sys

import pytest

from rabi_lattice.analysis import CSV_HEADER, ScanTable
from rabi_lattice.cli import dump_config, load_config, main
from rabi_lattice.errors import ConfigParseError, InvalidParams


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_ed_output_keys(capsys):
    code, out, _ = run(["ed", "--n-sites", "2", "--n-fock", "3", "--g", "0.4"], capsys)
    assert code == 0
    data = json.loads(out)
    assert {"energies", "n", "sigma_x", "sigma_z", "gap", "elitzur_max", "params"} <= set(data)
    assert data["params"]["g"] == 0.4
    assert data["gap"] <= 1e-9
    assert data["elitzur_max"] <= 1e-10


def test_bo_and_sh_commands(capsys):
    code, out, _ = run(["bo", "--delta", "1", "--g", "1.5"], capsys)
    assert code == 0 and json.loads(out)["alpha0"] > 0
    code, out, _ = run(["sh", "--delta", "2", "--g", "0.1"], capsys)
    assert code == 0 and 0 <= json.loads(out)["eta0"] <= 1


def test_pt_command(capsys):
    code, out, _ = run(["pt", "--delta", "0.5", "--g", "0.6", "--n-sites", "50"], capsys)
    assert code == 0
    assert json.loads(out)["crossing_g"] == pytest.approx(0.689, abs=1e-3)


def test_scan_csv_header(capsys):
    code, out, _ = run(["scan", "--method", "sh", "--delta", "0.5,1", "--g", "0:1:0.25",
                        "--n-sites", "50"], capsys)
    assert code == 0
    assert out.splitlines()[0] == ",".join(CSV_HEADER)
    table = ScanTable.from_csv(out)
    assert len(table.rows) == 10
    assert all(r.method == "SH" for r in table.rows)


def test_scan_is_byte_identical(tmp_path, capsys):
    argv = ["scan", "--method", "ed", "--delta", "1", "--g", "0.1:0.5:0.2", "--n-sites", "2",
            "--n-fock", "3"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(argv + ["--out", str(a)]) == 0
    assert main(argv + ["--out", str(b), "--jobs", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_atomic_write_leaves_no_temp_files(tmp_path, capsys):
    out = tmp_path / "sub" / "bo.json"
    assert main(["bo", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["critical_g"] == 1.0
    assert [p.name for p in out.parent.iterdir()] == ["bo.json"]


def test_unknown_config_key_reports_line(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("schema_version: 1\nmodel:\n  delta: 1.0\n  bogus: 3\n")
    code, _, err = run(["ed", "--config", str(cfg)], capsys)
    assert code == 2
    assert "c.yaml:4" in err and "model.bogus" in err


def test_wrong_type_in_config():
    with pytest.raises(ConfigParseError):
        load_config("model:\n  n_sites: three\n")


def test_config_round_trip():
    cfg = {"schema_version": 1, "model": {"n_sites": 4, "delta": 0.5, "g": 0.2, "j_ising": 1.0,
                                          "n_fock": 5},
           "dmrg": {"max_bond": 12}, "scan": {"method": "ED", "deltas": [0.5], "g_range": [0, 1, 0.5]}}
    assert load_config(dump_config(cfg)) == cfg


def test_flags_override_config(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("model:\n  n_sites: 2\n  n_fock: 3\n  g: 0.1\n")
    code, out, _ = run(["ed", "--config", str(cfg), "--g", "0.3"], capsys)
    assert code == 0
    params = json.loads(out)["params"]
    assert params["g"] == 0.3 and params["n_sites"] == 2


def test_jobs_from_environment(monkeypatch, capsys):
    from rabi_lattice.analysis import default_jobs

    monkeypatch.setenv("RABI_LATTICE_JOBS", "3")
    assert default_jobs() == 3
    monkeypatch.setenv("RABI_LATTICE_JOBS", "0")
    assert default_jobs() == 1
    monkeypatch.setenv("RABI_LATTICE_JOBS", "x")
    with pytest.raises(InvalidParams):
        default_jobs()


def test_invalid_params_exit_two(capsys):
    code, _, err = run(["ed", "--n-sites", "0"], capsys)
    assert code == 2 and "error" in err


def test_bad_usage_exit_two(capsys):
    assert run(["scan", "--g", "1:0"], capsys)[0] == 2
    assert run(["nosuch"], capsys)[0] == 2


def test_solver_failure_exit_one(capsys):
    code, _, err = run(["dmrg", "--n-sites", "6", "--n-fock", "4", "--delta", "0.5", "--g", "0.6",
                        "--max-bond", "6", "--sweeps", "1"], capsys)
    assert code == 1
    assert "NoConvergence" in err


def test_dmrg_checkpoint(tmp_path, capsys):
    ck = tmp_path / "s.mps"
    code, out, _ = run(["dmrg", "--n-sites", "4", "--n-fock", "3", "--max-bond", "8",
                        "--checkpoint", str(ck)], capsys)
    assert code == 0 and json.loads(out)["converged"]
    assert ck.read_bytes()[:5] == b"RLMPS"


def test_fit_commands_with_points(capsys):
    code, out, _ = run(["fit-critical", "--points", "0.25:0.5,1:1,4:2"], capsys)
    assert code == 0
    assert json.loads(out)["exponent"] == pytest.approx(0.5)
    code, out, _ = run(["fit-chi", "--points", "0.5:4,1:2,2:1"], capsys)
    assert json.loads(out)["fit"]["slope"] == pytest.approx(0.5)
    assert run(["fit-chi"], capsys)[0] == 2


def test_ion_plan_text(capsys):
    code, out, _ = run(["ion-plan", "--format", "text"], capsys)
    assert code == 0
    assert "[PASS]" in out and "[FAIL]" not in out


def test_ion_plan_config_section(tmp_path, capsys):
    cfg = tmp_path / "ion.yaml"
    cfg.write_text("ion:\n  spacing_d0: 2.0e-5\n")
    code, out, _ = run(["ion-plan", "--config", str(cfg)], capsys)
    assert code == 0
    assert json.loads(out)["t_axial_nn"] == pytest.approx(3.375 * 28.928e3, rel=1e-3)
    # 10 um: hopping exceeds the trap frequency and the axial chain is unstable
    cfg.write_text("ion:\n  spacing_d0: 1.0e-5\n")
    code, _, err = run(["ion-plan", "--config", str(cfg)], capsys)
    assert code == 2 and "unstable" in err


def test_reproduce_cheap_targets(tmp_path, capsys):
    code, out, _ = run(["reproduce", "table_vi", "--out-dir", str(tmp_path)], capsys)
    assert code == 0
    assert json.loads((tmp_path / "table_vi.json").read_text())["feasibility_flags"]["rwa"]
    assert run(["reproduce", "fig2", "--out-dir", str(tmp_path)], capsys)[0] == 0
    lines = (tmp_path / "fig2_bo_energy.csv").read_text().splitlines()
    assert lines[0] == "g,alpha,energy_per_site" and len(lines) == 1 + 5 * 151


def test_reproduce_dmrg_figure_needs_long_run(tmp_path, capsys):
    code, _, err = run(["reproduce", "fig4", "--out-dir", str(tmp_path)], capsys)
    assert code == 2
    assert "--long-run" in err
    assert not list(tmp_path.iterdir())


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "rabi_lattice", "bo"], capture_output=True,
                          text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["n"] == 0.0
