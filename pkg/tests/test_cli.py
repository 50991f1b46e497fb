"""Command-line surface: formats, manifests, exit codes, pipeline parity."""

import json
import numpy as np
import pytest

from ambientmodes import cli, fileio
from ambientmodes.estimate import estimate_from_trajectory
from ambientmodes.fixtures import run_case
from ambientmodes.linearize import linearize
from ambientmodes.modal import eigen_modes, match_modes
from ambientmodes.simulate import SimConfig, simulate_nonlinear


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture()
def model_file(tmp_path):
    out = tmp_path / "nine.json"
    assert run_cli("model", "build", "--fixture", "ninebus_1vsc", "-o", out) == 0
    return out


def test_model_build_and_check(model_file, capsys):
    assert (model_file.parent / "nine.json.manifest.json").exists()
    assert run_cli("model", "check", "--model", model_file) == 0
    out = capsys.readouterr().out
    assert "Hurwitz" in out and "mode" in out


def test_model_roundtrip_preserves_hash(model_file, ninebus):
    model = fileio.load_model(model_file)
    assert fileio.model_hash(model) == fileio.model_hash(ninebus.model)
    assert np.allclose(model.admittance.y, ninebus.model.admittance.y)


def test_model_file_full_admittance_variant(tmp_path, ninebus):
    doc = fileio.model_to_dict(ninebus.model)
    # re-express the reduced matrix as a "full" matrix with all buses retained
    doc["admittance"] = {"full": doc["admittance"]["reduced"],
                         "retained": list(range(4))}
    path = tmp_path / "full.json"
    path.write_text(json.dumps(doc))
    model = fileio.load_model(path)
    assert np.allclose(model.admittance.y, ninebus.model.admittance.y)


def test_simulate_estimate_modes_compare(tmp_path, model_file, capsys):
    traj = tmp_path / "traj.csv"
    assert run_cli("simulate", "--model", model_file, "--duration", 120,
                   "--dt", 0.02, "--sigma", 0.05, "--seed", 1, "-o", traj) == 0
    assert traj.exists()
    sidecar = json.loads((tmp_path / "traj.json").read_text())
    assert sidecar["dt"] == 0.02 and sidecar["seed"] == 1 and "model_hash" in sidecar

    ahat = tmp_path / "ahat.csv"
    assert run_cli("estimate", "--traj", traj, "--tau", 1, "-o", ahat) == 0
    diag = json.loads((tmp_path / "ahat.json").read_text())
    assert {"cond_c", "spectral_radius", "imag_residual"} <= set(diag)

    assert run_cli("modes", "--matrix", ahat) == 0
    out = capsys.readouterr().out
    assert "zeta" in out

    table = tmp_path / "table.csv"
    assert run_cli("compare", "--truth", model_file, "--est", ahat, "-o", table) == 0
    header = table.read_text().splitlines()[0]
    assert header == "mode,f_a,f_e,f_error_pct,zeta_a,zeta_e,zeta_error_pct"


def test_modes_on_oscillator_matrix(tmp_path, capsys):
    wn, zeta = 2 * np.pi, 0.05
    a = np.array([[0.0, 1.0], [-wn**2, -2 * zeta * wn]])
    path = tmp_path / "osc.csv"
    fileio.save_matrix(a, path, labels=("delta_1", "omega_1"))
    assert run_cli("--json", "modes", "--matrix", path) == 0
    doc = json.loads(capsys.readouterr().out)
    assert len(doc["modes"]) == 1
    assert doc["modes"][0]["freq_hz"] == pytest.approx(0.99875, abs=2e-5)
    assert doc["modes"][0]["damping_pct"] == pytest.approx(5.0, abs=1e-9)


def test_cli_chain_matches_library_run(tmp_path, model_file, ninebus):
    """Chained commands reproduce the library-level case run exactly."""
    seed = 7
    traj_path = tmp_path / "t.csv"
    run_cli("simulate", "--model", model_file, "--duration", 120,
            "--burn-in", 10, "--seed", seed, "-o", traj_path)
    ahat_path = tmp_path / "a.csv"
    run_cli("estimate", "--traj", traj_path, "-o", ahat_path)
    a_cli, _ = fileio.load_matrix(ahat_path)

    cfg = SimConfig(duration=120.0, burn_in=10.0, seed=seed)
    traj = simulate_nonlinear(ninebus.model, cfg)
    a_lib = estimate_from_trajectory(traj).a_hat
    # the 17-digit CSV round-trip is exact, so the chain is bit-identical
    assert np.array_equal(a_cli, a_lib)

    report = run_case(ninebus, "I", seeds=(seed,), sim_cfg=cfg)
    ss = linearize(ninebus.model, reduced=True)
    truth = eigen_modes(ss.a_c, ss.state_labels)
    est = eigen_modes(a_cli, ss.state_labels, source="estimated")
    pairs = match_modes(truth, est).pairs
    for row, pair in zip(report.per_seed[0]["rows"], pairs):
        assert row["f_e"] == pytest.approx(pair.est.freq, abs=1e-12)
        assert row["zeta_e"] == pytest.approx(pair.est.damping, abs=1e-12)


def test_case_command(tmp_path, capsys):
    out = tmp_path / "rep.json"
    assert run_cli("case", "I", "--fixture", "ninebus_1vsc", "--seeds", "1,2",
                   "--duration", 120, "-o", out) == 0
    report = json.loads(out.read_text())
    assert report["case_id"] == "I"
    assert report["seeds"] == [1, 2]
    assert (tmp_path / "rep.json.manifest.json").exists()
    text = capsys.readouterr().out
    assert "PASS" in text or "FAIL" in text


def test_outdir_env_default(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTDIR_ENV, str(tmp_path))
    assert run_cli("model", "build", "--fixture", "twomachine_1vsc") == 0
    assert (tmp_path / "twomachine_1vsc.json").exists()


def test_domain_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("time,foo\n0.0,1.0\n")
    assert run_cli("estimate", "--traj", bad, "-o", tmp_path / "x.csv") == 1
    record = json.loads(capsys.readouterr().err)
    assert record["error"] == "ValueError"
    assert "message" in record


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 2


def test_trajectory_roundtrip(tmp_path, ninebus):
    traj = simulate_nonlinear(ninebus.model, SimConfig(duration=5.0, seed=3))
    path = tmp_path / "t.csv"
    fileio.save_trajectory(traj, path, meta={"seed": 3})
    loaded, meta = fileio.load_trajectory(path)
    assert meta["seed"] == 3
    assert loaded.dt == traj.dt
    assert np.abs(loaded.delta - traj.delta).max() < 1e-11
    assert np.abs(loaded.omega - traj.omega).max() < 1e-11
    assert loaded.labels == traj.labels


def test_modes_details_csv(tmp_path, ninebus):
    ss = linearize(ninebus.model, reduced=True)
    matrix = tmp_path / "a.csv"
    fileio.save_matrix(ss.a_c, matrix, labels=ss.state_labels)
    details = tmp_path / "details.csv"
    assert run_cli("modes", "--matrix", matrix, "-o", details) == 0
    lines = details.read_text().splitlines()
    header = lines[0].split(",")
    assert "shape_mag_1" in header and "participation_1" in header
    assert len(lines) == 3   # header + two oscillatory modes


def test_case_writes_csv_table(tmp_path):
    out = tmp_path / "rep.json"
    assert run_cli("case", "I", "--fixture", "ninebus_1vsc", "--seeds", "1",
                   "--duration", 80, "-o", out) == 0
    table = tmp_path / "rep_modes.csv"
    assert table.exists()
    header = table.read_text().splitlines()[0]
    assert header.startswith("mode,f_a,f_e_median")
