import json
import subprocess
import sys

import numpy as np
import pytest

from rpcompass import campaigns, cli
from rpcompass.errors import CompassError, IntegrationError
from rpcompass.model import config_to_dict, load_config


def write_config(tmp_path, base, name="cfg.json", **changes):
    doc = config_to_dict(base)
    for key, value in changes.items():
        doc[key] = value
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def read_csv(path):
    lines = path.read_text().splitlines()
    return lines[0], np.array([[float(x) for x in line.split(",")] for line in lines[1:]])


GRID = ["--grid-theta", "4", "--grid-phi", "6"]


def test_zero_field_map_constant_and_phase_flag_identical(tmp_path, two_nucleus):
    cfg = write_config(tmp_path, two_nucleus, field={"b_uT": 0.0})
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(["yield-map", "--config", str(cfg), "--out", str(out1), *GRID]) == 0
    assert cli.main(["yield-map", "--config", str(cfg), "--out", str(out2), "--exclude-field-phases", *GRID]) == 0
    header, rows = read_csv(out1)
    assert header == "theta_rad,phi_rad,Ys"
    assert len(rows) == 2 + 2 * 6
    assert np.ptp(rows[:, 2]) < 1e-13
    _, rows2 = read_csv(out2)
    np.testing.assert_allclose(rows2, rows, atol=1e-13)
    manifest = json.loads((tmp_path / "a.csv.manifest.json").read_text())
    assert manifest["subcommand"] == "yield-map" and manifest["outputs"] == [str(out1)]
    assert manifest["defaults_applied"]["b_uT"] == 0.0


def test_yield_map_is_reproducible(tmp_path, configs_dir, capsys):
    cfg = configs_dir / "two_nucleus.json"
    outs = [tmp_path / "x.csv", tmp_path / "y.csv"]
    for out in outs:
        assert cli.main(["yield-map", "--config", str(cfg), "--out", str(out), *GRID]) == 0
    assert outs[0].read_bytes() == outs[1].read_bytes()
    assert "Ds " in capsys.readouterr().out


def test_sensitivity_isotropic(configs_dir, capsys):
    assert cli.main(["sensitivity", "--config", str(configs_dir / "isotropic.json"), *GRID]) == 0
    line = capsys.readouterr().out.splitlines()[0]
    assert line.startswith("Ds ") and float(line.split()[1]) < 1e-4


def test_coherence_of_mixed_state(tmp_path, two_nucleus, capsys):
    cfg = write_config(tmp_path, two_nucleus, initial={"electron": "Mixed"})
    assert cli.main(["coherence", "--config", str(cfg)]) == 0
    assert float(capsys.readouterr().out.splitlines()[0].split()[1]) == pytest.approx(0.0, abs=1e-15)


def test_epsilon_zero_field(tmp_path, two_nucleus, capsys):
    cfg = write_config(tmp_path, two_nucleus, field={"b_uT": 0.0})
    out = tmp_path / "eps.csv"
    assert cli.main(["epsilon", "--config", str(cfg), "--out", str(out), "--t-max", "2", "--n-steps", "8"]) == 0
    header, rows = read_csv(out)
    assert header == "t_us,epsilon" and rows.shape == (9, 2)
    assert np.all(rows[:, 1] < 1e-12)
    text = capsys.readouterr().out
    assert "mean_uniform" in text and "mean_weighted" in text
    assert cli.main(["epsilon", "--config", str(cfg), "--out", str(out), "--t-max", "0"]) == cli.EXIT_INVALID


def test_campaign_single_sample_and_rerun(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": "RandomHyperfine", "n_samples": 1, "seed": 3, "grid": {"n_theta": 3, "n_phi": 4}}))
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert cli.main(["campaign", "--config", str(spec), "--out", str(out1)]) == 0
    assert cli.main(["campaign", "--config", str(spec), "--out", str(out2)]) == 0
    csv1 = (out1 / "records.csv").read_bytes()
    assert csv1 == (out2 / "records.csv").read_bytes()
    assert len(csv1.decode().splitlines()) == 2
    meta = json.loads((out1 / "metadata.json").read_text())
    assert meta["spec"]["seed"] == 3
    assert cli.main(["campaign", "--config", str(spec), "--out", str(out2), "--seed", "4"]) == 0
    assert (out2 / "records.csv").read_bytes() != csv1


def test_campaign_noise_sweep_cardinality(tmp_path, two_nucleus):
    spec = tmp_path / "noise.json"
    spec.write_text(json.dumps({
        "kind": "NoiseSweep", "config": config_to_dict(two_nucleus), "grid": {"n_theta": 3, "n_phi": 2},
    }))
    assert cli.main(["campaign", "--config", str(spec), "--out", str(tmp_path / "o")]) == 0
    assert len((tmp_path / "o" / "records.csv").read_text().splitlines()) == 1 + 18


def test_campaign_sample_errors_exit_code(tmp_path, monkeypatch):
    def broken(*args, **kwargs):
        raise CompassError("boom")

    monkeypatch.setattr(campaigns, "_evaluate", broken)
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": "RandomHyperfine", "n_samples": 2, "grid": {"n_theta": 3, "n_phi": 2}}))
    assert cli.main(["campaign", "--config", str(spec), "--out", str(tmp_path / "o")]) == cli.EXIT_SAMPLE_ERRORS


def test_error_exit_codes(tmp_path, configs_dir, monkeypatch, capsys):
    assert cli.main(["coherence", "--config", str(tmp_path / "missing.json")]) == cli.EXIT_IO
    bad = tmp_path / "bad.json"
    bad.write_text('{"field": {"b_uT": -5}}')
    assert cli.main(["coherence", "--config", str(bad)]) == cli.EXIT_INVALID
    bad.write_text("{not json")
    assert cli.main(["coherence", "--config", str(bad)]) == cli.EXIT_INVALID
    assert "error" in capsys.readouterr().err

    def diverge(*args, **kwargs):
        raise IntegrationError("no convergence", 1.0)

    monkeypatch.setattr(cli, "global_coherence", diverge)
    assert cli.main(["coherence", "--config", str(configs_dir / "two_nucleus.json")]) == cli.EXIT_NUMERICAL


def test_interferometer_output(capsys):
    assert cli.main(["interferometer", "--n-phase", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "phase_rad,m"
    assert abs(float(lines[2].split(",")[1])) < 1e-12
    assert float(lines[-2].split()[1]) == pytest.approx(2 * float(lines[-1].split()[1]))


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "rpcompass", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "rpcompass" in proc.stdout
    with pytest.raises(SystemExit):
        cli.main(["yield-map"])
