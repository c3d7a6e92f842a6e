import csv
import json

import numpy as np
import pytest

from nrdisp.cli import RunConfig, _parse_detunings, main
from nrdisp.core import EffectiveParams
from nrdisp.errors import ConfigError
from nrdisp.presets import get_preset


def run(*argv):
    return main([str(a) for a in argv])


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_run_config_needs_one_source():
    with pytest.raises(ConfigError):
        RunConfig()
    with pytest.raises(ConfigError):
        RunConfig(preset="device-a", params={"delta_c": 0})
    with pytest.raises(ConfigError):
        RunConfig(preset="device-a", protocol="nope")


def test_parse_detunings():
    assert _parse_detunings("-1:1:3") == [-1.0, 0.0, 1.0]
    assert _parse_detunings("0.5, 1") == [0.5, 1.0]
    assert _parse_detunings("") == []


@pytest.mark.parametrize("protocol", ["qubit-ramsey", "cavity-ramsey", "cavity-t1", "photon-calibration",
                                      "trajectory", "measurement-set"])
def test_simulate_protocols(tmp_path, protocol):
    assert run("simulate", "--protocol", protocol, "--preset", "device-a", "--out", tmp_path) == 0
    stem = tmp_path / protocol.replace("-", "_")
    rows = read_csv(f"{stem}.csv")
    assert len(rows) >= 2
    meta = json.loads((tmp_path / f"{stem.name}.meta.json").read_text())
    assert meta["config"]["protocol"] == protocol
    assert meta["config"]["preset"] == "device-a"
    assert meta["seed"] == 0 and meta["backend"] == "semiclassical" and "version" in meta
    assert "preset_metadata" in meta


def test_simulate_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run("simulate", "--protocol", "qubit-ramsey", "--preset", "device-b", "--seed", 7, "--out", d) == 0
    assert (a / "qubit_ramsey.csv").read_bytes() == (b / "qubit_ramsey.csv").read_bytes()


def test_noisy_measurement_set_is_seeded(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"preset": "device-a", "protocol": "measurement-set",
                               "protocol_config": {"noise": {"phi": 0.01, "kappa_g": 0.1}}}))
    outs = []
    for k, seed in enumerate((1, 1, 2)):
        d = tmp_path / str(k)
        assert run("simulate", "--config", cfg, "--seed", seed, "--out", d) == 0
        outs.append((d / "measurement_set.csv").read_bytes())
    assert outs[0] == outs[1] != outs[2]


def test_cw_sweep_cross_check(tmp_path):
    assert run("simulate", "--protocol", "cw-sweep", "--backend", "oracle", "--cross-check", "--preset",
               "device-a", "--detunings=-3:3:7", "--out", tmp_path) == 0
    rows = read_csv(tmp_path / "cw_sweep.csv")
    assert rows[0] == ["delta_d", "stark", "dephasing", "oracle_stark", "oracle_dephasing"]
    vals = np.array(rows[1:], float)
    np.testing.assert_allclose(vals[:, 3], vals[:, 1], rtol=1e-3)
    np.testing.assert_allclose(vals[:, 4], vals[:, 2], rtol=1e-3)


def test_empty_detunings_is_usage_error(tmp_path, capsys):
    assert run("simulate", "--protocol", "cw-sweep", "--detunings", "", "--out", tmp_path) == 2
    assert "detuning" in capsys.readouterr().err


def test_fwm_protocol(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"preset": "device-a", "protocol": "fwm", "fwm": {"omega_rabi": 0.6}}))
    assert run("simulate", "--config", cfg, "--out", tmp_path) == 0
    ratio, *_, fock = np.array(read_csv(tmp_path / "fwm.csv")[1], float)
    assert ratio == pytest.approx(fock, rel=1e-3)


def test_inline_params_in_mhz(tmp_path):
    path = tmp_path / "p.json"
    path.write_text(json.dumps({"delta_c": 0.3, "lambda": 0.25, "kappa": 0.7, "gamma_nr": 1.0, "theta": -0.6,
                                "eta": 0.35}))
    assert run("simulate", "--params", path, "--out", tmp_path) == 0
    meta = json.loads((tmp_path / "qubit_ramsey.meta.json").read_text())
    assert meta["config"]["params"]["kappa"] == 0.7


def test_network_source(tmp_path):
    cfg = tmp_path / "run.json"
    net = {"h_mat": [[0, 8], [8, 300]], "gamma_mat": [[0.3, 0], [0, 100]], "lambda0": 50}
    cfg.write_text(json.dumps({"network": net, "protocol": "qubit-ramsey"}))
    assert run("simulate", "--config", cfg, "--out", tmp_path) == 0


@pytest.mark.parametrize("bad", ["{not json", json.dumps({"preset": "device-z"}),
                                 json.dumps({"preset": "device-a", "bogus": 1}),
                                 json.dumps({"preset": "device-a", "protocol_config": {"t_f": -1}})])
def test_config_errors_exit_2(tmp_path, bad):
    cfg = tmp_path / "run.json"
    cfg.write_text(bad)
    assert run("simulate", "--config", cfg, "--out", tmp_path) == 2


def test_extract_round_trip(tmp_path):
    assert run("simulate", "--protocol", "measurement-set", "--preset", "device-b", "--out", tmp_path) == 0
    assert run("extract", tmp_path / "measurement_set.json", "--mc-samples", 0, "--out", tmp_path) == 0
    res = json.loads((tmp_path / "extraction.json").read_text())
    assert res["uncertainty"] is None
    got = EffectiveParams.from_dict(res["params"])
    np.testing.assert_allclose(got.as_array(), get_preset("device-b").as_array(), rtol=1e-6)


def test_extract_with_monte_carlo(tmp_path):
    ms = tmp_path / "ms.json"
    assert run("simulate", "--protocol", "measurement-set", "--preset", "device-a", "--out", tmp_path) == 0
    d = json.loads((tmp_path / "measurement_set.json").read_text())
    d["sigmas"] = {"phi": 0.005, "zeta": 0.002, "kappa_g": 0.02, "kappa_e": 0.02}
    ms.write_text(json.dumps(d))
    assert run("extract", ms, "--mc-samples", 2000, "--histograms", "--out", tmp_path) == 0
    res = json.loads((tmp_path / "extraction.json").read_text())
    assert res["uncertainty"]["kappa"][0] > 0
    assert res["input"]["sigmas"]["phi"] == 0.005
    assert read_csv(tmp_path / "histograms.csv")[0] == ["parameter", "bin_center", "count"]


def test_extract_unphysical_exit_3(tmp_path, capsys):
    assert run("simulate", "--protocol", "measurement-set", "--preset", "device-a", "--out", tmp_path) == 0
    d = json.loads((tmp_path / "measurement_set.json").read_text())
    d["kappa_g"] *= 30
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(d))
    assert run("extract", bad, "--mc-samples", 0, "--out", tmp_path) == 3
    assert "NoPhysicalSolution" in capsys.readouterr().err


def test_extract_malformed_json_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2")
    assert run("extract", bad, "--out", tmp_path) == 2
    bad.write_text(json.dumps({"omega_g": 1.0}))
    assert run("extract", bad, "--out", tmp_path) == 2


def test_compare_oracle_report(tmp_path):
    assert run("compare-oracle", "--preset", "device-a", "--t-final", 0.5, "--n-points", 11, "--n-max", 20,
               "--out", tmp_path) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert max(rep["max_rel_error"].values()) < 1e-6
    assert rep["physicality"]["min_eigenvalue"] > -1e-8


def test_compare_oracle_reciprocal_machine_precision(tmp_path):
    # n_max = 30 so the truncated coherent-state tail (~1e-11 at n_max = 20) is below 1e-12
    assert run("compare-oracle", "--preset", "reciprocal", "--t-final", 0.5, "--n-points", 11, "--n-max", 30,
               "--method", "expm", "--out", tmp_path) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert max(rep["max_rel_error"].values()) < 1e-12


def test_compare_oracle_truncation_leak_exit_3(tmp_path, capsys):
    assert run("compare-oracle", "--preset", "device-a", "--n0", 8, "--n-max", 12, "--t-final", 0.2,
               "--n-points", 3, "--out", tmp_path) == 3
    assert "TruncationLeak" in capsys.readouterr().err
