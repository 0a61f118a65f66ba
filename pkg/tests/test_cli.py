import json

import numpy as np
import pytest
import yaml

from lassophase.cli import main

IDENT_QUAD = {
    "covariance": {"family": "identity"},
    "prior": {"epsilon": 0.15},
    "geometry": {"delta": 0.5, "sigma_w": 0.2},
    "mc": {"use_quadrature": True},
    "seed": 9,
}

AR_SMALL = {
    "covariance": {"family": "ar1", "rho": 0.5},
    "prior": {"epsilon": 0.15},
    "geometry": {"delta": 0.5, "sigma_w": 0.2},
    "mc": {"p_grid": [100, 200], "replicates": 60},
    "seed": 9,
}


def _write_cfg(tmp_path, payload, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(payload))
    return str(path)


def _run(command, cfg_path, out_dir, *flags):
    return main([command, "--config", cfg_path, "--out", str(out_dir), *flags])


def _read_csv(path):
    lines = path.read_text().splitlines()
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


# ------------------------------------------------------------- happy paths


def test_calibrate_monotone_and_csv(tmp_path):
    cfg = dict(IDENT_QUAD)
    cfg["calibrate"] = {"alpha_grid": [1.0, 1.5, 2.0, 2.5]}
    rc = _run("calibrate", _write_cfg(tmp_path, cfg), tmp_path)
    assert rc == 0
    header, rows = _read_csv(tmp_path / "calibrate.csv")
    assert header == ["alpha", "tau_star_sq", "theta_star", "lambda", "mc_stderr"]
    lams = [float(r[3]) for r in rows]
    assert lams == sorted(lams)
    summary = json.loads((tmp_path / "calibrate_summary.json").read_text())
    assert summary["command"] == "calibrate"
    assert str(tmp_path / "calibrate.csv") in summary["outputs"]


def test_risk_curve_runs_on_correlated_design(tmp_path):
    cfg = dict(AR_SMALL)
    cfg["risk_curve"] = {"lambda_grid": [0.3, 0.6]}
    rc = _run("risk-curve", _write_cfg(tmp_path, cfg), tmp_path)
    assert rc == 0
    header, rows = _read_csv(tmp_path / "risk_curve.csv")
    assert header == ["lambda", "alpha", "tau_star_sq", "mse", "stderr"]
    assert [float(r[0]) for r in rows] == [0.3, 0.6]
    assert all(float(r[3]) > 0 for r in rows)


def test_rerun_is_byte_identical(tmp_path):
    cfg = dict(IDENT_QUAD)
    cfg["calibrate"] = {"alpha_grid": [1.5, 2.0]}
    path = _write_cfg(tmp_path, cfg)
    assert _run("calibrate", path, tmp_path) == 0
    first = (tmp_path / "calibrate.csv").read_bytes()
    assert _run("calibrate", path, tmp_path) == 0
    assert (tmp_path / "calibrate.csv").read_bytes() == first


def test_phase_curve_increasing(tmp_path):
    cfg = {
        "covariance": {"family": "identity"},
        "mc": {"p_grid": [60, 120], "replicates": 40},
        "phase_curve": {"epsilon_grid": [0.2, 0.5]},
    }
    rc = _run("phase-curve", _write_cfg(tmp_path, cfg), tmp_path)
    assert rc == 0
    header, rows = _read_csv(tmp_path / "phase_curve.csv")
    assert header[:4] == ["epsilon", "d_epsilon", "delta_c", "alpha_star"]
    dc = [float(r[2]) for r in rows]
    assert dc[1] > dc[0]


def test_verify_phase_small(tmp_path):
    cfg = {
        "covariance": {"family": "identity"},
        "mc": {"p_grid": [60, 120], "replicates": 40},
        "verify_phase": {"epsilon_grid": [0.2], "p": 60, "m": 6,
                         "window": 0.2, "grid_points": 5},
    }
    rc = _run("verify-phase", _write_cfg(tmp_path, cfg), tmp_path)
    assert rc == 0
    header, rows = _read_csv(tmp_path / "verify_phase.csv")
    assert header == ["epsilon", "d_epsilon", "delta_c_theory", "delta_hat",
                      "abs_gap", "separated", "p", "m"]
    assert len(rows) == 1
    assert float(rows[0][4]) <= 0.25


def test_amp_demo_summary(tmp_path):
    cfg = dict(IDENT_QUAD)
    cfg["amp_demo"] = {"p": 150, "alpha": 2.0}
    rc = _run("amp-demo", _write_cfg(tmp_path, cfg), tmp_path)
    assert rc == 0
    summary = json.loads((tmp_path / "amp_demo_summary.json").read_text())
    assert summary["amp_status"] == "converged"
    # per-coordinate squared gap to the lasso at the asymptotic penalty; the
    # finite-p mismatch dominates at p=150
    assert summary["gap_to_lasso"] < 3e-3
    assert abs(summary["empirical_lambda"] - summary["lambda"]) / summary["lambda"] < 0.25
    header, rows = _read_csv(tmp_path / "amp_trace.csv")
    assert header == ["iteration", "mse", "dbeta", "dz", "tau_sq", "support"]
    assert len(rows) == summary["iterations"]


def test_mse_experiment_csv(tmp_path):
    cfg = dict(IDENT_QUAD)
    cfg["mse_experiment"] = {"lambda_grid": [0.3], "p": 100, "m": 6}
    rc = _run("mse-experiment", _write_cfg(tmp_path, cfg), tmp_path)
    assert rc == 0
    header, rows = _read_csv(tmp_path / "mse_experiment.csv")
    assert header == ["lambda", "alpha", "theory_mse", "theory_stderr",
                      "emp_mean", "emp_stderr", "n_ok"]
    assert int(rows[0][6]) == 6


# ----------------------------------------------------------------- overrides


def test_seed_flag_overrides_config(tmp_path):
    cfg = dict(IDENT_QUAD)
    cfg["calibrate"] = {"alpha_grid": [2.0]}
    rc = _run("calibrate", _write_cfg(tmp_path, cfg), tmp_path, "--seed", "11")
    assert rc == 0
    summary = json.loads((tmp_path / "calibrate_summary.json").read_text())
    assert summary["seed"] == 11
    assert summary["config"]["mc"]["base_seed"] == 11


def test_p_grid_and_replicates_flags(tmp_path):
    cfg = dict(AR_SMALL)
    cfg["calibrate"] = {"alpha_grid": [2.0]}
    rc = _run("calibrate", _write_cfg(tmp_path, cfg), tmp_path,
              "--p-grid", "50,100", "--replicates", "20")
    assert rc == 0
    summary = json.loads((tmp_path / "calibrate_summary.json").read_text())
    assert summary["config"]["mc"]["p_grid"] == [50, 100]
    assert summary["config"]["mc"]["replicates"] == 20


def test_workers_env(tmp_path, monkeypatch):
    cfg = dict(IDENT_QUAD)
    cfg["calibrate"] = {"alpha_grid": [2.0]}
    path = _write_cfg(tmp_path, cfg)
    monkeypatch.setenv("LASSO_PHASE_WORKERS", "1")
    assert _run("calibrate", path, tmp_path) == 0
    monkeypatch.setenv("LASSO_PHASE_WORKERS", "abc")
    assert _run("calibrate", path, tmp_path) == 2


# ---------------------------------------------------------------- validation


def test_missing_covariance_is_config_error(tmp_path, caplog):
    cfg = {"prior": {"epsilon": 0.15}, "geometry": {"delta": 0.5}}
    assert _run("calibrate", _write_cfg(tmp_path, cfg), tmp_path) == 2
    assert "covariance: missing block" in caplog.text


def test_unknown_keys_rejected(tmp_path, caplog):
    cfg = dict(IDENT_QUAD)
    cfg["riskcurve"] = {}
    assert _run("calibrate", _write_cfg(tmp_path, cfg), tmp_path) == 2
    assert "unknown top-level keys" in caplog.text

    caplog.clear()
    cfg = dict(IDENT_QUAD)
    cfg["risk_curve"] = {"lambdas": [0.3]}
    assert _run("risk-curve", _write_cfg(tmp_path, cfg), tmp_path) == 2
    assert "unknown keys ['lambdas']" in caplog.text
    assert "lambda_grid" in caplog.text


def test_zero_epsilon_rejected_for_risk(tmp_path, caplog):
    cfg = dict(IDENT_QUAD)
    cfg["prior"] = {"epsilon": 0.0}
    assert _run("risk-curve", _write_cfg(tmp_path, cfg), tmp_path) == 2
    assert "prior.epsilon" in caplog.text


def test_bad_p_grid_flag(tmp_path, caplog):
    cfg = dict(IDENT_QUAD)
    assert _run("calibrate", _write_cfg(tmp_path, cfg), tmp_path,
                "--p-grid", "50,x") == 2
    assert "--p-grid" in caplog.text


def test_problems_accumulate(tmp_path, caplog):
    cfg = {
        "covariance": {"family": "ar1", "rho": 1.5},
        "geometry": {"delta": 2.0},
        "prior": {"epsilon": 0.15},
    }
    assert _run("calibrate", _write_cfg(tmp_path, cfg), tmp_path) == 2
    assert "covariance" in caplog.text
    assert "geometry.delta" in caplog.text


def test_amp_demo_negative_lambda_is_config_error(tmp_path, caplog):
    # just above the stability edge the calibrated penalty is negative
    cfg = dict(IDENT_QUAD)
    cfg["amp_demo"] = {"p": 100, "alpha": 0.42}
    assert _run("amp-demo", _write_cfg(tmp_path, cfg), tmp_path) == 2
    assert "pick a larger alpha" in caplog.text


def test_nonpositive_lambda_grid_rejected(tmp_path):
    cfg = dict(IDENT_QUAD)
    cfg["risk_curve"] = {"lambda_grid": [0.0, 0.5]}
    assert _run("risk-curve", _write_cfg(tmp_path, cfg), tmp_path) == 2
