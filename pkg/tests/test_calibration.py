import copy
import json

import pytest

from beaconlab.calibration import (
    calibrate_all,
    fit_delta,
    fit_fidelity,
    fidelity_anchor_value,
    load_anchors,
    solve_kappa,
)
from beaconlab.errors import CalibrationError, ConfigError
from beaconlab.scoring import ChurnState, ephemeral_penalty


@pytest.fixture(scope="module")
def anchors():
    return load_anchors()


@pytest.fixture(scope="module")
def result(anchors):
    return calibrate_all(anchors, seed=42, jobs=1)


def test_delta_fit(anchors):
    raw, rounded = fit_delta(anchors["decay_examples"], 3)
    assert abs(raw - 0.050) <= 0.001
    assert rounded == 0.05


def test_delta_recovers_synthetic_rate():
    examples = [
        {"t": t, "r": r, "s": s, "e_p": ephemeral_penalty(ChurnState(t, r, s, 0.037))}
        for t, r, s in ((1, 0, 0), (5, 1, 2), (20, 3, 1))
    ]
    raw, _ = fit_delta(examples, None)
    assert raw == pytest.approx(0.037, rel=1e-5)


def test_fidelity_anchors_fit(anchors):
    params = fit_fidelity(anchors["fidelity"])
    for a in anchors["fidelity"]:
        assert abs(fidelity_anchor_value(a, params) - a["c_f"]) <= a["tolerance"]


def test_calibration_reproduces_committed_config(result, cfg):
    assert result.config.digest() == cfg.digest()


def test_calibrated_coefficients(result):
    assert abs(result.fitted["delta"] - 0.050) <= 0.001
    assert abs(result.fitted["kappa"] - 0.40) <= 0.05
    assert all(r["ok"] for r in result.residuals.rows)


def test_kappa_reduced_equation(result, cfg):
    priors = cfg.experiment.decay_priors
    k = solve_kappa(0.196, priors, cfg.scoring.weights, result.fitted["decay_end_penalty"])
    assert round(k, 3) == cfg.experiment.kappa


def test_missing_anchor_file(tmp_path):
    with pytest.raises(ConfigError):
        load_anchors(tmp_path / "nope.json")


def test_anchor_missing_section(tmp_path, anchors):
    raw = dict(anchors)
    del raw["ctd"]
    path = tmp_path / "a.json"
    path.write_text(json.dumps(raw))
    with pytest.raises(ConfigError):
        load_anchors(path)


def test_deterministic_anchor_failure_is_fast(anchors):
    bad = copy.deepcopy(anchors)
    bad["detection_resistance"]["targets"]["ServerlessTrigger"] = 0.0
    with pytest.raises(CalibrationError) as info:
        calibrate_all(bad, jobs=1)
    assert info.value.residuals is not None


@pytest.mark.slow
def test_tightened_stochastic_tolerance_fails(anchors):
    bad = copy.deepcopy(anchors)
    bad["decay_study"]["tolerance"] = 1e-9
    with pytest.raises(CalibrationError) as info:
        calibrate_all(bad, jobs=1)
    assert "decay" in info.value.anchor
    assert any(not r["ok"] for r in info.value.residuals.rows)
