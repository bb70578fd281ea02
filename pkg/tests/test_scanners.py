import pytest
from hypothesis import given
from hypothesis import strategies as st

from beaconlab.calibration import load_anchors
from beaconlab.errors import CalibrationError, ConfigError
from beaconlab.scanners import (
    DEFAULT_SCANNER_WEIGHTS,
    SCANNERS,
    build_models,
    calibrate_base_matrix,
    combine,
    models_from_dict,
    models_to_dict,
    scan,
)
from beaconlab.scoring import SdkClass
from beaconlab.taxonomy import VECTORS, VectorClass


@pytest.fixture(scope="module")
def targets():
    raw = load_anchors()["detection_resistance"]["targets"]
    return {VectorClass(k): v for k, v in raw.items()}


def _row_sum(matrix, vector):
    return sum(w * matrix[s][vector] for s, w in zip(SCANNERS, DEFAULT_SCANNER_WEIGHTS))


def test_dr_one_gives_zero_row():
    m = calibrate_base_matrix({VectorClass.S3_PRESIGNED_URL: 1.0})
    assert all(m[s][VectorClass.S3_PRESIGNED_URL] == 0.0 for s in SCANNERS)


def test_serverless_row_sum(targets):
    m = calibrate_base_matrix(targets)
    assert _row_sum(m, VectorClass.SERVERLESS_TRIGGER) == pytest.approx(0.389, abs=1e-9)


def test_iam_entries_small(targets):
    m = calibrate_base_matrix(targets)
    assert all(m[s][VectorClass.IAM_CANARY_ROLE] <= 0.25 for s in SCANNERS)


def test_row_sums_match_targets(targets):
    m = calibrate_base_matrix(targets)
    for v, dr in targets.items():
        assert 1.0 - _row_sum(m, v) == pytest.approx(dr, abs=1e-12)


def test_unreachable_target_is_calibration_error():
    with pytest.raises(CalibrationError):
        calibrate_base_matrix({VectorClass.SERVERLESS_TRIGGER: 0.0})
    with pytest.raises(CalibrationError):
        calibrate_base_matrix({VectorClass.SERVERLESS_TRIGGER: 1.5})


def test_weights_must_sum_to_one(targets):
    with pytest.raises(ConfigError):
        calibrate_base_matrix(targets, weights=(0.5, 0.5, 0.5))


def test_committed_models_reproduce_dr(cfg, targets):
    for v, dr in targets.items():
        assert scan(v, None, cfg.scanners).resistance == pytest.approx(dr, abs=1e-9)


def test_models_round_trip(cfg):
    models = models_from_dict(models_to_dict(cfg.scanners))
    assert models_to_dict(models) == models_to_dict(cfg.scanners)
    with pytest.raises(ConfigError):
        models_from_dict({**models_to_dict(cfg.scanners), "S9": {}})


@given(st.lists(st.floats(0, 1), min_size=3, max_size=3))
def test_combined_in_unit_interval(ps):
    out = combine(ps, DEFAULT_SCANNER_WEIGHTS)
    assert 0.0 <= out.combined_p <= 1.0
    assert out.resistance == pytest.approx(1.0 - out.combined_p)


@given(st.sampled_from(VECTORS), st.sampled_from(list(SdkClass)))
def test_scan_bounds(vector, sdk):
    models = build_models(calibrate_base_matrix({v: 0.7 for v in VECTORS}))
    out = scan(vector, sdk, models)
    assert 0.0 <= out.resistance <= 1.0
