import json

import pytest

from beaconlab import config as cfgmod
from beaconlab.errors import ConfigError


def test_bundled_config_loads(cfg):
    assert cfg.scoring.delta == 0.05
    assert cfg.experiment.master_seed == 42
    assert cfg.experiment.replicas == 50
    assert len(cfg.scanners) == 3


def test_round_trip_preserves_digest(cfg):
    again = cfgmod.loads(cfgmod.dumps(cfg))
    assert again.digest() == cfg.digest()
    assert cfgmod.dumps(again) == cfgmod.dumps(cfg)


def test_bundled_text_is_canonical_dump(cfg):
    assert cfgmod.dumps(cfg) == cfgmod.bundled_text()


def test_digest_ignores_provenance(cfg):
    raw = json.loads(cfgmod.dumps(cfg))
    raw["provenance"] = {"note": "edited"}
    assert cfgmod.from_dict(raw).digest() == cfg.digest()
    raw["scoring"]["delta"] = 0.06
    assert cfgmod.from_dict(raw).digest() != cfg.digest()


def test_unknown_key_reports_line(cfg):
    text = cfgmod.dumps(cfg).replace('"delta":', '"bogus_key": 1,\n    "delta":', 1)
    with pytest.raises(ConfigError) as info:
        cfgmod.loads(text, source="bad.json")
    expected = text.splitlines().index(next(l for l in text.splitlines() if '"bogus_key"' in l)) + 1
    assert info.value.line == expected
    assert "bogus_key" in str(info.value) and f"bad.json:{expected}" in str(info.value)


def test_unknown_top_level_key(cfg):
    raw = json.loads(cfgmod.dumps(cfg))
    raw["surprise"] = {}
    with pytest.raises(ConfigError):
        cfgmod.from_dict(raw)


def test_invalid_json_line():
    with pytest.raises(ConfigError) as info:
        cfgmod.loads('{\n  "scoring": ,\n}')
    assert info.value.line == 2


def test_bad_values_rejected(cfg):
    raw = json.loads(cfgmod.dumps(cfg))
    raw["experiment"]["replicas"] = 0
    with pytest.raises(ConfigError):
        cfgmod.from_dict(raw)
    raw = json.loads(cfgmod.dumps(cfg))
    raw["experiment"]["replicas"] = "many"
    with pytest.raises(ConfigError):
        cfgmod.from_dict(raw)


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        cfgmod.load(tmp_path / "absent.json")


def test_env_var_resolution(cfg, tmp_path, monkeypatch):
    raw = json.loads(cfgmod.dumps(cfg))
    raw["experiment"]["master_seed"] = 7
    path = tmp_path / "c.json"
    path.write_text(json.dumps(raw))
    monkeypatch.setenv(cfgmod.CONFIG_ENV, str(path))
    assert cfgmod.resolve(None).experiment.master_seed == 7
    monkeypatch.delenv(cfgmod.CONFIG_ENV)
    assert cfgmod.resolve(None).experiment.master_seed == 42


def test_with_experiment(cfg):
    small = cfg.with_experiment(replicas=3)
    assert small.experiment.replicas == 3 and cfg.experiment.replicas == 50
    with pytest.raises(ConfigError):
        cfg.with_experiment(decay_timepoints=(6.0, 0.0))
