import json

import numpy as np
import pytest

from beaconlab.adversary import (
    LEVELS,
    TABLE_PROFILES,
    AttackerLevel,
    AttackerProfile,
    beacon_stream,
    default_campaign,
    events_to_csv,
    events_to_jsonl,
    expected_active_hours,
    simulate_callbacks,
)
from beaconlab.errors import ConfigError
from beaconlab.scoring import SdkClass
from beaconlab.taxonomy import generate_fleet


def test_published_profiles():
    n, a, apt = (TABLE_PROFILES[lv] for lv in LEVELS)
    assert (n.p_tor, n.p_vpn, n.p_residential, n.rotation_rate, n.dwell_mean_h) == (0.15, 0.30, 0.05, 0.05, 2.0)
    assert (a.p_tor, a.p_vpn, a.p_residential, a.rotation_rate, a.dwell_mean_h) == (0.45, 0.40, 0.20, 0.25, 8.0)
    assert (apt.p_tor, apt.p_vpn, apt.p_residential, apt.rotation_rate, apt.dwell_mean_h) == (0.70, 0.25, 0.50, 0.65, 72.0)
    assert (n.sdk, a.sdk, apt.sdk) == (SdkClass.CURL, SdkClass.SCRIPTED_SDK, SdkClass.NATIVE_SDK)


def test_configured_profiles_keep_published_behaviour(cfg):
    for lv in LEVELS:
        got, pub = cfg.adversary.profiles[lv], TABLE_PROFILES[lv]
        for name in ("p_tor", "p_vpn", "p_residential", "rotation_rate", "dwell_mean_h", "sdk"):
            assert getattr(got, name) == getattr(pub, name)


def test_profile_rejects_bad_probability():
    with pytest.raises(ConfigError):
        AttackerProfile(AttackerLevel.NAIVE, 1.5, 0.3, 0.05, 0.05, 2.0, SdkClass.CURL)
    with pytest.raises(ConfigError):
        AttackerProfile(AttackerLevel.NAIVE, 0.1, 0.3, 0.05, 0.05, 0.0, SdkClass.CURL)


def test_default_campaign_size(cfg):
    events = default_campaign(1, cfg.adversary)
    assert 180 <= len(events) <= 230


def test_campaign_is_deterministic(cfg):
    a = default_campaign(3, cfg.adversary)
    b = default_campaign(3, cfg.adversary)
    assert events_to_jsonl(a) == events_to_jsonl(b)
    assert events_to_jsonl(a) != events_to_jsonl(default_campaign(4, cfg.adversary))


def _stream(cfg, level, n, seed=0):
    beacon = generate_fleet(0)[0]
    return list(beacon_stream(beacon, cfg.adversary.profiles[level], cfg.adversary, seed, max_callbacks=n))


def test_naive_tor_fraction(cfg):
    events = _stream(cfg, AttackerLevel.NAIVE, 10_000)
    frac = np.mean([e.routing.tor for e in events])
    assert abs(frac - 0.15) <= 0.02


def test_apt_mean_dwell(cfg):
    fleet = generate_fleet(0)
    profile = cfg.adversary.profiles[AttackerLevel.APT]
    dwells = []
    for seed in range(200):
        for beacon in fleet:
            first = next(beacon_stream(beacon, profile, cfg.adversary, seed, max_callbacks=1))
            dwells.append(first.dwell_h)
    assert abs(np.mean(dwells) - 72.0) <= 3.0


def test_stream_is_prefix_stable(cfg):
    short = _stream(cfg, AttackerLevel.ADVANCED, 5)
    long = _stream(cfg, AttackerLevel.ADVANCED, 20)
    assert [e.to_dict() for e in short] == [e.to_dict() for e in long[:5]]


def test_events_are_time_ordered_and_after_dwell(cfg):
    events = _stream(cfg, AttackerLevel.APT, 50)
    times = [e.event_time_h for e in events]
    assert times == sorted(times)
    assert all(e.event_time_h > e.dwell_h for e in events)
    assert [e.index for e in events] == list(range(50))


def test_churn_is_cumulative(cfg):
    events = _stream(cfg, AttackerLevel.APT, 50)
    for prev, cur in zip(events, events[1:]):
        assert cur.churn.r == prev.churn.r + cur.window.r
        assert cur.churn.s == prev.churn.s + cur.window.s


def test_horizon_bounds_events(cfg):
    fleet = generate_fleet(0)
    events = simulate_callbacks(fleet, cfg.adversary.profiles[AttackerLevel.NAIVE], 48.0, 0, cfg.adversary)
    assert all(e.event_time_h <= 48.0 for e in events)
    with pytest.raises(ValueError):
        simulate_callbacks(fleet, cfg.adversary.profiles[AttackerLevel.NAIVE], 0.0, 0, cfg.adversary)


def test_unbounded_stream_rejected(cfg):
    beacon = generate_fleet(0)[0]
    with pytest.raises(ValueError):
        next(beacon_stream(beacon, cfg.adversary.profiles[AttackerLevel.NAIVE], cfg.adversary, 0))


def test_expected_active_hours_limits():
    assert expected_active_hours(1e-9, 96.0) == pytest.approx(96.0)
    assert expected_active_hours(1e6, 96.0) == pytest.approx(0.0, abs=0.01)


def test_event_serialisation(cfg):
    events = _stream(cfg, AttackerLevel.NAIVE, 3)
    lines = events_to_jsonl(events).splitlines()
    assert len(lines) == 3 and json.loads(lines[0])["level"] == "Naive"
    csv = events_to_csv(events)
    assert csv.count("\r\n") == 4
