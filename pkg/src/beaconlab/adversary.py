"""Attacker behaviour models and callback-stream simulation."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Mapping, Sequence

from .errors import ConfigError
from .scoring import ChurnState, CrossProviderEvidence, IamTelemetry, RoutingEvidence, SdkClass
from .seeding import child_rng
from .taxonomy import (
    PROVIDERS,
    VECTORS,
    BeaconInstance,
    CloudProvider,
    VectorClass,
    generate_fleet,
    matrix_pairs,
    property_profile,
)


class AttackerLevel(str, Enum):
    NAIVE = "Naive"
    ADVANCED = "Advanced"
    APT = "APT"


LEVELS: tuple[AttackerLevel, ...] = tuple(AttackerLevel)


@dataclass(frozen=True)
class AttackerProfile:
    level: AttackerLevel
    p_tor: float
    p_vpn: float
    p_residential: float
    rotation_rate: float
    dwell_mean_h: float
    sdk: SdkClass
    # campaign mechanics, not part of the published attacker table
    callback_rate_h: float = 0.05
    p_cloud_exit: float = 0.3
    p_foreign_platform: float = 0.2
    action_shift: int = 0
    p_cross_account: float = 0.0

    def __post_init__(self) -> None:
        for name in ("p_tor", "p_vpn", "p_residential", "rotation_rate", "p_cloud_exit", "p_foreign_platform", "p_cross_account"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{self.level.value}.{name}={value} is not a probability")
        if self.dwell_mean_h <= 0 or self.callback_rate_h <= 0:
            raise ConfigError(f"{self.level.value}: dwell mean and callback rate must be positive")

    def to_dict(self) -> dict:
        return {
            "p_tor": self.p_tor,
            "p_vpn": self.p_vpn,
            "p_residential": self.p_residential,
            "rotation_rate": self.rotation_rate,
            "dwell_mean_h": self.dwell_mean_h,
            "sdk": self.sdk.value,
            "callback_rate_h": self.callback_rate_h,
            "p_cloud_exit": self.p_cloud_exit,
            "p_foreign_platform": self.p_foreign_platform,
            "action_shift": self.action_shift,
            "p_cross_account": self.p_cross_account,
        }

    @classmethod
    def from_dict(cls, level: str, raw: Mapping) -> "AttackerProfile":
        fields_ = dict(raw)
        fields_["sdk"] = SdkClass(fields_["sdk"])
        return cls(level=AttackerLevel(level), **fields_)


# Published behavioural parameters; campaign mechanics are filled from the
# committed configuration.
TABLE_PROFILES: Mapping[AttackerLevel, AttackerProfile] = {
    AttackerLevel.NAIVE: AttackerProfile(AttackerLevel.NAIVE, 0.15, 0.30, 0.05, 0.05, 2.0, SdkClass.CURL),
    AttackerLevel.ADVANCED: AttackerProfile(AttackerLevel.ADVANCED, 0.45, 0.40, 0.20, 0.25, 8.0, SdkClass.SCRIPTED_SDK),
    AttackerLevel.APT: AttackerProfile(AttackerLevel.APT, 0.70, 0.25, 0.50, 0.65, 72.0, SdkClass.NATIVE_SDK),
}


@dataclass(frozen=True)
class IamPrior:
    """Per-vector telemetry prior: uniform action count plus principal/account indicators."""

    n_a_low: int
    n_a_high: int
    p_multi_principal: float
    p_cross_account: float

    def to_dict(self) -> dict:
        return {
            "n_a_low": self.n_a_low,
            "n_a_high": self.n_a_high,
            "p_multi_principal": self.p_multi_principal,
            "p_cross_account": self.p_cross_account,
        }


@dataclass(frozen=True)
class AdversaryConfig:
    profiles: Mapping[AttackerLevel, AttackerProfile]
    iam_priors: Mapping[VectorClass, IamPrior]
    restart_per_risk: float = 0.30
    scale_per_risk: float = 0.15
    delta: float = 0.05
    horizon_h: float = 96.0

    def churn_rates(self, vector: VectorClass) -> tuple[float, float]:
        risk = property_profile(vector).inherent_ephemeral_risk
        return self.restart_per_risk * risk, self.scale_per_risk * risk


@dataclass(frozen=True)
class CallbackEvent:
    beacon_id: str
    vector: VectorClass
    provider: CloudProvider
    level: AttackerLevel
    index: int
    event_time_h: float
    dwell_h: float
    routing: RoutingEvidence
    iam: IamTelemetry
    churn: ChurnState  # cumulative since deployment
    window: ChurnState  # since the previous callback (or first contact)
    sdk: SdkClass
    evidence: CrossProviderEvidence

    def evidence_key(self) -> str:
        r = self.routing
        return (
            f"{self.beacon_id}|{self.level.value}|{self.index}|{self.event_time_h:.9f}|"
            f"{int(r.tor)}{int(r.vpn)}{int(r.residential)}{int(r.rotated)}|"
            f"{r.exit_provider.value if r.exit_provider else '-'}|{self.iam.n_a}|{self.iam.k}|{int(self.iam.cross_account)}"
        )

    def to_dict(self) -> dict:
        return {
            "beacon_id": self.beacon_id,
            "vector": self.vector.value,
            "provider": self.provider.value,
            "level": self.level.value,
            "index": self.index,
            "event_time_h": round(self.event_time_h, 9),
            "dwell_h": round(self.dwell_h, 9),
            "tor": self.routing.tor,
            "vpn": self.routing.vpn,
            "residential": self.routing.residential,
            "rotated": self.routing.rotated,
            "exit_provider": self.routing.exit_provider.value if self.routing.exit_provider else "",
            "n_a": self.iam.n_a,
            "k": self.iam.k,
            "cross_account": self.iam.cross_account,
            "restarts": self.churn.r,
            "scale_events": self.churn.s,
            "window_h": round(self.window.t, 9),
            "window_restarts": self.window.r,
            "window_scale_events": self.window.s,
            "sdk": self.sdk.value,
            "distinct_providers": self.evidence.distinct_providers,
        }


EVENT_COLUMNS = tuple(
    CallbackEvent(
        "", VECTORS[0], PROVIDERS[0], LEVELS[0], 0, 0.0, 0.0, RoutingEvidence(), IamTelemetry(0),
        ChurnState(0.0), ChurnState(0.0), SdkClass.CURL, CrossProviderEvidence(1),
    ).to_dict()
)


def _sample_iam(rng, prior: IamPrior, profile: AttackerProfile) -> IamTelemetry:
    n_a = int(rng.integers(prior.n_a_low, prior.n_a_high + 1)) + profile.action_shift
    n_a = max(n_a, 0)
    multi = bool(rng.random() < prior.p_multi_principal)
    p_cross = min(1.0, prior.p_cross_account + profile.p_cross_account)
    cross = bool(rng.random() < p_cross)
    if n_a == 0:
        return IamTelemetry(0, 1, False)
    return IamTelemetry(n_a, 2 if multi else 1, cross)


def beacon_stream(
    beacon: BeaconInstance,
    profile: AttackerProfile,
    config: AdversaryConfig,
    seed: int,
    *,
    horizon_h: float | None = None,
    max_callbacks: int | None = None,
) -> Iterator[CallbackEvent]:
    """Callbacks from one attacker against one beacon, in time order.

    The stream is a prefix-stable function of (beacon, profile level, seed):
    a shorter horizon or budget yields a prefix of the longer stream.
    """
    if horizon_h is None and max_callbacks is None:
        raise ValueError("an unbounded stream needs a horizon or a callback budget")
    rng = child_rng(seed, "stream", beacon.id, profile.level.value)
    restart_rate, scale_rate = config.churn_rates(beacon.vector)
    prior = config.iam_priors[beacon.vector]
    others = [p for p in PROVIDERS if p is not beacon.provider]

    dwell = float(rng.exponential(profile.dwell_mean_h))
    r_total = int(rng.poisson(restart_rate * dwell))
    s_total = int(rng.poisson(scale_rate * dwell))
    now = dwell
    index = 0
    while max_callbacks is None or index < max_callbacks:
        gap = float(rng.exponential(1.0 / profile.callback_rate_h))
        now += gap
        if horizon_h is not None and now > horizon_h:
            return
        r_win = int(rng.poisson(restart_rate * gap))
        s_win = int(rng.poisson(scale_rate * gap))
        r_total += r_win
        s_total += s_win
        u = rng.random(7)
        cloud_exit = bool(u[4] < profile.p_cloud_exit)
        exit_provider = PROVIDERS[int(rng.integers(0, len(PROVIDERS)))] if cloud_exit else None
        platform = others[int(rng.integers(0, len(others)))] if u[5] < profile.p_foreign_platform else None
        seen = {beacon.provider, exit_provider, platform} - {None}
        routing = RoutingEvidence(
            tor=bool(u[0] < profile.p_tor),
            vpn=bool(u[1] < profile.p_vpn),
            residential=bool(u[2] < profile.p_residential),
            rotated=bool(u[3] < profile.rotation_rate),
            exit_provider=exit_provider,
        )
        yield CallbackEvent(
            beacon_id=beacon.id,
            vector=beacon.vector,
            provider=beacon.provider,
            level=profile.level,
            index=index,
            event_time_h=now,
            dwell_h=dwell,
            routing=routing,
            iam=_sample_iam(rng, prior, profile),
            churn=ChurnState(now, r_total, s_total, config.delta),
            window=ChurnState(gap, r_win, s_win, config.delta),
            sdk=profile.sdk,
            evidence=CrossProviderEvidence(len(seen), cloud_exit),
        )
        index += 1


def simulate_callbacks(
    fleet: Sequence[BeaconInstance],
    profile: AttackerProfile,
    horizon_h: float,
    seed: int,
    config: AdversaryConfig,
) -> list[CallbackEvent]:
    if horizon_h <= 0:
        raise ValueError("horizon must be positive")
    if not fleet:
        raise ValueError("fleet is empty")
    events: list[CallbackEvent] = []
    for beacon in fleet:
        events.extend(beacon_stream(beacon, profile, config, seed, horizon_h=horizon_h))
    return events


def expected_active_hours(dwell_mean_h: float, horizon_h: float) -> float:
    """E[max(0, horizon - D)] for exponential dwell D."""
    return horizon_h - dwell_mean_h * (1.0 - math.exp(-horizon_h / dwell_mean_h))


def rate_for_expected_count(dwell_mean_h: float, horizon_h: float, per_beacon: float) -> float:
    return per_beacon / expected_active_hours(dwell_mean_h, horizon_h)


def expected_campaign_size(config: AdversaryConfig, n_beacons: int = len(matrix_pairs())) -> float:
    return sum(
        n_beacons * p.callback_rate_h * expected_active_hours(p.dwell_mean_h, config.horizon_h)
        for p in config.profiles.values()
    )


def default_campaign(seed: int, config: AdversaryConfig, fleet: Sequence[BeaconInstance] | None = None) -> list[CallbackEvent]:
    """All three attacker levels against the default fleet."""
    fleet = generate_fleet(seed) if fleet is None else fleet
    events: list[CallbackEvent] = []
    for level in LEVELS:
        events.extend(simulate_callbacks(fleet, config.profiles[level], config.horizon_h, seed, config))
    return events


def events_to_jsonl(events: Sequence[CallbackEvent]) -> str:
    return "".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in events)


def events_to_csv(events: Sequence[CallbackEvent]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(EVENT_COLUMNS), lineterminator="\r\n")
    writer.writeheader()
    for e in events:
        writer.writerow(e.to_dict())
    return buf.getvalue()
