"""Cloud Attribution Score and its four component models."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

from .errors import ConfigError, DomainError
from .taxonomy import CloudProvider, VectorClass, VECTORS

_SUM_TOL = 1e-9


class SdkClass(str, Enum):
    CURL = "curl"
    SCRIPTED_SDK = "scripted-sdk"
    NATIVE_SDK = "native-sdk"


@dataclass(frozen=True)
class CasWeights:
    w1: float = 0.35
    w2: float = 0.25
    w3: float = 0.25
    w4: float = 0.15

    def __post_init__(self) -> None:
        ws = (self.w1, self.w2, self.w3, self.w4)
        if any(not 0.0 <= w <= 1.0 for w in ws):
            raise ConfigError(f"CAS weights must lie in [0, 1], got {ws}")
        if abs(sum(ws) - 1.0) > _SUM_TOL:
            raise ConfigError(f"CAS weights must sum to 1, got {sum(ws)!r}")


DEFAULT_WEIGHTS = CasWeights()


@dataclass(frozen=True)
class CasBreakdown:
    c_f: float
    e_p: float
    i_c: float
    m_b: float
    cas: float

    def to_dict(self) -> dict[str, float]:
        return {"c_f": self.c_f, "e_p": self.e_p, "i_c": self.i_c, "m_b": self.m_b, "cas": self.cas}


@dataclass(frozen=True)
class ChurnState:
    """Elapsed hours, pod restarts and autoscaling events over a window."""

    t: float
    r: int = 0
    s: int = 0
    delta: float = 0.05

    def __post_init__(self) -> None:
        if self.t < 0 or self.r < 0 or self.s < 0:
            raise DomainError(f"churn counters must be non-negative: t={self.t}, r={self.r}, s={self.s}")
        if self.delta <= 0:
            raise DomainError(f"decay rate must be positive, got {self.delta}")

    @property
    def effective_hours(self) -> float:
        return self.t + 2 * self.r + 3 * self.s


@dataclass(frozen=True)
class IamTelemetry:
    n_a: int
    k: int = 1
    cross_account: bool = False

    def __post_init__(self) -> None:
        if self.n_a < 0:
            raise DomainError(f"n_a must be >= 0, got {self.n_a}")
        if self.n_a > 0 and self.k < 1:
            raise DomainError("at least one principal must be observed when actions are logged")


@dataclass(frozen=True)
class RoutingEvidence:
    tor: bool = False
    vpn: bool = False
    residential: bool = False
    rotated: bool = False
    exit_provider: CloudProvider | None = None  # set when the exit IP sits in a known cloud range


@dataclass(frozen=True)
class CrossProviderEvidence:
    distinct_providers: int
    cloud_exit: bool = False


def _check_unit(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0) or math.isnan(value):
        raise DomainError(f"{name}={value} outside [0, 1]")


def clamp(x: float, lo: float = 0.0, hi: float = 1.0) -> float:
    return lo if x < lo else hi if x > hi else x


def cas(components: tuple[float, float, float, float], weights: CasWeights = DEFAULT_WEIGHTS) -> float:
    """Composite score from (callback fidelity, ephemeral penalty, IAM coverage, multi-cloud bonus)."""
    c_f, e_p, i_c, m_b = components
    for name, value in zip(("c_f", "e_p", "i_c", "m_b"), components):
        _check_unit(name, value)
    keep = 1.0 - e_p
    score = weights.w1 * c_f * keep + weights.w2 * i_c + weights.w3 * keep * i_c + weights.w4 * m_b
    return clamp(score)


def ephemeral_penalty(churn: ChurnState) -> float:
    return 1.0 - math.exp(-churn.delta * churn.effective_hours)


def solve_decay_rate(hours: float, penalty: float) -> float:
    """Invert the decay curve: the rate giving ``penalty`` after ``hours`` of clean time."""
    if hours <= 0 or not 0.0 < penalty < 1.0:
        raise DomainError("need hours > 0 and penalty in (0, 1)")
    return -math.log1p(-penalty) / hours


IAM_ACTION_DIVISOR = 10.0
IAM_ACTION_CAP = 0.80
IAM_MULTI_PRINCIPAL_BONUS = 0.10
IAM_CROSS_ACCOUNT_BONUS = 0.10


def iam_coverage(telemetry: IamTelemetry) -> float:
    score = min(telemetry.n_a / IAM_ACTION_DIVISOR, IAM_ACTION_CAP)
    if telemetry.k > 1:
        score += IAM_MULTI_PRINCIPAL_BONUS
    if telemetry.cross_account:
        score += IAM_CROSS_ACCOUNT_BONUS
    return clamp(score)


@dataclass(frozen=True)
class FidelityParams:
    """Per-vector clean-routing base, SDK offsets and routing penalties."""

    vector_base: Mapping[VectorClass, float]
    sdk_offset: Mapping[SdkClass, float]
    p_tor: float
    p_vpn: float
    p_residential: float
    p_rotated: float
    floor: float = 0.05

    def base(self, vector: VectorClass, sdk: SdkClass) -> float:
        return self.vector_base[vector] + self.sdk_offset[sdk]

    def to_dict(self) -> dict:
        return {
            "vector_base": {v.value: self.vector_base[v] for v in VECTORS},
            "sdk_offset": {s.value: self.sdk_offset[s] for s in SdkClass},
            "p_tor": self.p_tor,
            "p_vpn": self.p_vpn,
            "p_residential": self.p_residential,
            "p_rotated": self.p_rotated,
            "floor": self.floor,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "FidelityParams":
        return cls(
            vector_base={VectorClass(k): float(v) for k, v in raw["vector_base"].items()},
            sdk_offset={SdkClass(k): float(v) for k, v in raw["sdk_offset"].items()},
            p_tor=float(raw["p_tor"]),
            p_vpn=float(raw["p_vpn"]),
            p_residential=float(raw["p_residential"]),
            p_rotated=float(raw["p_rotated"]),
            floor=float(raw.get("floor", 0.05)),
        )


def callback_fidelity(
    routing: RoutingEvidence, sdk: SdkClass, vector: VectorClass, params: FidelityParams
) -> float:
    value = (
        params.base(vector, sdk)
        - params.p_tor * routing.tor
        - params.p_vpn * routing.vpn
        - params.p_residential * routing.residential
        - params.p_rotated * routing.rotated
    )
    return clamp(value, params.floor, 1.0)


@dataclass(frozen=True)
class BonusParams:
    per_provider: float = 0.20
    cloud_exit: float = 0.20


def multi_cloud_bonus(evidence: CrossProviderEvidence, params: BonusParams = BonusParams()) -> float:
    if evidence.distinct_providers < 1:
        raise DomainError("at least one provider must be observed")
    raw = params.per_provider * (evidence.distinct_providers - 1) + params.cloud_exit * evidence.cloud_exit
    return clamp(raw)


@dataclass(frozen=True)
class ScoringConfig:
    weights: CasWeights = DEFAULT_WEIGHTS
    delta: float = 0.05
    fidelity: FidelityParams | None = None
    bonus: BonusParams = BonusParams()
    # additive I_c shift per provider and per (vector, provider); simulation-side only
    provider_ic_offset: Mapping[CloudProvider, float] = field(default_factory=dict)
    cell_ic_offset: Mapping[tuple[VectorClass, CloudProvider], float] = field(default_factory=dict)


def breakdown(c_f: float, e_p: float, i_c: float, m_b: float, weights: CasWeights = DEFAULT_WEIGHTS) -> CasBreakdown:
    """Clamp simulation-derived components into [0, 1] and score them."""
    comps = tuple(clamp(x) for x in (c_f, e_p, i_c, m_b))
    return CasBreakdown(*comps, cas=cas(comps, weights))


def score_event(event, config: ScoringConfig) -> CasBreakdown:
    """Score one simulated callback; components are clamped, never rejected."""
    if config.fidelity is None:
        raise ConfigError("scoring config has no fidelity parameters")
    c_f = callback_fidelity(event.routing, event.sdk, event.vector, config.fidelity)
    window = event.window
    if window.delta != config.delta:
        window = ChurnState(window.t, window.r, window.s, config.delta)
    e_p = ephemeral_penalty(window)
    i_c = (
        iam_coverage(event.iam)
        + config.provider_ic_offset.get(event.provider, 0.0)
        + config.cell_ic_offset.get((event.vector, event.provider), 0.0)
    )
    m_b = multi_cloud_bonus(event.evidence, config.bonus)
    return breakdown(c_f, e_p, i_c, m_b, config.weights)
