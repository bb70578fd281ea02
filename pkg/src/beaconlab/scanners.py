"""Behavioural scanner models, combined detection probability and resistance."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .errors import CalibrationError, ConfigError
from .scoring import SdkClass, clamp
from .taxonomy import VECTORS, VectorClass


class ScannerId(str, Enum):
    S1_DATA_CLASSIFIER = "S1_DataClassifier"
    S2_IAC_STATIC = "S2_IacStatic"
    S3_CNAPP_RUNTIME = "S3_CnappRuntime"


SCANNERS: tuple[ScannerId, ...] = tuple(ScannerId)
DEFAULT_SCANNER_WEIGHTS = (0.40, 0.30, 0.30)


@dataclass(frozen=True)
class ScannerModel:
    id: ScannerId
    weight: float
    base_matrix: Mapping[VectorClass, float]
    sdk_modifier: Mapping[SdkClass, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 <= self.weight <= 1.0:
            raise ConfigError(f"{self.id.value}: weight {self.weight} outside [0, 1]")
        for v, p in self.base_matrix.items():
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{self.id.value}: base probability for {v.value} outside [0, 1]")

    def probability(self, vector: VectorClass, sdk: SdkClass | None = None) -> float:
        shift = self.sdk_modifier.get(sdk, 0.0) if sdk is not None else 0.0
        return clamp(self.base_matrix[vector] + shift)


@dataclass(frozen=True)
class DetectionOutcome:
    per_scanner_p: tuple[float, float, float]
    combined_p: float
    resistance: float


def _check_weights(models: Sequence[ScannerModel]) -> None:
    total = sum(m.weight for m in models)
    if abs(total - 1.0) > 1e-9:
        raise ConfigError(f"scanner weights must sum to 1, got {total!r}")


def combine(per_scanner_p: Sequence[float], weights: Sequence[float]) -> DetectionOutcome:
    combined = clamp(sum(w * p for w, p in zip(weights, per_scanner_p)))
    return DetectionOutcome(tuple(per_scanner_p), combined, 1.0 - combined)


def scan(vector: VectorClass, sdk: SdkClass | None, models: Sequence[ScannerModel]) -> DetectionOutcome:
    """Detection outcome for one callback of ``vector`` issued with tooling ``sdk``."""
    _check_weights(models)
    probs = tuple(m.probability(vector, sdk) for m in models)
    return combine(probs, [m.weight for m in models])


def scan_event(event, models: Sequence[ScannerModel]) -> DetectionOutcome:
    return scan(event.vector, event.sdk, models)


def sample_flag(outcome: DetectionOutcome, rng: np.random.Generator) -> bool:
    """Campaign-level boolean: was this callback flagged by any weighted scanner draw."""
    return bool(rng.random() < outcome.combined_p)


# Which scanner carries the detection mass for each vector (shares are
# renormalised by the calibration). S2 dominates IaC/K8s, S3 dominates
# runtime vectors, S1 dominates credential-pattern vectors, IAM is flat.
DEFAULT_SPLIT: Mapping[VectorClass, tuple[float, float, float]] = {
    VectorClass.S3_PRESIGNED_URL: (0.60, 0.15, 0.25),
    VectorClass.CONTAINER_IMAGE: (0.20, 0.20, 0.60),
    VectorClass.IAM_CANARY_ROLE: (0.34, 0.33, 0.33),
    VectorClass.TERRAFORM_MODULE: (0.20, 0.60, 0.20),
    VectorClass.K8S_SECRET: (0.25, 0.50, 0.25),
    VectorClass.SERVERLESS_TRIGGER: (0.15, 0.15, 0.70),
}

DEFAULT_SDK_MODIFIERS: Mapping[ScannerId, Mapping[SdkClass, float]] = {
    ScannerId.S1_DATA_CLASSIFIER: {},
    ScannerId.S2_IAC_STATIC: {},
    ScannerId.S3_CNAPP_RUNTIME: {SdkClass.CURL: 0.05, SdkClass.NATIVE_SDK: -0.05},
}


def calibrate_base_matrix(
    targets: Mapping[VectorClass, float],
    weights: Sequence[float] = DEFAULT_SCANNER_WEIGHTS,
    split: Mapping[VectorClass, Sequence[float]] = DEFAULT_SPLIT,
) -> dict[ScannerId, dict[VectorClass, float]]:
    """Per-scanner base probabilities whose weighted row sums equal 1 - DR target."""
    if abs(sum(weights) - 1.0) > 1e-9:
        raise ConfigError("scanner weights must sum to 1")
    matrix: dict[ScannerId, dict[VectorClass, float]] = {s: {} for s in SCANNERS}
    for vector, dr in targets.items():
        if not 0.0 <= dr <= 1.0:
            raise CalibrationError(f"DR target {dr} for {vector.value} outside [0, 1]", anchor=vector.value)
        shares = np.asarray(split[vector], dtype=float)
        mass = 1.0 - dr
        scale = mass / float(np.dot(weights, shares))
        row = shares * scale
        if np.any(row > 1.0 + 1e-12):
            raise CalibrationError(
                f"DR target {dr} for {vector.value} needs a detection probability above 1 under split {tuple(shares)}",
                anchor=vector.value,
            )
        for scanner, p in zip(SCANNERS, row):
            matrix[scanner][vector] = float(min(p, 1.0))
    return matrix


def build_models(
    matrix: Mapping[ScannerId, Mapping[VectorClass, float]],
    weights: Sequence[float] = DEFAULT_SCANNER_WEIGHTS,
    sdk_modifiers: Mapping[ScannerId, Mapping[SdkClass, float]] = DEFAULT_SDK_MODIFIERS,
) -> list[ScannerModel]:
    return [
        ScannerModel(s, w, dict(matrix[s]), dict(sdk_modifiers.get(s, {})))
        for s, w in zip(SCANNERS, weights)
    ]


def models_to_dict(models: Sequence[ScannerModel]) -> dict:
    return {
        m.id.value: {
            "weight": m.weight,
            "base": {v.value: round(m.base_matrix[v], 12) for v in VECTORS},
            "sdk_modifier": {s.value: m.sdk_modifier[s] for s in SdkClass if s in m.sdk_modifier},
        }
        for m in models
    }


def models_from_dict(raw: Mapping) -> list[ScannerModel]:
    unknown = set(raw) - {s.value for s in SCANNERS}
    if unknown:
        raise ConfigError(f"unknown scanners {sorted(unknown)}")
    models = []
    for s in SCANNERS:
        if s.value not in raw:
            raise ConfigError(f"scanner {s.value} missing")
        body = raw[s.value]
        extra = set(body) - {"weight", "base", "sdk_modifier"}
        if extra:
            raise ConfigError(f"scanner {s.value}: unknown keys {sorted(extra)}")
        models.append(
            ScannerModel(
                s,
                float(body["weight"]),
                {VectorClass(k): float(v) for k, v in body["base"].items()},
                {SdkClass(k): float(v) for k, v in body.get("sdk_modifier", {}).items()},
            )
        )
    _check_weights(models)
    return models
