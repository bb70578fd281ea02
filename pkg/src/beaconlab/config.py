"""Structured configuration: loading, validation, serialisation and digests.

The configuration is a single JSON document::

    {
      "schema_version": 1,
      "scoring":     {...},   # CAS weights, decay rate, fidelity/bonus coefficients, I_c offsets
      "attackers":   {...},   # attacker profiles, telemetry priors, churn coefficients, horizon
      "scanners":    {...},   # scanner weights, base matrix, SDK modifiers
      "attribution": {...},   # posterior / confidence parameters
      "experiment":  {...},   # seeds, replicas, decay study settings
      "contexts":    {...},   # organisation profiles used to render beacons
      "taxonomy":    {...},   # optional radar-axis overrides
      "provenance":  {...}    # optional, written by calibration (anchor residuals)
    }

Unknown keys anywhere are errors; diagnostics carry the line of the key.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .adversary import LEVELS, AdversaryConfig, AttackerLevel, AttackerProfile, IamPrior
from .attribution import AttributionParams
from .errors import ConfigError
from .scanners import ScannerModel, models_from_dict, models_to_dict
from .scoring import BonusParams, CasWeights, FidelityParams, ScoringConfig
from .taxonomy import DEFAULT_CONTEXT, PROVIDERS, VECTORS, CloudProvider, OrgContext, VectorClass, set_radar_overrides

SCHEMA_VERSION = 1
CONFIG_ENV = "CLOUDBURST_CONFIG"

_TOP_KEYS = {"schema_version", "scoring", "attackers", "scanners", "attribution", "experiment", "contexts", "taxonomy", "provenance"}


@dataclass(frozen=True)
class DecayPriors:
    """Uniform t=0 component priors for the decay study."""

    c_f: tuple[float, float] = (0.85, 0.95)
    i_c: tuple[float, float] = (0.74, 0.96)
    m_b: tuple[float, float] = (0.30, 0.60)

    def means(self) -> tuple[float, float, float]:
        return tuple((lo + hi) / 2 for lo, hi in (self.c_f, self.i_c, self.m_b))


@dataclass(frozen=True)
class ExperimentSettings:
    master_seed: int = 42
    replicas: int = 50
    decay_timepoints: tuple[float, ...] = (0.0, 6.0, 12.0, 24.0, 36.0, 48.0)
    context: str = DEFAULT_CONTEXT
    threshold: float = 0.85
    kappa: float = 0.40
    ic_attenuation: bool = True
    decay_priors: DecayPriors = DecayPriors()
    min_cell_n: int = 3

    def __post_init__(self) -> None:
        if self.replicas < 1:
            raise ConfigError("experiment.replicas must be >= 1")
        tps = list(self.decay_timepoints)
        if not tps or tps[0] != 0 or tps != sorted(tps) or len(set(tps)) != len(tps):
            raise ConfigError("experiment.decay_timepoints must be strictly ascending and start at 0")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("experiment.threshold must lie in (0, 1)")
        if not 0.0 <= self.kappa <= 1.0:
            raise ConfigError("experiment.kappa must lie in [0, 1]")


@dataclass(frozen=True)
class LabConfig:
    scoring: ScoringConfig
    adversary: AdversaryConfig
    scanners: tuple[ScannerModel, ...]
    attribution: AttributionParams
    experiment: ExperimentSettings
    contexts: Mapping[str, OrgContext]
    radar: Mapping[VectorClass, Mapping[str, float]] = field(default_factory=dict)
    provenance: Mapping[str, Any] = field(default_factory=dict)

    def digest(self) -> str:
        """SHA-256 over the canonical serialisation, excluding provenance."""
        body = to_dict(self)
        body.pop("provenance", None)
        return hashlib.sha256(canonical_json(body).encode()).hexdigest()

    def with_experiment(self, **changes) -> "LabConfig":
        return replace(self, experiment=replace(self.experiment, **changes))


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


# --- validation helpers ------------------------------------------------------


class _Reader:
    """Validates sections against allowed keys and anchors errors to lines."""

    def __init__(self, text: str | None, source: str | None):
        self.text = text
        self.source = source

    def line_of(self, key: str) -> int | None:
        if self.text is None:
            return None
        m = re.search(r'"' + re.escape(key) + r'"\s*:', self.text)
        if not m:
            return None
        return self.text.count("\n", 0, m.start()) + 1

    def fail(self, message: str, key: str | None = None) -> ConfigError:
        return ConfigError(message, line=self.line_of(key) if key else None, source=self.source)

    def section(self, raw: Any, path: str, required: set[str], optional: set[str] = frozenset()) -> dict:
        if not isinstance(raw, dict):
            raise self.fail(f"{path} must be an object", path.rsplit(".", 1)[-1])
        unknown = set(raw) - required - set(optional)
        if unknown:
            key = sorted(unknown)[0]
            raise self.fail(f"unknown key {path}.{key}", key)
        missing = required - set(raw)
        if missing:
            raise self.fail(f"missing key(s) {sorted(missing)} in {path}", path.rsplit(".", 1)[-1])
        return raw

    def number(self, raw: Any, path: str) -> float:
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise self.fail(f"{path} must be a number, got {raw!r}", path.rsplit(".", 1)[-1])
        return float(raw)

    def integer(self, raw: Any, path: str) -> int:
        if isinstance(raw, bool) or not isinstance(raw, int):
            raise self.fail(f"{path} must be an integer, got {raw!r}", path.rsplit(".", 1)[-1])
        return raw

    def enum_map(self, raw: Any, enum, path: str) -> dict:
        if not isinstance(raw, dict):
            raise self.fail(f"{path} must be an object", path.rsplit(".", 1)[-1])
        out = {}
        for k, v in raw.items():
            try:
                out[enum(k)] = v
            except ValueError:
                raise self.fail(f"unknown key {path}.{k}", k) from None
        return out


def _parse_scoring(rd: _Reader, raw: Any) -> ScoringConfig:
    sec = rd.section(raw, "scoring", {"weights", "delta", "fidelity", "bonus"}, {"provider_ic_offset", "cell_ic_offset"})
    w = rd.section(sec["weights"], "scoring.weights", {"w1", "w2", "w3", "w4"})
    try:
        weights = CasWeights(*(rd.number(w[k], f"scoring.weights.{k}") for k in ("w1", "w2", "w3", "w4")))
    except ConfigError as exc:
        raise rd.fail(str(exc), "weights") from None
    fid = rd.section(
        sec["fidelity"], "scoring.fidelity",
        {"vector_base", "sdk_offset", "p_tor", "p_vpn", "p_residential", "p_rotated"}, {"floor"},
    )
    try:
        fidelity = FidelityParams.from_dict(fid)
    except (KeyError, ValueError) as exc:
        raise rd.fail(f"scoring.fidelity: {exc}", "fidelity") from None
    if set(fidelity.vector_base) != set(VECTORS):
        raise rd.fail("scoring.fidelity.vector_base must list all six vectors", "vector_base")
    bonus = rd.section(sec["bonus"], "scoring.bonus", {"per_provider", "cloud_exit"})
    delta = rd.number(sec["delta"], "scoring.delta")
    if delta <= 0:
        raise rd.fail("scoring.delta must be positive", "delta")
    prov = rd.enum_map(sec.get("provider_ic_offset", {}), CloudProvider, "scoring.provider_ic_offset")
    cells_raw = sec.get("cell_ic_offset", {})
    cells = {}
    for key, value in rd.enum_map(cells_raw, VectorClass, "scoring.cell_ic_offset").items():
        for pk, pv in rd.enum_map(value, CloudProvider, f"scoring.cell_ic_offset.{key.value}").items():
            cells[(key, pk)] = rd.number(pv, f"scoring.cell_ic_offset.{key.value}.{pk.value}")
    return ScoringConfig(
        weights=weights,
        delta=delta,
        fidelity=fidelity,
        bonus=BonusParams(rd.number(bonus["per_provider"], "bonus.per_provider"), rd.number(bonus["cloud_exit"], "bonus.cloud_exit")),
        provider_ic_offset={p: rd.number(v, f"provider_ic_offset.{p.value}") for p, v in prov.items()},
        cell_ic_offset=cells,
    )


_PROFILE_KEYS = {
    "p_tor", "p_vpn", "p_residential", "rotation_rate", "dwell_mean_h", "sdk",
    "callback_rate_h", "p_cloud_exit", "p_foreign_platform", "action_shift", "p_cross_account",
}


def _parse_attackers(rd: _Reader, raw: Any, delta: float) -> AdversaryConfig:
    sec = rd.section(raw, "attackers", {"profiles", "iam_priors", "restart_per_risk", "scale_per_risk", "horizon_h"})
    profiles = {}
    for level, body in rd.enum_map(sec["profiles"], AttackerLevel, "attackers.profiles").items():
        rd.section(body, f"attackers.profiles.{level.value}", _PROFILE_KEYS)
        try:
            profiles[level] = AttackerProfile.from_dict(level.value, body)
        except (ValueError, TypeError) as exc:
            raise rd.fail(f"attackers.profiles.{level.value}: {exc}", level.value) from None
    if set(profiles) != set(LEVELS):
        raise rd.fail("attackers.profiles must define Naive, Advanced and APT", "profiles")
    priors = {}
    for vector, body in rd.enum_map(sec["iam_priors"], VectorClass, "attackers.iam_priors").items():
        rd.section(body, f"attackers.iam_priors.{vector.value}", {"n_a_low", "n_a_high", "p_multi_principal", "p_cross_account"})
        lo = rd.integer(body["n_a_low"], "n_a_low")
        hi = rd.integer(body["n_a_high"], "n_a_high")
        if not 0 <= lo <= hi:
            raise rd.fail(f"attackers.iam_priors.{vector.value}: need 0 <= n_a_low <= n_a_high", vector.value)
        priors[vector] = IamPrior(lo, hi, rd.number(body["p_multi_principal"], "p_multi_principal"), rd.number(body["p_cross_account"], "p_cross_account"))
    if set(priors) != set(VECTORS):
        raise rd.fail("attackers.iam_priors must cover all six vectors", "iam_priors")
    horizon = rd.number(sec["horizon_h"], "attackers.horizon_h")
    if horizon <= 0:
        raise rd.fail("attackers.horizon_h must be positive", "horizon_h")
    return AdversaryConfig(
        profiles=profiles,
        iam_priors=priors,
        restart_per_risk=rd.number(sec["restart_per_risk"], "restart_per_risk"),
        scale_per_risk=rd.number(sec["scale_per_risk"], "scale_per_risk"),
        delta=delta,
        horizon_h=horizon,
    )


_ATTR_KEYS = {"gamma", "decoy_low", "decoy_high", "rho", "n_candidates", "trace_length", "ctd_budget"}


def _parse_attribution(rd: _Reader, raw: Any, threshold: float) -> AttributionParams:
    sec = rd.section(raw, "attribution", _ATTR_KEYS)
    try:
        return AttributionParams(
            gamma=rd.number(sec["gamma"], "gamma"),
            decoy_low=rd.number(sec["decoy_low"], "decoy_low"),
            decoy_high=rd.number(sec["decoy_high"], "decoy_high"),
            rho=rd.number(sec["rho"], "rho"),
            n_candidates=rd.integer(sec["n_candidates"], "n_candidates"),
            threshold=threshold,
            trace_length=rd.integer(sec["trace_length"], "trace_length"),
            ctd_budget=rd.integer(sec["ctd_budget"], "ctd_budget"),
        )
    except ValueError as exc:
        raise rd.fail(f"attribution: {exc}", "attribution") from None


_EXP_KEYS = {"master_seed", "replicas", "decay_timepoints", "context", "threshold", "kappa", "ic_attenuation", "decay_priors", "min_cell_n"}


def _parse_experiment(rd: _Reader, raw: Any) -> ExperimentSettings:
    sec = rd.section(raw, "experiment", set(), _EXP_KEYS)
    kwargs: dict[str, Any] = {}
    for key in ("master_seed", "replicas", "min_cell_n"):
        if key in sec:
            kwargs[key] = rd.integer(sec[key], f"experiment.{key}")
    for key in ("threshold", "kappa"):
        if key in sec:
            kwargs[key] = rd.number(sec[key], f"experiment.{key}")
    if "decay_timepoints" in sec:
        kwargs["decay_timepoints"] = tuple(rd.number(t, "decay_timepoints") for t in sec["decay_timepoints"])
    if "context" in sec:
        kwargs["context"] = str(sec["context"])
    if "ic_attenuation" in sec:
        if not isinstance(sec["ic_attenuation"], bool):
            raise rd.fail("experiment.ic_attenuation must be a boolean", "ic_attenuation")
        kwargs["ic_attenuation"] = sec["ic_attenuation"]
    if "decay_priors" in sec:
        dp = rd.section(sec["decay_priors"], "experiment.decay_priors", {"c_f", "i_c", "m_b"})
        bands = {}
        for key in ("c_f", "i_c", "m_b"):
            band = dp[key]
            if not (isinstance(band, list) and len(band) == 2):
                raise rd.fail(f"experiment.decay_priors.{key} must be [low, high]", key)
            lo, hi = (rd.number(x, key) for x in band)
            if not 0.0 <= lo <= hi <= 1.0:
                raise rd.fail(f"experiment.decay_priors.{key} must satisfy 0 <= low <= high <= 1", key)
            bands[key] = (lo, hi)
        kwargs["decay_priors"] = DecayPriors(**bands)
    try:
        return ExperimentSettings(**kwargs)
    except ConfigError as exc:
        raise rd.fail(str(exc), "experiment") from None


def from_dict(raw: Any, *, text: str | None = None, source: str | None = None) -> LabConfig:
    rd = _Reader(text, source)
    sec = rd.section(raw, "config", {"schema_version", "scoring", "attackers", "scanners", "attribution", "experiment", "contexts"}, _TOP_KEYS)
    version = sec["schema_version"]
    if version != SCHEMA_VERSION:
        raise rd.fail(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})", "schema_version")
    scoring = _parse_scoring(rd, sec["scoring"])
    adversary = _parse_attackers(rd, sec["attackers"], scoring.delta)
    try:
        scanners = tuple(models_from_dict(sec["scanners"]))
    except (ConfigError, ValueError, KeyError, TypeError) as exc:
        raise rd.fail(f"scanners: {exc}", "scanners") from None
    experiment = _parse_experiment(rd, sec["experiment"])
    attribution = _parse_attribution(rd, sec["attribution"], experiment.threshold)
    if not isinstance(sec["contexts"], dict) or not sec["contexts"]:
        raise rd.fail("contexts must be a non-empty object", "contexts")
    contexts = {}
    for label, body in sec["contexts"].items():
        try:
            contexts[label] = OrgContext.from_dict(label, body)
        except ConfigError as exc:
            raise rd.fail(str(exc), label) from None
    if experiment.context not in contexts:
        raise rd.fail(f"experiment.context {experiment.context!r} is not a defined context", "context")
    radar = {}
    for vector, body in rd.enum_map(sec.get("taxonomy", {}), VectorClass, "taxonomy").items():
        radar[vector] = {k: rd.number(v, k) for k, v in body.items()}
    try:
        set_radar_overrides(radar)
    except ConfigError as exc:
        raise rd.fail(str(exc), "taxonomy") from None
    return LabConfig(
        scoring=scoring,
        adversary=adversary,
        scanners=scanners,
        attribution=attribution,
        experiment=experiment,
        contexts=contexts,
        radar=radar,
        provenance=dict(sec.get("provenance", {})),
    )


def to_dict(cfg: LabConfig) -> dict:
    sc = cfg.scoring
    cells: dict[str, dict[str, float]] = {}
    for (v, p), off in sorted(sc.cell_ic_offset.items(), key=lambda kv: (VECTORS.index(kv[0][0]), PROVIDERS.index(kv[0][1]))):
        cells.setdefault(v.value, {})[p.value] = off
    ex = cfg.experiment
    at = cfg.attribution
    body = {
        "schema_version": SCHEMA_VERSION,
        "scoring": {
            "weights": {"w1": sc.weights.w1, "w2": sc.weights.w2, "w3": sc.weights.w3, "w4": sc.weights.w4},
            "delta": sc.delta,
            "fidelity": sc.fidelity.to_dict(),
            "bonus": {"per_provider": sc.bonus.per_provider, "cloud_exit": sc.bonus.cloud_exit},
            "provider_ic_offset": {p.value: sc.provider_ic_offset[p] for p in PROVIDERS if p in sc.provider_ic_offset},
            "cell_ic_offset": cells,
        },
        "attackers": {
            "profiles": {lv.value: cfg.adversary.profiles[lv].to_dict() for lv in LEVELS},
            "iam_priors": {v.value: cfg.adversary.iam_priors[v].to_dict() for v in VECTORS},
            "restart_per_risk": cfg.adversary.restart_per_risk,
            "scale_per_risk": cfg.adversary.scale_per_risk,
            "horizon_h": cfg.adversary.horizon_h,
        },
        "scanners": models_to_dict(cfg.scanners),
        "attribution": {
            "gamma": at.gamma,
            "decoy_low": at.decoy_low,
            "decoy_high": at.decoy_high,
            "rho": at.rho,
            "n_candidates": at.n_candidates,
            "trace_length": at.trace_length,
            "ctd_budget": at.ctd_budget,
        },
        "experiment": {
            "master_seed": ex.master_seed,
            "replicas": ex.replicas,
            "decay_timepoints": list(ex.decay_timepoints),
            "context": ex.context,
            "threshold": ex.threshold,
            "kappa": ex.kappa,
            "ic_attenuation": ex.ic_attenuation,
            "decay_priors": {k: list(getattr(ex.decay_priors, k)) for k in ("c_f", "i_c", "m_b")},
            "min_cell_n": ex.min_cell_n,
        },
        "contexts": {label: ctx.to_dict() for label, ctx in cfg.contexts.items()},
    }
    if cfg.radar:
        body["taxonomy"] = {v.value: dict(vals) for v, vals in cfg.radar.items()}
    if cfg.provenance:
        body["provenance"] = copy.deepcopy(dict(cfg.provenance))
    return body


def dumps(cfg: LabConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2, sort_keys=False) + "\n"


def loads(text: str, source: str | None = None) -> LabConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", line=exc.lineno, source=source) from None
    return from_dict(raw, text=text, source=source)


def load(path: str | os.PathLike) -> LabConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", source=str(path)) from None
    return loads(text, source=str(path))


def bundled_text(name: str = "default_config.json") -> str:
    return resources.files("beaconlab.data").joinpath(name).read_text(encoding="utf-8")


def default_config() -> LabConfig:
    return loads(bundled_text(), source="<bundled default_config.json>")


def resolve(path: str | os.PathLike | None) -> LabConfig:
    """Explicit path, else ``$CLOUDBURST_CONFIG``, else the bundled default."""
    if path is None:
        path = os.environ.get(CONFIG_ENV) or None
    return default_config() if path is None else load(path)
