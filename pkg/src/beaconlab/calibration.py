"""Anchor-driven calibration of every fitted coefficient.

The oracles run in a fixed order, each consuming the previous outputs:

1. decay rate delta: least squares over the three worked decay examples;
2. callback fidelity: minimum-norm correction of a prior coefficient vector
   so the six worked C_f anchors are reproduced exactly;
3. scanner base matrix: per-vector DR targets split by scanner family;
4. decay study: t=0 I_c prior centre for the CAS_0 anchor, then kappa from
   the 48-hour residual equation;
5. callback rates: per-profile Poisson rates centring the campaign size;
6. attribution: rho by a grid search on the CTD columns, then gamma by
   bisection on the posterior ceiling and the decoy band half-width on the
   CAS/posterior correlation.

Each anchor carries a tolerance; a residual outside it raises
CalibrationError naming the anchor.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, replace
from functools import partial
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .adversary import (
    LEVELS,
    TABLE_PROFILES,
    AdversaryConfig,
    AttackerLevel,
    IamPrior,
    beacon_stream,
    expected_active_hours,
    expected_campaign_size,
)
from .attribution import (
    AttributionParams,
    decoy_ratio,
    pearson,
    uniform_prior,
)
from .config import DecayPriors, ExperimentSettings, LabConfig
from .errors import CalibrationError, ConfigError
from .scanners import DEFAULT_SCANNER_WEIGHTS, SCANNERS, DEFAULT_SDK_MODIFIERS, build_models, calibrate_base_matrix, scan
from .scoring import (
    BonusParams,
    CasWeights,
    ChurnState,
    FidelityParams,
    RoutingEvidence,
    ScoringConfig,
    SdkClass,
    breakdown,
    callback_fidelity,
    ephemeral_penalty,
    score_event,
)
from .seeding import child_seed
from .taxonomy import VECTORS, CloudProvider, VectorClass, bundled_contexts, generate_fleet

log = logging.getLogger(__name__)

V = VectorClass
P = CloudProvider
L = AttackerLevel

# --- uncalibrated base ------------------------------------------------------

# Prior guess for the fidelity coefficients; the fit moves it the minimum
# distance needed to hit the anchors.
FIDELITY_PRIOR = {
    "vector_base": {v: 0.90 for v in VECTORS},
    "sdk_offset": {SdkClass.CURL: 0.0, SdkClass.SCRIPTED_SDK: -0.05, SdkClass.NATIVE_SDK: 0.02},
    "p_tor": 0.25,
    "p_vpn": 0.15,
    "p_residential": 0.15,
    "p_rotated": 0.15,
}

# Telemetry priors: canary roles see many logged actions, data-plane vectors few.
IAM_PRIORS = {
    V.S3_PRESIGNED_URL: IamPrior(3, 8, 0.35, 0.10),
    V.CONTAINER_IMAGE: IamPrior(2, 8, 0.35, 0.05),
    V.IAM_CANARY_ROLE: IamPrior(6, 12, 0.40, 0.15),
    V.TERRAFORM_MODULE: IamPrior(4, 9, 0.40, 0.10),
    V.K8S_SECRET: IamPrior(4, 9, 0.35, 0.05),
    V.SERVERLESS_TRIGGER: IamPrior(2, 8, 0.45, 0.05),
}

# Campaign mechanics layered on the published attacker table. Sophisticated
# actors operate from cloud infrastructure and touch more of the control
# plane, which offsets their cleaner routing in the aggregate score.
PROFILE_MECHANICS = {
    L.NAIVE: {"p_cloud_exit": 0.15, "p_foreign_platform": 0.10, "action_shift": 0, "p_cross_account": 0.0},
    L.ADVANCED: {"p_cloud_exit": 0.20, "p_foreign_platform": 0.12, "action_shift": 1, "p_cross_account": 0.0},
    L.APT: {"p_cloud_exit": 0.35, "p_foreign_platform": 0.25, "action_shift": 1, "p_cross_account": 0.05},
}

# Per-cell telemetry shifts: canary roles log richer context on AWS/Azure,
# and K8s secrets on AWS lose coverage to the RBAC/runtime-agent interaction.
PROVIDER_IC_OFFSET: dict[CloudProvider, float] = {}
CELL_IC_OFFSET: dict[tuple[VectorClass, CloudProvider], float] = {
    (V.IAM_CANARY_ROLE, P.AWS): 0.10,
    (V.IAM_CANARY_ROLE, P.GCP): -0.12,
    (V.IAM_CANARY_ROLE, P.AZURE): 0.10,
    (V.IAM_CANARY_ROLE, P.OCI): -0.12,
    (V.K8S_SECRET, P.AWS): -0.30,
}

HORIZON_H = 96.0


def uncalibrated_config() -> LabConfig:
    """Base configuration before any anchor fit (prior fidelity, flat matrix)."""
    fidelity = FidelityParams(**FIDELITY_PRIOR)
    scoring = ScoringConfig(
        weights=CasWeights(),
        delta=0.05,
        fidelity=fidelity,
        bonus=BonusParams(),
        provider_ic_offset=dict(PROVIDER_IC_OFFSET),
        cell_ic_offset=dict(CELL_IC_OFFSET),
    )
    profiles = {
        lv: replace(TABLE_PROFILES[lv], callback_rate_h=0.05, **PROFILE_MECHANICS[lv])
        for lv in LEVELS
    }
    adversary = AdversaryConfig(profiles=profiles, iam_priors=dict(IAM_PRIORS), horizon_h=HORIZON_H)
    scanners = tuple(build_models({s: {v: 0.2 for v in VECTORS} for s in SCANNERS}))
    return LabConfig(
        scoring=scoring,
        adversary=adversary,
        scanners=scanners,
        attribution=AttributionParams(),
        experiment=ExperimentSettings(),
        contexts=bundled_contexts(),
    )


# --- anchors ----------------------------------------------------------------


def load_anchors(path: str | os.PathLike | None = None) -> dict:
    """Read an anchors file (the bundled one when ``path`` is None)."""
    if path is None:
        text = resources.files("beaconlab.data").joinpath("anchors.json").read_text(encoding="utf-8")
        source = "<bundled anchors.json>"
    else:
        source = str(path)
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read anchors: {exc.strerror}", source=source) from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno, source=source) from None
    required = {
        "cas_rows", "decay_examples", "fidelity", "detection_resistance",
        "decay_study", "campaign", "ctd", "posterior_ceiling", "correlation",
    }
    missing = required - set(raw)
    if missing:
        raise ConfigError(f"anchors missing section(s) {sorted(missing)}", source=source)
    return raw


class Residuals:
    """Collects (anchor, target, value, tolerance) rows and enforces them."""

    def __init__(self) -> None:
        self.rows: list[dict] = []

    def add(self, anchor: str, target: float, value: float, tolerance: float) -> None:
        self.rows.append({
            "anchor": anchor,
            "target": target,
            "value": value,
            "residual": value - target,
            "tolerance": tolerance,
            "ok": abs(value - target) <= tolerance + 1e-12,
        })

    def bound(self, anchor: str, limit: float, value: float) -> None:
        """One-sided anchor: ``value`` must not exceed ``limit``."""
        self.rows.append({
            "anchor": anchor,
            "target": limit,
            "value": value,
            "residual": value - limit,
            "tolerance": 0.0,
            "ok": value <= limit,
        })

    def check(self) -> None:
        bad = [r for r in self.rows if not r["ok"]]
        if bad:
            worst = bad[0]
            raise CalibrationError(
                f"anchor {worst['anchor']!r} residual {worst['residual']:+.6g} exceeds tolerance {worst['tolerance']:g}",
                anchor=worst["anchor"],
            )

    def table(self) -> str:
        lines = [f"{'anchor':<44} {'target':>10} {'value':>10} {'residual':>10} {'tol':>8}  ok"]
        for r in self.rows:
            lines.append(
                f"{r['anchor']:<44} {r['target']:>10.4f} {r['value']:>10.4f} {r['residual']:>+10.4f} {r['tolerance']:>8.4g}  {'yes' if r['ok'] else 'NO'}"
            )
        return "\n".join(lines)


# --- individual oracles -------------------------------------------------------


def fit_delta(examples: list[Mapping], precision: int | None = 3) -> tuple[float, float]:
    """Least-squares decay rate over (t, r, s, E_p) examples.

    Returns (raw fit, value rounded to ``precision`` decimals).
    """
    hours = np.array([e["t"] + 2 * e["r"] + 3 * e["s"] for e in examples], dtype=float)
    target = np.array([e["e_p"] for e in examples], dtype=float)
    lo, hi = 1e-6, 1.0
    # sum of squared residuals is unimodal in delta over this range; golden-section search
    phi = (math.sqrt(5) - 1) / 2
    f = lambda d: float(np.sum((1 - np.exp(-d * hours) - target) ** 2))
    a, b = lo, hi
    c, d = b - phi * (b - a), a + phi * (b - a)
    for _ in range(200):
        if f(c) < f(d):
            b = d
        else:
            a = c
        c, d = b - phi * (b - a), a + phi * (b - a)
    raw = (a + b) / 2
    return raw, (round(raw, precision) if precision is not None else raw)


_ROUTING_FLAGS = ("tor", "vpn", "residential", "rotated")
_FREE_SDKS = (SdkClass.SCRIPTED_SDK, SdkClass.NATIVE_SDK)  # curl is the reference tooling (offset 0)


def _fidelity_vector(prior: Mapping) -> np.ndarray:
    return np.array(
        [prior["vector_base"][v] for v in VECTORS]
        + [prior["sdk_offset"][s] for s in _FREE_SDKS]
        + [prior["p_tor"], prior["p_vpn"], prior["p_residential"], prior["p_rotated"]],
        dtype=float,
    )


def fit_fidelity(anchors: list[Mapping], prior: Mapping = FIDELITY_PRIOR) -> FidelityParams:
    """Minimum-norm correction of ``prior`` that reproduces every C_f anchor.

    Each anchor is linear in the coefficients (before clamping):
    base[v] + offset[sdk] - sum(penalty[f] for f in routing flags).
    """
    n_v, n_s = len(VECTORS), len(_FREE_SDKS)
    rows, target = [], []
    for a in anchors:
        row = np.zeros(n_v + n_s + len(_ROUTING_FLAGS))
        row[VECTORS.index(VectorClass(a["vector"]))] = 1.0
        sdk = SdkClass(a["sdk"])
        if sdk in _FREE_SDKS:
            row[n_v + _FREE_SDKS.index(sdk)] = 1.0
        for flag in a["routing"]:
            if flag not in _ROUTING_FLAGS:
                raise ConfigError(f"fidelity anchor {a['name']!r}: unknown routing flag {flag!r}")
            row[n_v + n_s + _ROUTING_FLAGS.index(flag)] = -1.0
        rows.append(row)
        target.append(a["c_f"])
    A = np.array(rows)
    x0 = _fidelity_vector(prior)
    correction, *_ = np.linalg.lstsq(A, np.array(target) - A @ x0, rcond=None)
    x = x0 + correction
    x = np.round(x, 6)
    base = {v: float(x[i]) for i, v in enumerate(VECTORS)}
    offsets = {SdkClass.CURL: 0.0, **{s: float(x[n_v + i]) for i, s in enumerate(_FREE_SDKS)}}
    pen = dict(zip(_ROUTING_FLAGS, (float(p) for p in x[n_v + n_s:])))
    if any(p < 0 for p in pen.values()):
        raise CalibrationError("fidelity fit produced a negative routing penalty", anchor="fidelity")
    return FidelityParams(
        vector_base=base,
        sdk_offset=offsets,
        p_tor=pen["tor"],
        p_vpn=pen["vpn"],
        p_residential=pen["residential"],
        p_rotated=pen["rotated"],
    )


def fidelity_anchor_value(anchor: Mapping, params: FidelityParams) -> float:
    routing = RoutingEvidence(**{flag: True for flag in anchor["routing"]})
    return callback_fidelity(routing, SdkClass(anchor["sdk"]), VectorClass(anchor["vector"]), params)


def expected_end_penalty(adversary: AdversaryConfig, vector: VectorClass, t: float, delta: float) -> float:
    """E[E_p(t, r, s)] with r, s Poisson; closed form via the Poisson PGF."""
    restart, scale = adversary.churn_rates(vector)
    pgf = lambda lam, k: math.exp(lam * t * (math.exp(-delta * k) - 1.0))
    return 1.0 - math.exp(-delta * t) * pgf(restart, 2) * pgf(scale, 3)


def fit_decay_priors(
    cas_start: float, weights: CasWeights, base: DecayPriors = DecayPriors()
) -> DecayPriors:
    """Recentre the t=0 I_c band so the expected CAS_0 equals the anchor.

    At t=0, E_p = 0 and CAS = w1*C_f + (w2 + w3)*I_c + w4*M_b, linear in the
    prior means; C_f and M_b bands stay fixed.
    """
    c_f, i_c, m_b = base.means()
    needed = (cas_start - weights.w1 * c_f - weights.w4 * m_b) / (weights.w2 + weights.w3)
    half = (base.i_c[1] - base.i_c[0]) / 2
    if not half <= needed <= 1.0 - half:
        raise CalibrationError(f"CAS_0 anchor needs mean I_c {needed:.3f}, outside the feasible band", anchor="decay_study.cas_start")
    return replace(base, i_c=(round(needed - half, 4), round(needed + half, 4)))


def solve_kappa(cas_end: float, priors: DecayPriors, weights: CasWeights, end_penalty: float) -> float:
    """Attenuation kappa from the end-band residual equation.

    Late in the window E_p is close to 1, so the terms carrying (1 - E_p)
    are dropped and the residual is w2*I_c*(1 - kappa*E_p) + w4*M_b, which
    is solved for kappa at the prior means.
    """
    _c_f, i_c, m_b = priors.means()
    kappa = (1.0 - (cas_end - weights.w4 * m_b) / (weights.w2 * i_c)) / end_penalty
    if not 0.0 <= kappa <= 1.0:
        raise CalibrationError(f"kappa solve gave {kappa:.3f}, outside [0, 1]", anchor="decay_study.cas_end")
    return kappa


def shared_callback_rate(adversary: AdversaryConfig, total: float, n_beacons: int) -> float:
    """One per-hour rate for every profile giving ``total`` expected callbacks.

    Expected callbacks per pair are rate * E[max(0, horizon - dwell)], so
    short-dwell attackers contribute more callbacks at the same cadence.
    """
    active = sum(expected_active_hours(p.dwell_mean_h, adversary.horizon_h) for p in adversary.profiles.values())
    return total / (n_beacons * active)


# --- attribution fits (cached streams) -----------------------------------------


def _ctd_cas_streams(config: LabConfig, replicas: int, jobs: int) -> dict[tuple[str, str], list[list[float]]]:
    from .experiments import _map

    return _collect(_map(partial(_ctd_worker, config=config), range(replicas), jobs))


def _collect(blocks):
    out: dict = {}
    for block in blocks:
        for key, series in block:
            out.setdefault(key, []).append(series)
    return out


def _ctd_worker(replica: int, config: LabConfig) -> list:
    seed = child_seed(config.experiment.master_seed, "grid", replica)
    stream_seed = child_seed(seed, "ctd")
    scorer = partial(score_event, config=config.scoring)
    fleet = generate_fleet(config.experiment.master_seed, config.experiment.context, config.contexts)
    out = []
    for beacon in fleet:
        for level in LEVELS:
            events = beacon_stream(
                beacon, config.adversary.profiles[level], config.adversary, stream_seed,
                max_callbacks=config.attribution.ctd_budget,
            )
            out.append(((beacon.vector.value, level.value), [scorer(e).cas for e in events]))
    return out


def _trace_worker(replica: int, config: LabConfig) -> list:
    seed = child_seed(config.experiment.master_seed, "scatter", replica)
    scorer = partial(score_event, config=config.scoring)
    fleet = generate_fleet(config.experiment.master_seed, config.experiment.context, config.contexts)
    at = config.attribution
    decoys = uniform_prior(at.n_candidates).candidates[1:]
    out = []
    for beacon in fleet:
        for level in LEVELS:
            events = list(beacon_stream(beacon, config.adversary.profiles[level], config.adversary, seed, max_callbacks=at.trace_length))
            cas_values = [scorer(e).cas for e in events]
            u = [[decoy_ratio(e.evidence_key(), c, 0.0, 1.0) for c in decoys] for e in events]
            out.append((cas_values, u))
    return out


def ctd_for_rho(streams: Mapping[tuple[str, str], list[list[float]]], rho: float, threshold: float) -> dict[tuple[str, str], float]:
    """Mean CTD per (vector, level) cell; unreached traces are excluded."""
    means = {}
    for key, series_list in streams.items():
        width = max(len(s) for s in series_list)
        cas = np.zeros((len(series_list), width))
        for i, series in enumerate(series_list):
            cas[i, : len(series)] = series
        miss = np.cumprod(1.0 - np.clip(rho * cas, 0.0, 1.0), axis=1)
        reached = (1.0 - miss) >= threshold
        hit = reached.any(axis=1)
        first = reached.argmax(axis=1) + 1
        means[key] = float(first[hit].mean()) if hit.any() else math.inf
    return means


class TraceCache:
    """Final posteriors as a closed-form function of (gamma, decoy half-width).

    The true actor's odds are prod(1 + gamma*cas_i); each decoy's are
    prod(1 - h + 2h*u_i) with u the evidence-hash uniform. Normalising once at
    the end equals the sequential update.
    """

    def __init__(self, traces: list[tuple[list[float], list[list[float]]]]):
        self.mean_cas = np.array([float(np.mean(c)) for c, _ in traces])
        self.cas = [np.asarray(c, dtype=float) for c, _ in traces]
        self.u = [np.asarray(u, dtype=float) for _, u in traces]
        lengths = {len(c) for c in self.cas}
        if len(lengths) == 1:
            self._cas = np.stack(self.cas)
            self._u = np.stack(self.u)
        else:  # pragma: no cover - traces are fixed length in practice
            self._cas = self._u = None

    def posteriors(self, gamma: float, half_width: float) -> np.ndarray:
        if self._cas is not None:
            true_odds = np.prod(1.0 + gamma * self._cas, axis=1)
            decoy_odds = np.prod(1.0 - half_width + 2.0 * half_width * self._u, axis=1).sum(axis=1)
            return true_odds / (true_odds + decoy_odds)
        out = []
        for c, u in zip(self.cas, self.u):
            t = np.prod(1.0 + gamma * c)
            d = np.prod(1.0 - half_width + 2.0 * half_width * u, axis=0).sum()
            out.append(t / (t + d))
        return np.array(out)


def _bisect(fn, lo: float, hi: float, target: float, increasing: bool = True, iters: int = 60) -> float:
    f_lo, f_hi = fn(lo), fn(hi)
    if increasing and not f_lo <= target <= f_hi or not increasing and not f_hi <= target <= f_lo:
        raise CalibrationError(f"target {target} not bracketed on [{lo}, {hi}] (values {f_lo:.4f}, {f_hi:.4f})")
    for _ in range(iters):
        mid = (lo + hi) / 2
        if (fn(mid) < target) == increasing:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def fit_posterior(
    ceiling_cache: TraceCache, corr_cache: TraceCache, ceiling: float, correlation: float, rounds: int = 6
) -> tuple[float, float]:
    """Alternate gamma (posterior ceiling) and decoy half-width (correlation)."""
    gamma, half = 0.9, 0.1
    for _ in range(rounds):
        gamma = _bisect(lambda g: float(ceiling_cache.posteriors(g, half).max()), 0.01, 10.0, ceiling)
        r_of = lambda h: pearson(list(corr_cache.mean_cas), list(corr_cache.posteriors(gamma, h)))
        half = _bisect(r_of, 0.0, 0.95, correlation, increasing=False)
    gamma = _bisect(lambda g: float(ceiling_cache.posteriors(g, half).max()), 0.01, 10.0, ceiling)
    return gamma, half


# --- pipeline ------------------------------------------------------------------


@dataclass
class CalibrationResult:
    config: LabConfig
    residuals: Residuals
    fitted: dict


def _expected_cas_start(priors: DecayPriors, weights: CasWeights) -> float:
    c_f, i_c, m_b = priors.means()
    return weights.w1 * c_f + (weights.w2 + weights.w3) * i_c + weights.w4 * m_b


def calibrate_all(anchors: Mapping | None = None, seed: int = 42, jobs: int = 1) -> CalibrationResult:
    """Run every oracle in order and return the calibrated configuration.

    Raises CalibrationError (with the residual table attached) when any
    anchor misses its tolerance.
    """
    from .experiments import _map, run_decay

    anchors = load_anchors() if anchors is None else anchors
    res = Residuals()
    fitted: dict[str, Any] = {}
    base = uncalibrated_config()
    base = base.with_experiment(master_seed=seed)
    weights = base.scoring.weights

    try:
        # 1. decay rate, checked on the worked examples and the six score rows
        raw_delta, delta = fit_delta(anchors["decay_examples"], anchors.get("delta_precision", 3))
        fitted["delta_least_squares"] = raw_delta
        for ex in anchors["decay_examples"]:
            e_p = ephemeral_penalty(ChurnState(ex["t"], ex["r"], ex["s"], delta))
            res.add(f"E_p {ex['name']}", ex["e_p"], e_p, ex["tolerance"])
        for row in anchors["cas_rows"]:
            value = breakdown(row["c_f"], row["e_p"], row["i_c"], row["m_b"], weights).cas
            res.add(f"CAS {row['name']}", row["cas"], value, row["tolerance"])

        # 2. callback fidelity
        fidelity = fit_fidelity(anchors["fidelity"])
        for a in anchors["fidelity"]:
            res.add(f"C_f {a['name']}", a["c_f"], fidelity_anchor_value(a, fidelity), a["tolerance"])

        # 3. scanner base matrix
        dr = anchors["detection_resistance"]
        targets = {VectorClass(k): float(v) for k, v in dr["targets"].items()}
        scanners = tuple(build_models(calibrate_base_matrix(targets), DEFAULT_SCANNER_WEIGHTS, DEFAULT_SDK_MODIFIERS))
        for v in VECTORS:
            if v in targets:
                res.add(f"DR {v.value}", targets[v], scan(v, None, scanners).resistance, dr["tolerance"])

        # 4. decay study priors and kappa
        ds = anchors["decay_study"]
        end_t = float(ds["end_t"])
        adversary = replace(base.adversary, delta=delta)
        end_penalty = float(np.mean([expected_end_penalty(adversary, v, end_t, delta) for v in VECTORS]))
        priors = fit_decay_priors(ds["cas_start"], weights, base.experiment.decay_priors)
        kappa = round(solve_kappa(ds["cas_end"], priors, weights, end_penalty), 3)
        fitted["decay_end_penalty"] = end_penalty
        res.add("decay CAS_0 (expected)", ds["cas_start"], _expected_cas_start(priors, weights), ds["tolerance"])

        # 5. callback rates
        fleet = generate_fleet(seed, base.experiment.context, base.contexts)
        rate = shared_callback_rate(adversary, anchors["campaign"]["callbacks"], len(fleet))
        adversary = replace(
            adversary,
            profiles={lv: replace(p, callback_rate_h=round(rate, 6)) for lv, p in adversary.profiles.items()},
        )
        fitted["callback_rate_h"] = rate
        res.add("campaign size (expected)", anchors["campaign"]["callbacks"], expected_campaign_size(adversary, len(fleet)), anchors["campaign"]["tolerance"])

        scoring = replace(base.scoring, delta=delta, fidelity=fidelity)
        experiment = replace(base.experiment, kappa=kappa, decay_priors=priors)
        config = replace(base, scoring=scoring, adversary=adversary, scanners=scanners, experiment=experiment)

        decay = run_decay(config, jobs=jobs)
        end_rows = [r["cas_mean"] for r in decay.rows if r["t_h"] == end_t]
        res.add(f"decay CAS_{end_t:g} (simulated mean)", ds["cas_end"], float(np.mean(end_rows)), ds["tolerance"])

        # 6. attribution: rho on the CTD columns
        ctd = anchors["ctd"]
        at = config.attribution
        streams = _ctd_cas_streams(config, int(ctd.get("replicas", config.experiment.replicas)), jobs)
        cells = [(v, lv) for lv in ("Naive", "Advanced", "APT") if lv in ctd for v in ctd[lv]]

        def rmse(rho: float) -> float:
            means = ctd_for_rho(streams, rho, at.threshold)
            return float(np.sqrt(np.mean([(means[(v, lv)] - ctd[lv][v]) ** 2 for v, lv in cells])))

        grid = [round(0.5 + 0.01 * i, 2) for i in range(251)]
        rho = min(grid, key=lambda r: (rmse(r), r))
        means = ctd_for_rho(streams, rho, at.threshold)
        res.add("CTD rmse over Table 3 cells", 0.0, rmse(rho), ctd["tolerance"])
        for v, lv in cells:
            fitted.setdefault("ctd_cells", {})[f"{v}|{lv}"] = {"target": ctd[lv][v], "value": means[(v, lv)]}
        for key, tol in ctd.get("cell_tolerance", {}).items():
            v, lv = key.split("|")
            res.add(f"CTD {v} x {lv}", ctd[lv][v], means[(v, lv)], tol)
        if "cell_ceiling" in ctd:
            res.bound("max cell mean CTD", ctd["cell_ceiling"], max(means.values()))

        # gamma and decoy band on the posterior ceiling and correlation
        pc, cr = anchors["posterior_ceiling"], anchors["correlation"]
        n_traces = max(int(pc["seeds"]), int(cr["seeds"]))
        blocks = _map(partial(_trace_worker, config=config), range(n_traces), jobs)
        ceiling_cache = TraceCache([t for b in blocks[: int(pc["seeds"])] for t in b])
        corr_cache = TraceCache([t for b in blocks[: int(cr["seeds"])] for t in b])
        gamma, half = fit_posterior(ceiling_cache, corr_cache, pc["value"], cr["value"])
        gamma, half = round(gamma, 3), round(half, 3)
        res.add(f"max posterior over {pc['seeds']} seeds", pc["value"], float(ceiling_cache.posteriors(gamma, half).max()), pc["tolerance"])
        r_value = pearson(list(corr_cache.mean_cas), list(corr_cache.posteriors(gamma, half)))
        res.add(f"CAS/posterior r over {cr['seeds']} seeds", cr["value"], r_value, cr["tolerance"])

        config = replace(
            config,
            attribution=replace(at, rho=rho, gamma=gamma, decoy_low=round(1.0 - half, 3), decoy_high=round(1.0 + half, 3)),
        )
    except CalibrationError as exc:
        exc.residuals = res
        raise

    fitted.update({"delta": delta, "kappa": kappa, "rho": rho, "gamma": gamma, "decoy_half_width": half})
    provenance = {
        "generator": "beaconlab calibrate",
        "calibration_seed": seed,
        "residuals": res.rows,
        "fitted": fitted,
    }
    config = replace(config, provenance=provenance)
    try:
        res.check()
    except CalibrationError as exc:
        exc.residuals = res
        raise
    return CalibrationResult(config, res, fitted)
