"""The four studies (grid, decay, provider, scatter) and tier recommendation.

Every study is a pure function of the configuration: replicas draw child
seeds from ``(master_seed, study, replica)``, workers may run in any order,
and aggregation is a serial reduce in fixed cell order.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from . import __version__
from .adversary import LEVELS, simulate_callbacks
from .attribution import NOT_REACHED, build_trace, measure_ctd, pearson
from .config import LabConfig
from .errors import BeaconLabError, InsufficientDataError, UndefinedStatisticError
from .scanners import scan
from .scoring import ChurnState, breakdown, ephemeral_penalty, score_event
from .seeding import child_rng, child_seed
from .stats import TestResult, kruskal_wallis, mean, median, one_way_anova, sd, two_sample_t
from .taxonomy import PROVIDERS, VECTORS, BeaconInstance, CloudProvider, VectorClass, generate_fleet, property_profile

INSUFFICIENT = "insufficient data"


@dataclass
class ExperimentReport:
    study: str
    columns: list[str]
    rows: list[dict]
    tests: dict[str, Any] = field(default_factory=dict)
    summary: dict[str, Any] = field(default_factory=dict)
    manifest: dict[str, Any] = field(default_factory=dict)

    def row(self, **match) -> dict:
        for r in self.rows:
            if all(r.get(k) == v for k, v in match.items()):
                return r
        raise KeyError(match)


def _manifest(config: LabConfig, study: str) -> dict:
    return {
        "study": study,
        "master_seed": config.experiment.master_seed,
        "replicas": config.experiment.replicas,
        "config_digest": config.digest(),
        "version": __version__,
    }


def _agg(values: Sequence[float]) -> dict:
    n = len(values)
    return {
        "n": n,
        "mean": mean(values) if n else None,
        "sd": sd(values) if n >= 2 else None,
    }


def _map(fn: Callable, items: Iterable, jobs: int) -> list:
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def _test_or_reason(fn: Callable[[], TestResult]) -> dict:
    try:
        return fn().to_dict()
    except (InsufficientDataError, UndefinedStatisticError) as exc:
        return {"error": str(exc)}


def _scorer(config: LabConfig):
    return partial(score_event, config=config.scoring)


def _fleet(config: LabConfig) -> list[BeaconInstance]:
    return generate_fleet(config.experiment.master_seed, config.experiment.context, config.contexts)


# --- campaign replica (shared by grid and provider studies) ---------------


def _campaign_replica(replica: int, config: LabConfig, study: str, with_traces: bool) -> dict:
    seed = child_seed(config.experiment.master_seed, study, replica)
    fleet = _fleet(config)
    scorer = _scorer(config)
    callbacks = []
    for level in LEVELS:
        profile = config.adversary.profiles[level]
        for event in simulate_callbacks(fleet, profile, config.adversary.horizon_h, seed, config.adversary):
            b = scorer(event)
            det = scan(event.vector, event.sdk, config.scanners)
            callbacks.append((event.beacon_id, level.value, b.cas, det.resistance))
    pairs = []
    if with_traces:
        at = config.attribution
        for beacon in fleet:
            for level in LEVELS:
                profile = config.adversary.profiles[level]
                ctd = measure_ctd(beacon, profile, child_seed(seed, "ctd"), config.adversary, scorer, at)
                trace = build_trace(beacon, profile, child_seed(seed, "trace"), config.adversary, scorer, at, at.trace_length)
                pairs.append((beacon.id, level.value, ctd, trace.mean_cas, trace.final_posterior))
    return {"callbacks": callbacks, "pairs": pairs}


def _run_campaigns(config: LabConfig, study: str, with_traces: bool, jobs: int) -> list[dict]:
    fn = partial(_campaign_replica, config=config, study=study, with_traces=with_traces)
    return _map(fn, range(config.experiment.replicas), jobs)


def _pair_means(results: list[dict], fleet: Sequence[BeaconInstance]) -> dict[tuple[str, str], list[float]]:
    out: dict[tuple[str, str], list[float]] = {(b.id, lv.value): [] for b in fleet for lv in LEVELS}
    for res in results:
        for beacon_id, level, cas, _dr in res["callbacks"]:
            out[(beacon_id, level)].append(cas)
    return out


# --- grid -----------------------------------------------------------------


GRID_COLUMNS = [
    "vector", "level", "n_callbacks", "cas_mean", "cas_sd", "dr_mean", "dr_sd",
    "ctd_n", "ctd_mean", "ctd_median", "ctd_not_reached", "posterior_n", "posterior_mean", "status",
]


def run_grid(config: LabConfig, jobs: int = 1) -> ExperimentReport:
    fleet = _fleet(config)
    by_id = {b.id: b for b in fleet}
    results = _run_campaigns(config, "grid", True, jobs)
    min_n = config.experiment.min_cell_n

    cas_cells: dict[tuple, list[float]] = {}
    dr_cells: dict[tuple, list[float]] = {}
    ctd_cells: dict[tuple, list] = {}
    post_cells: dict[tuple, list[float]] = {}
    pair_cas: dict[tuple, list[float]] = {}
    pair_ctd: dict[tuple, list[float]] = {}
    pair_post: dict[tuple, list[float]] = {}
    for res in results:
        for beacon_id, level, cas, dr in res["callbacks"]:
            key = (by_id[beacon_id].vector, level)
            cas_cells.setdefault(key, []).append(cas)
            dr_cells.setdefault(key, []).append(dr)
            pair_cas.setdefault((beacon_id, level), []).append(cas)
        for beacon_id, level, ctd, _mc, post in res["pairs"]:
            key = (by_id[beacon_id].vector, level)
            ctd_cells.setdefault(key, []).append(ctd)
            post_cells.setdefault(key, []).append(post)
            pair_post.setdefault((beacon_id, level), []).append(post)
            if ctd != NOT_REACHED:
                pair_ctd.setdefault((beacon_id, level), []).append(float(ctd))

    rows = []
    for vector in VECTORS:
        for level in LEVELS:
            key = (vector, level.value)
            cas_v = cas_cells.get(key, [])
            dr_v = dr_cells.get(key, [])
            ctds = ctd_cells.get(key, [])
            reached = [float(c) for c in ctds if c != NOT_REACHED]
            posts = post_cells.get(key, [])
            cas_a, dr_a = _agg(cas_v), _agg(dr_v)
            rows.append({
                "vector": vector.value,
                "level": level.value,
                "n_callbacks": cas_a["n"],
                "cas_mean": cas_a["mean"],
                "cas_sd": cas_a["sd"],
                "dr_mean": dr_a["mean"],
                "dr_sd": dr_a["sd"],
                "ctd_n": len(reached),
                "ctd_mean": mean(reached) if reached else None,
                "ctd_median": median(reached) if reached else None,
                "ctd_not_reached": len(ctds) - len(reached),
                "posterior_n": len(posts),
                "posterior_mean": mean(posts) if posts else None,
                "status": "ok" if cas_a["n"] >= min_n else INSUFFICIENT,
            })

    per_vector = {}
    all_cas: list[float] = []
    all_dr: list[float] = []
    for vector in VECTORS:
        cas_v = [x for lv in LEVELS for x in cas_cells.get((vector, lv.value), [])]
        dr_v = [x for lv in LEVELS for x in dr_cells.get((vector, lv.value), [])]
        all_cas += cas_v
        all_dr += dr_v
        ctd_by_level = {}
        for lv in LEVELS:
            reached = [float(c) for c in ctd_cells.get((vector, lv.value), []) if c != NOT_REACHED]
            ctd_by_level[lv.value] = {
                "mean": mean(reached) if reached else None,
                "median": median(reached) if reached else None,
                "n": len(reached),
            }
        per_vector[vector.value] = {
            "cas": _agg(cas_v),
            "dr": _agg(dr_v),
            "ctd": ctd_by_level,
            "inherent_ephemeral_risk": property_profile(vector).inherent_ephemeral_risk,
        }

    def by_level(pair_values: dict[tuple, list[float]]) -> list[list[float]]:
        groups = []
        for lv in LEVELS:
            groups.append([
                mean(v) for (bid, level), v in sorted(pair_values.items())
                if level == lv.value and len(v) >= min_n
            ])
        return groups

    tests = {
        "anova_cas_by_level": _test_or_reason(lambda: one_way_anova(by_level(pair_cas))),
        "anova_posterior_by_level": _test_or_reason(lambda: one_way_anova(by_level(pair_post))),
        "anova_ctd_by_level": _test_or_reason(lambda: one_way_anova(by_level(pair_ctd))),
        "unit": "beacon-attacker pair mean over replicas; pairs with n < min_cell_n excluded",
    }
    summary = {
        "per_vector": per_vector,
        "tiers": _tiers(per_vector),
        "overall": {"cas": _agg(all_cas), "dr": _agg(all_dr)},
        "total_callbacks": len(all_cas),
        "callbacks_per_replica": [len(r["callbacks"]) for r in results],
    }
    return ExperimentReport("grid", GRID_COLUMNS, rows, tests, summary, _manifest(config, "grid"))


# --- decay ----------------------------------------------------------------


DECAY_COLUMNS = ["vector", "t_h", "n", "cas_mean", "cas_sd", "e_p_mean", "restarts_mean", "scale_events_mean"]


def _decay_cell(args: tuple[VectorClass, float], config: LabConfig) -> dict:
    vector, t = args
    ex = config.experiment
    # Components come from the same t=0 priors for every vector, so they are
    # drawn once per timepoint (common random numbers); only churn is per vector.
    comp_rng = child_rng(ex.master_seed, "decay", "components", repr(float(t)))
    churn_rng = child_rng(ex.master_seed, "decay", "churn", vector.value, repr(float(t)))
    restart_rate, scale_rate = config.adversary.churn_rates(vector)
    pri = ex.decay_priors
    kappa = ex.kappa if ex.ic_attenuation else 0.0
    n = ex.replicas
    c_f = comp_rng.uniform(*pri.c_f, size=n)
    i_c = comp_rng.uniform(*pri.i_c, size=n)
    m_b = comp_rng.uniform(*pri.m_b, size=n)
    r = churn_rng.poisson(restart_rate * t, size=n)
    s = churn_rng.poisson(scale_rate * t, size=n)
    cas_values = []
    e_values = []
    for j in range(n):
        e_p = ephemeral_penalty(ChurnState(float(t), int(r[j]), int(s[j]), config.scoring.delta))
        i_eff = i_c[j] * (1.0 - kappa * e_p)
        cas_values.append(breakdown(c_f[j], e_p, i_eff, m_b[j], config.scoring.weights).cas)
        e_values.append(e_p)
    return {
        "vector": vector.value,
        "t_h": float(t),
        "cas": cas_values,
        "e_p_mean": mean(e_values),
        "restarts_mean": float(np.mean(r)),
        "scale_events_mean": float(np.mean(s)),
    }


def run_decay(config: LabConfig, jobs: int = 1) -> ExperimentReport:
    ex = config.experiment
    cells = [(v, t) for v in VECTORS for t in ex.decay_timepoints]
    results = _map(partial(_decay_cell, config=config), cells, jobs)
    rows = []
    series: dict[str, dict[float, list[float]]] = {}
    for res in results:
        a = _agg(res["cas"])
        rows.append({
            "vector": res["vector"],
            "t_h": res["t_h"],
            "n": a["n"],
            "cas_mean": a["mean"],
            "cas_sd": a["sd"],
            "e_p_mean": res["e_p_mean"],
            "restarts_mean": res["restarts_mean"],
            "scale_events_mean": res["scale_events_mean"],
        })
        series.setdefault(res["vector"], {})[res["t_h"]] = res["cas"]
    t0, t_end = ex.decay_timepoints[0], ex.decay_timepoints[-1]
    tests = {}
    summary: dict[str, Any] = {"contrast": f"t={t0:g}h vs t={t_end:g}h", "t_test": "welch", "per_vector": {}}
    for vector in VECTORS:
        a, b = series[vector.value][t0], series[vector.value][t_end]
        tests[f"welch_{vector.value}"] = _test_or_reason(lambda a=a, b=b: two_sample_t(a, b))
        summary["per_vector"][vector.value] = {
            "cas_start": mean(a),
            "cas_end": mean(b),
            "delta": mean(b) - mean(a),
        }
    summary["kappa"] = ex.kappa if ex.ic_attenuation else 0.0
    return ExperimentReport("decay", DECAY_COLUMNS, rows, tests, summary, _manifest(config, "decay"))


# --- provider analysis ----------------------------------------------------


PROVIDER_COLUMNS = ["vector", "provider", "n_callbacks", "cas_mean", "cas_sd", "status"]


def run_provider_analysis(config: LabConfig, jobs: int = 1) -> ExperimentReport:
    fleet = _fleet(config)
    by_id = {b.id: b for b in fleet}
    results = _run_campaigns(config, "providers", False, jobs)
    min_n = config.experiment.min_cell_n
    cells: dict[tuple, list[float]] = {}
    per_provider: dict[CloudProvider, list[float]] = {}
    for res in results:
        for beacon_id, _level, cas, _dr in res["callbacks"]:
            b = by_id[beacon_id]
            cells.setdefault((b.vector, b.provider), []).append(cas)
            per_provider.setdefault(b.provider, []).append(cas)
    rows = []
    for vector in VECTORS:
        for provider in PROVIDERS:
            if not any(b.vector is vector and b.provider is provider for b in fleet):
                continue
            a = _agg(cells.get((vector, provider), []))
            rows.append({
                "vector": vector.value,
                "provider": provider.value,
                "n_callbacks": a["n"],
                "cas_mean": a["mean"],
                "cas_sd": a["sd"],
                "status": "ok" if a["n"] >= min_n else INSUFFICIENT,
            })
    pair_values = _pair_means(results, fleet)
    present = [p for p in PROVIDERS if any(b.provider is p for b in fleet)]
    groups = [
        [mean(v) for (bid, _lv), v in sorted(pair_values.items()) if by_id[bid].provider is p and len(v) >= min_n]
        for p in present
    ]
    tests = {
        "kruskal_wallis_cas_by_provider": _test_or_reason(lambda: kruskal_wallis(groups)),
        "providers": [p.value for p in present],
        "unit": "beacon-attacker pair mean over replicas; pairs with n < min_cell_n excluded",
    }
    summary = {
        "per_provider": {p.value: _agg(per_provider.get(p, [])) for p in present},
    }
    return ExperimentReport("providers", PROVIDER_COLUMNS, rows, tests, summary, _manifest(config, "providers"))


# --- scatter --------------------------------------------------------------


SCATTER_COLUMNS = ["replica", "beacon_id", "vector", "provider", "level", "mean_cas", "final_posterior", "ideal_zone"]
IDEAL_CAS = 0.70


def _scatter_replica(replica: int, config: LabConfig) -> list[tuple]:
    seed = child_seed(config.experiment.master_seed, "scatter", replica)
    fleet = _fleet(config)
    scorer = _scorer(config)
    at = config.attribution
    out = []
    for beacon in fleet:
        for level in LEVELS:
            trace = build_trace(beacon, config.adversary.profiles[level], seed, config.adversary, scorer, at, at.trace_length)
            out.append((replica, beacon.id, beacon.vector.value, beacon.provider.value, level.value, trace.mean_cas, trace.final_posterior))
    return out


def run_scatter_study(config: LabConfig, jobs: int = 1) -> ExperimentReport:
    results = _map(partial(_scatter_replica, config=config), range(config.experiment.replicas), jobs)
    threshold = config.experiment.threshold
    rows = []
    for block in results:
        for replica, bid, vector, provider, level, mc, post in block:
            rows.append({
                "replica": replica,
                "beacon_id": bid,
                "vector": vector,
                "provider": provider,
                "level": level,
                "mean_cas": mc,
                "final_posterior": post,
                "ideal_zone": mc >= IDEAL_CAS and post >= threshold,
            })
    xs = [r["mean_cas"] for r in rows]
    ys = [r["final_posterior"] for r in rows]
    try:
        r = pearson(xs, ys)
    except BeaconLabError as exc:
        r = None
        corr_error = str(exc)
    else:
        corr_error = None
    best = max(rows, key=lambda row: (row["final_posterior"], -row["replica"]))
    by_pair: dict[tuple, list[float]] = {}
    for row in rows:
        by_pair.setdefault((row["vector"], row["level"]), []).append(row["final_posterior"])
    summary = {
        "pearson_r": r,
        **({"pearson_error": corr_error} if corr_error else {}),
        "ideal_zone_count": sum(row["ideal_zone"] for row in rows),
        "ideal_zone": {"cas_min": IDEAL_CAS, "posterior_min": threshold},
        "max_posterior": best["final_posterior"],
        "max_posterior_at": {k: best[k] for k in ("replica", "beacon_id", "vector", "level")},
        "mean_posterior_by_cell": {f"{v}|{lv}": mean(p) for (v, lv), p in sorted(by_pair.items())},
        "n_traces": len(rows),
        "trace_length": config.attribution.trace_length,
    }
    return ExperimentReport("scatter", SCATTER_COLUMNS, rows, {}, summary, _manifest(config, "scatter"))


# --- deployment tiers -------------------------------------------------------


def recommend_tiers(per_vector: Mapping[str, Mapping[str, float]]) -> dict[str, int]:
    """Tier per vector from mean CAS, DR and inherent ephemeral risk.

    ``per_vector`` maps a vector name to ``{"cas", "dr", "e_p"}``. Tier 1 is
    the top two (CAS rank, then DR rank) among persistent vectors
    (E_p <= 0.10); tier 3 holds volatile vectors (E_p >= 0.50).
    """
    missing = [v.value for v in VECTORS if v.value not in per_vector]
    if missing:
        raise InsufficientDataError(f"report lacks rows for {missing}")
    order = {v.value: i for i, v in enumerate(VECTORS)}
    names = [v.value for v in VECTORS]

    def rank(metric: str) -> dict[str, int]:
        ranked = sorted(names, key=lambda n: (-per_vector[n][metric], order[n]))
        return {n: i for i, n in enumerate(ranked)}

    cas_rank, dr_rank = rank("cas"), rank("dr")
    persistent = [n for n in names if per_vector[n]["e_p"] <= 0.10 + 1e-12]
    tier1 = sorted(persistent, key=lambda n: (cas_rank[n], dr_rank[n], order[n]))[:2]
    tiers = {}
    for n in names:
        if n in tier1:
            tiers[n] = 1
        elif per_vector[n]["e_p"] >= 0.50 - 1e-12:
            tiers[n] = 3
        else:
            tiers[n] = 2
    return tiers


def _tiers(per_vector: Mapping[str, Mapping]) -> dict[str, int] | None:
    if any(body["cas"]["mean"] is None or body["dr"]["mean"] is None for body in per_vector.values()):
        return None
    return recommend_tiers({
        name: {"cas": body["cas"]["mean"], "dr": body["dr"]["mean"], "e_p": body["inherent_ephemeral_risk"]}
        for name, body in per_vector.items()
    })


def tiers_from_grid(report: ExperimentReport) -> dict[str, int]:
    tiers = _tiers(report.summary["per_vector"])
    if tiers is None:
        raise InsufficientDataError("grid report has vectors without CAS or DR")
    return tiers


def figure(report: ExperimentReport) -> str:
    """SVG rendering of a study report."""
    from . import svg

    if report.study == "grid":
        pv = report.summary["per_vector"]
        return svg.bar_chart("Mean CAS by vector", {k: v["cas"]["mean"] or 0.0 for k, v in pv.items()}, "mean CAS")
    if report.study == "decay":
        series: dict[str, list] = {}
        for r in report.rows:
            series.setdefault(r["vector"], []).append((r["t_h"], r["cas_mean"]))
        return svg.line_chart("CAS decay under churn", series, "hours since deployment", "mean CAS")
    if report.study == "providers":
        cells = {(r["vector"], r["provider"]): r["cas_mean"] for r in report.rows if r["cas_mean"] is not None}
        return svg.heatmap("CAS by vector and provider", [v.value for v in VECTORS], [p.value for p in PROVIDERS], cells)
    if report.study == "scatter":
        pts = [(r["mean_cas"], r["final_posterior"]) for r in report.rows]
        zone = (report.summary["ideal_zone"]["cas_min"], report.summary["ideal_zone"]["posterior_min"])
        return svg.scatter("Mean CAS vs final posterior", pts, "mean CAS", "P(H|E)", zone)
    raise ValueError(f"no figure for study {report.study!r}")


STUDIES = {
    "grid": run_grid,
    "decay": run_decay,
    "providers": run_provider_analysis,
    "scatter": run_scatter_study,
}
