"""Acceptance gate: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or ``python tests/test_acceptance.py``. Reference values below are
copied from the published tables, not from the anchors file.
"""

import contextlib
import io
import json
import math
import sys
import tempfile
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import mpmath as mp  # noqa: E402

from beaconlab import config as cfgmod  # noqa: E402
from beaconlab import experiments as ex  # noqa: E402
from beaconlab.attribution import apply_likelihoods, uniform_prior  # noqa: E402
from beaconlab.cli import main  # noqa: E402
from beaconlab.scoring import ChurnState, IamTelemetry, cas, ephemeral_penalty, iam_coverage  # noqa: E402
from beaconlab.stats import kruskal_wallis, one_way_anova, two_sample_t  # noqa: E402

SEEDS = (42, 1, 2)
REPLICAS = 50

TABLE1 = [
    ((0.92, 0.05, 0.70, 0.40), 0.707),
    ((0.55, 0.10, 0.45, 0.20), 0.417),
    ((0.98, 0.02, 0.95, 0.60), 0.896),
    ((0.70, 0.65, 0.55, 0.35), 0.324),
    ((0.50, 0.30, 0.40, 0.50), 0.367),
    ((0.60, 0.55, 0.65, 0.45), 0.398),
]
DECAY_EXAMPLES = [((1, 0, 0), 0.049), ((8, 2, 1), 0.528), ((24, 5, 3), 0.884)]
TABLE3 = {
    "IamCanaryRole": (0.450, 0.873),
    "TerraformModule": (0.398, 0.768),
    "S3PresignedUrl": (0.383, 0.890),
    "ContainerImage": (0.325, 0.736),
    "K8sSecret": (0.328, 0.741),
    "ServerlessTrigger": (0.318, 0.611),
}
OVERALL_CAS = 0.373

RESULTS: list[tuple[str, bool, str]] = []


@lru_cache(maxsize=None)
def _cfg(seed: int, replicas: int = REPLICAS):
    return cfgmod.default_config().with_experiment(master_seed=seed, replicas=replicas)


@lru_cache(maxsize=None)
def _grid(seed: int):
    return ex.run_grid(_cfg(seed))


@lru_cache(maxsize=None)
def _providers(seed: int):
    return ex.run_provider_analysis(_cfg(seed))


# --- criteria -----------------------------------------------------------------


def c1_table_rows():
    worst = max(abs(cas(c) - want) for c, want in TABLE1)
    return worst <= 0.001, f"max |CAS - table| = {worst:.5f}"


def c2_decay_examples():
    worst = max(abs(ephemeral_penalty(ChurnState(*trs, 0.05)) - want) for trs, want in DECAY_EXAMPLES)
    return worst <= 0.001, f"max |E_p - example| = {worst:.5f}"


def c3_grid():
    cas_dev = dr_dev = overall_dev = 0.0
    order_ok = True
    for seed in SEEDS:
        pv = _grid(seed).summary["per_vector"]
        for name, (cas_t, dr_t) in TABLE3.items():
            cas_dev = max(cas_dev, abs(pv[name]["cas"]["mean"] - cas_t))
            dr_dev = max(dr_dev, abs(pv[name]["dr"]["mean"] - dr_t))
        drs = {n: pv[n]["dr"]["mean"] for n in TABLE3}
        order_ok &= max(drs, key=drs.get) == "S3PresignedUrl" and min(drs, key=drs.get) == "ServerlessTrigger"
        overall_dev = max(overall_dev, abs(_grid(seed).summary["overall"]["cas"]["mean"] - OVERALL_CAS))
    ok = cas_dev <= 0.05 and dr_dev <= 0.07 and order_ok and overall_dev <= 0.05
    return ok, f"max CAS dev {cas_dev:.3f}, max DR dev {dr_dev:.3f}, overall dev {overall_dev:.3f}, DR order {'ok' if order_ok else 'wrong'}"


def c4_decay():
    report = ex.run_decay(_cfg(42))
    pv = report.summary["per_vector"]
    starts = [b["cas_start"] for b in pv.values()]
    ends = {n: b["cas_end"] for n, b in pv.items()}
    ps = [report.tests[f"welch_{n}"]["p_value"] for n in pv]
    ok = (
        all(0.76 <= s <= 0.82 for s in starts)
        and all(0.15 <= e <= 0.26 for e in ends.values())
        and min(ends, key=ends.get) == "K8sSecret"
        and max(ends, key=ends.get) == "IamCanaryRole"
        and max(ps) < 0.001
    )
    return ok, (
        f"CAS0 {min(starts):.3f}-{max(starts):.3f}, CAS48 {min(ends.values()):.3f}-{max(ends.values()):.3f}, "
        f"lowest {min(ends, key=ends.get)}, highest {max(ends, key=ends.get)}, max Welch p {max(ps):.2g}"
    )


def c5_ctd():
    worst = 0.0
    s3n = []
    for seed in SEEDS:
        for row in _grid(seed).rows:
            if row["ctd_mean"] is not None:
                worst = max(worst, row["ctd_mean"])
        s3n.append(_grid(seed).row(vector="S3PresignedUrl", level="Naive")["ctd_mean"])
    ok = worst < 5.0 and all(2.3 <= x <= 4.3 for x in s3n)
    return ok, f"max cell CTD {worst:.2f}, S3 x Naive {', '.join(f'{x:.2f}' for x in s3n)}"


def c6_nulls():
    level_ps = []
    for seed in SEEDS:
        t = _grid(seed).tests
        level_ps += [t[k]["p_value"] for k in ("anova_cas_by_level", "anova_posterior_by_level", "anova_ctd_by_level")]
    kw_ps = [_providers(seed).tests["kruskal_wallis_cas_by_provider"]["p_value"] for seed in SEEDS]
    scatter = ex.run_scatter_study(_cfg(42, 200)).summary
    ok = min(level_ps) > 0.05 and min(kw_ps) > 0.05 and scatter["ideal_zone_count"] == 0 and scatter["max_posterior"] <= 0.55
    return ok, (
        f"min level ANOVA p {min(level_ps):.3f}, min provider KW p {min(kw_ps):.3f}, "
        f"ideal zone {scatter['ideal_zone_count']}, max posterior {scatter['max_posterior']:.4f}"
    )


def c7_properties():
    rng = np.random.default_rng(2024)
    violations = 0
    comps = rng.random((10_000, 4))
    bumps = rng.random((10_000, 4)) * 0.2
    for c, d in zip(comps, bumps):
        base = cas(tuple(c))
        violations += not 0.0 <= base <= 1.0
        for i in range(4):
            up = c.copy()
            up[i] = min(1.0, up[i] + d[i])
            moved = cas(tuple(up))
            violations += (moved > base + 1e-12) if i == 1 else (moved < base - 1e-12)
    for _ in range(2_000):
        t, r, s, delta = rng.uniform(0, 100), int(rng.integers(0, 20)), int(rng.integers(0, 20)), rng.uniform(0.001, 1)
        violations += ephemeral_penalty(ChurnState(t, r, s, delta)) != ephemeral_penalty(ChurnState(t + 2 * r + 3 * s, 0, 0, delta))
        n_a, k, cross = int(rng.integers(8, 1000)), int(rng.integers(1, 4)), bool(rng.random() < 0.5)
        violations += abs(iam_coverage(IamTelemetry(n_a, k, cross)) - (0.8 + 0.1 * (k > 1) + 0.1 * cross)) > 1e-12
    state = uniform_prior(10)
    for _ in range(2_000):
        state = apply_likelihoods(state, list(rng.uniform(0.01, 10, size=10)))
        violations += abs(math.fsum(state.probabilities) - 1.0) > 1e-9 or min(state.probabilities) < 0
    for _ in range(300):
        gs = [list(np.round(rng.normal(size=int(rng.integers(3, 10))), 3)) for _ in range(3)]
        a = kruskal_wallis(gs).statistic
        b = kruskal_wallis([[x ** 3 + 7 * x for x in g] for g in gs]).statistic
        violations += abs(a - b) > 1e-9 * max(1.0, abs(a))
        f = one_way_anova(gs).statistic
        g = one_way_anova([[x + 3.5 for x in g] for g in gs]).statistic
        violations += abs(f - g) > 1e-6 * max(1.0, abs(f))
    return violations == 0, f"{violations} violations"


def c8_reference():
    fixtures = json.loads((Path(__file__).parent / "data" / "stats_fixtures.json").read_text())
    runners = {
        "anova": lambda fx: one_way_anova(fx["groups"]),
        "kruskal": lambda fx: kruskal_wallis(fx["groups"]),
        "welch": lambda fx: two_sample_t(fx["a"], fx["b"]),
    }
    bad = 0
    for fx in fixtures:
        got = runners[fx["test"]](fx)
        for key, value in (("statistic", got.statistic), ("p_value", got.p_value)):
            want = mp.mpf(fx["expected"][key])
            bad += not abs(mp.mpf(value) - want) <= mp.mpf("5e-5") * abs(want)
    return bad == 0 and len(fixtures) == 10, f"{len(fixtures)} fixtures, {bad} mismatches at 4 significant digits"


def c9_cli_determinism():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        with contextlib.redirect_stdout(io.StringIO()):
            codes = [
                main(["grid", "--seed", "42", "--jobs", "1", "-o", str(tmp / "a")]),
                main(["grid", "--seed", "42", "--jobs", "1", "-o", str(tmp / "b")]),
                main(["grid", "--seed", "42", "--jobs", "4", "-o", str(tmp / "c")]),
            ]
        same = all(
            (tmp / "a" / name).read_bytes() == (tmp / d / name).read_bytes()
            for d in ("b", "c") for name in ("grid.csv", "grid_tests.json")
        )
    return codes == [0, 0, 0] and same, f"exit codes {codes}, outputs {'identical' if same else 'differ'}"


CRITERIA = [
    ("1 table rows", c1_table_rows),
    ("2 decay examples", c2_decay_examples),
    ("3 grid CAS/DR", c3_grid),
    ("4 decay study", c4_decay),
    ("5 callbacks to detect", c5_ctd),
    ("6 null results", c6_nulls),
    ("7 property suites", c7_properties),
    ("8 mpmath reference", c8_reference),
    ("9 CLI determinism", c9_cli_determinism),
]


def _line(name: str, ok: bool, detail: str) -> str:
    return f"{'PASS' if ok else 'FAIL'} criterion {name}: {detail}"


@pytest.mark.slow
@pytest.mark.parametrize("name,fn", CRITERIA, ids=[n for n, _ in CRITERIA])
def test_criterion(name, fn):
    ok, detail = fn()
    RESULTS.append((name, ok, detail))
    print(_line(name, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for name, fn in CRITERIA:
        ok, detail = fn()
        failed += not ok
        print(_line(name, ok, detail), flush=True)
    sys.exit(1 if failed else 0)
