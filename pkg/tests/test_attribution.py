import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from beaconlab.adversary import AttackerLevel
from beaconlab.attribution import (
    NOT_REACHED,
    AttributionParams,
    PosteriorState,
    apply_likelihoods,
    build_trace,
    confidence_series,
    decoy_ratio,
    first_crossing,
    measure_ctd,
    pearson,
    uniform_prior,
)
from beaconlab.errors import InsufficientDataError, UndefinedStatisticError
from beaconlab.scoring import score_event
from beaconlab.taxonomy import generate_fleet

ratios = st.lists(st.floats(0.01, 10.0), min_size=10, max_size=10)


@given(st.lists(ratios, min_size=1, max_size=30))
def test_posterior_stays_on_simplex(seq):
    state = uniform_prior(10)
    for rs in seq:
        state = apply_likelihoods(state, rs)
        assert all(p >= 0 for p in state.probabilities)
        assert math.fsum(state.probabilities) == pytest.approx(1.0, abs=1e-9)
    assert state.callbacks_consumed == len(seq)


@given(st.floats(0.01, 10.0), st.integers(1, 20))
def test_identical_ratios_are_uninformative(lr, k):
    start = apply_likelihoods(uniform_prior(10), [1.0 + i / 10 for i in range(10)])
    state = start
    for _ in range(k):
        state = apply_likelihoods(state, [lr] * 10)
    assert state.probabilities == pytest.approx(start.probabilities, abs=1e-12)


def test_strong_evidence_converges():
    params = AttributionParams(gamma=0.9, decoy_low=0.9, decoy_high=1.1)
    state = uniform_prior(params.n_candidates)
    for i in range(50):
        rs = [
            1.0 + params.gamma * 0.9 if c == state.true_actor else decoy_ratio(f"e{i}", c, params.decoy_low, params.decoy_high)
            for c in state.candidates
        ]
        state = apply_likelihoods(state, rs)
    assert state.true_posterior > 0.99


def test_decoy_ratio_in_band_and_deterministic():
    for i in range(200):
        r = decoy_ratio(f"k{i}", "actor-03", 0.5, 1.5)
        assert 0.5 <= r <= 1.5
    assert decoy_ratio("x", "a", 0.9, 1.1) == decoy_ratio("x", "a", 0.9, 1.1)


def test_posterior_state_invariants():
    with pytest.raises(ValueError):
        PosteriorState(("a", "b"), (0.7, 0.7), "a")
    with pytest.raises(ValueError):
        PosteriorState(("a", "b"), (0.5, 0.5), "c")
    assert PosteriorState(("b", "a"), (0.5, 0.5), "a").map_estimate() == "a"


def test_confidence_full_cas_detects_at_once():
    assert confidence_series([1.0], 1.0) == [1.0]
    assert first_crossing([1.0], 0.85) == 1


@given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.floats(0.1, 3.0))
def test_confidence_monotone(cas_values, rho):
    conf = confidence_series(cas_values, rho)
    assert all(0.0 <= c <= 1.0 for c in conf)
    assert all(b >= a for a, b in zip(conf, conf[1:]))


def test_first_crossing_not_reached():
    assert first_crossing([0.1, 0.2], 0.85) == NOT_REACHED


def test_ctd_matches_trace_confidence(cfg):
    beacon = generate_fleet(42)[0]
    profile = cfg.adversary.profiles[AttackerLevel.ADVANCED]
    scorer = lambda e: score_event(e, cfg.scoring)
    params = cfg.attribution
    trace = build_trace(beacon, profile, 9, cfg.adversary, scorer, params, params.ctd_budget)
    assert measure_ctd(beacon, profile, 9, cfg.adversary, scorer, params) == trace.ctd
    with pytest.raises(ValueError):
        measure_ctd(beacon, profile, 9, cfg.adversary, scorer, params, threshold=1.0)


def test_trace_lengths(cfg):
    beacon = generate_fleet(42)[3]
    scorer = lambda e: score_event(e, cfg.scoring)
    trace = build_trace(beacon, cfg.adversary.profiles[AttackerLevel.APT], 1, cfg.adversary, scorer, cfg.attribution, 5)
    assert len(trace.posterior_series) == len(trace.cas_series) == len(trace.confidence_series) == 5
    assert 0.0 <= trace.final_posterior <= 1.0


def test_pearson_errors():
    with pytest.raises(InsufficientDataError):
        pearson([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(UndefinedStatisticError):
        pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
